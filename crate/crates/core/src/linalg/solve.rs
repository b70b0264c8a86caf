//! Least-squares and nonnegative least-squares updates for one factor of
//! `M ≈ A·Bᵀ` with the other factor held fixed.

use nalgebra::{DMatrix, SymmetricEigen};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Cap on block-coordinate sweeps per NNLS call.
    pub max_inner_iterations: usize,
    /// Absolute tolerance on the projected gradient of `½‖M − A·Bᵀ‖²_F`.
    pub kkt_tolerance: f64,
    /// Ridge added to the Gram matrix when it is singular or ill-conditioned.
    pub ridge_epsilon: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_inner_iterations: 100,
            kkt_tolerance: 1e-8,
            ridge_epsilon: 1e-10,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.kkt_tolerance > 0.0) {
            return Err(Error::Contract("kkt_tolerance must be positive".into()));
        }
        if !(self.ridge_epsilon >= 0.0) {
            return Err(Error::Contract("ridge_epsilon must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Solves `G·X = rhs` for symmetric positive semidefinite `G`, falling back to
/// `(G + εI)` when the eigenvalue ratio exceeds `1/ε`, and to a truncated
/// pseudo-inverse when `ε = 0` and `G` is singular.
fn solve_gram(gram: &DMatrix<f64>, rhs: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let ill_conditioned = min <= 0.0 || (ridge > 0.0 && max / min > 1.0 / ridge);

    if !ill_conditioned {
        if let Some(chol) = gram.clone().cholesky() {
            return chol.solve(rhs);
        }
    }
    if ridge > 0.0 {
        let mut shifted = gram.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += ridge;
        }
        if let Some(chol) = shifted.cholesky() {
            return chol.solve(rhs);
        }
    }
    // Pseudo-inverse through the eigendecomposition.
    let cutoff = max * 1e-14;
    let inv = eig.eigenvalues.map(|l| if l > cutoff { 1.0 / l } else { 0.0 });
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&inv) * v.transpose() * rhs
}

/// Returns `A` (m×r) minimizing `‖M − A·Bᵀ‖_F` for data `M` (m×n) and fixed `B` (n×r).
pub fn solve_ls(m: &Matrix, b: &Matrix, opts: &SolverOptions) -> Result<Matrix> {
    if m.cols() != b.rows() {
        return Err(Error::dims("solve_ls", format!("B with {} rows", m.cols()), b.rows()));
    }
    opts.validate()?;
    let bi = b.inner();
    let gram = bi.transpose() * bi;
    let rhs = bi.transpose() * m.inner().transpose();
    let at = solve_gram(&gram, &rhs, opts.ridge_epsilon);
    Ok(Matrix::from_inner(at.transpose()))
}

/// Per-call diagnostics from the block-coordinate NNLS solver.
#[derive(Debug, Clone)]
pub struct NnlsOutcome {
    pub b: Matrix,
    pub sweeps: usize,
    pub kkt_satisfied: bool,
    /// `½‖M − A·Bᵀ‖²_F` at the start and after every sweep.
    pub objective_history: Vec<f64>,
}

/// Returns `B ≥ 0` (n×r) approximately minimizing `‖M − A·Bᵀ‖_F`.
pub fn solve_nnls(m: &Matrix, a: &Matrix, opts: &SolverOptions) -> Result<Matrix> {
    let b0 = Matrix::zeros(m.cols(), a.cols());
    Ok(solve_nnls_from(m, a, &b0, opts)?.b)
}

/// Cyclic block coordinate descent over the columns of `B`, warm-started at `b0`
/// (negative entries of `b0` are clipped first). Each block update is the exact
/// minimizer over that column with the others fixed, and each sweep ends with
/// a per-row active-set solve that is only accepted when it helps, so the objective never
/// increases.
pub fn solve_nnls_from(m: &Matrix, a: &Matrix, b0: &Matrix, opts: &SolverOptions) -> Result<NnlsOutcome> {
    if m.rows() != a.rows() {
        return Err(Error::dims("solve_nnls", format!("A with {} rows", m.rows()), a.rows()));
    }
    if b0.shape() != (m.cols(), a.cols()) {
        return Err(Error::dims(
            "solve_nnls warm start",
            format!("{}x{}", m.cols(), a.cols()),
            format!("{}x{}", b0.rows(), b0.cols()),
        ));
    }
    opts.validate()?;

    let n = m.cols();
    let r = a.cols();
    let ai = a.inner();
    let gram = ai.transpose() * ai; // r×r
    let cross = m.inner().transpose() * ai; // n×r
    let m_sq = m.inner().norm_squared();

    let mut b = b0.inner().map(|v| v.max(0.0));
    let objective = |b: &DMatrix<f64>| 0.5 * (m_sq - 2.0 * b.dot(&cross) + b.dot(&(b * &gram)));

    let mut history = vec![objective(&b)];
    let mut kkt = kkt_holds(&b, &gram, &cross, opts.kkt_tolerance);
    let mut sweeps = 0;
    while !kkt && sweeps < opts.max_inner_iterations {
        for k in 0..r {
            let gkk = gram[(k, k)];
            if gkk <= 0.0 {
                b.column_mut(k).fill(0.0);
                continue;
            }
            for i in 0..n {
                let mut grad = -cross[(i, k)];
                for l in 0..r {
                    grad += b[(i, l)] * gram[(l, k)];
                }
                b[(i, k)] = (b[(i, k)] - grad / gkk).max(0.0);
            }
        }
        polish_rows(&mut b, &gram, &cross, opts.kkt_tolerance);
        sweeps += 1;
        history.push(objective(&b));
        kkt = kkt_holds(&b, &gram, &cross, opts.kkt_tolerance);
    }

    Ok(NnlsOutcome {
        b: Matrix::from_inner(b),
        sweeps,
        kkt_satisfied: kkt,
        objective_history: history,
    })
}

/// Each row of `B` is an independent `r`-dimensional NNLS problem with the
/// shared Gram matrix. A Lawson–Hanson active-set solve, started from the
/// row's current support, replaces the row when it does not raise the row
/// objective.
fn polish_rows(b: &mut DMatrix<f64>, gram: &DMatrix<f64>, cross: &DMatrix<f64>, tol: f64) {
    let r = gram.nrows();
    let row_objective = |x: &[f64], c: &[f64]| -> f64 {
        let mut f = 0.0;
        for k in 0..r {
            let gx: f64 = (0..r).map(|l| gram[(k, l)] * x[l]).sum();
            f += x[k] * (0.5 * gx - c[k]);
        }
        f
    };
    for i in 0..b.nrows() {
        let current: Vec<f64> = (0..r).map(|k| b[(i, k)]).collect();
        let c: Vec<f64> = (0..r).map(|k| cross[(i, k)]).collect();
        let Some(candidate) = active_set_row(gram, &c, &current, tol) else { continue };
        if row_objective(&candidate, &c) <= row_objective(&current, &c) {
            for k in 0..r {
                b[(i, k)] = candidate[k];
            }
        }
    }
}

/// Solves `G_PP·z = c_P`; `None` when the block is not positive definite.
fn solve_passive(gram: &DMatrix<f64>, c: &[f64], passive: &[usize]) -> Option<Vec<f64>> {
    let s = passive.len();
    let g = DMatrix::from_fn(s, s, |p, q| gram[(passive[p], passive[q])]);
    let rhs = DMatrix::from_fn(s, 1, |p, _| c[passive[p]]);
    let z = g.cholesky()?.solve(&rhs);
    Some(z.iter().copied().collect())
}

/// Lawson–Hanson for `min ½xᵀGx − cᵀx, x ≥ 0`, warm-started at feasible `x0`.
fn active_set_row(gram: &DMatrix<f64>, c: &[f64], x0: &[f64], tol: f64) -> Option<Vec<f64>> {
    let r = c.len();
    let mut x = x0.to_vec();
    let mut passive: Vec<usize> = (0..r).filter(|&k| x[k] > 0.0).collect();
    let mut fresh_start = !passive.is_empty();
    for _ in 0..3 * r + 3 {
        if !fresh_start {
            // Negative gradient; add the most violating inactive coordinate.
            let w: Vec<f64> = (0..r).map(|k| c[k] - (0..r).map(|l| gram[(k, l)] * x[l]).sum::<f64>()).collect();
            let entering = (0..r)
                .filter(|k| !passive.contains(k) && w[*k] > tol)
                .max_by(|&p, &q| w[p].total_cmp(&w[q]));
            match entering {
                Some(k) => passive.push(k),
                None => return Some(x),
            }
        }
        fresh_start = false;
        loop {
            let z = solve_passive(gram, c, &passive)?;
            if z.iter().all(|&v| v > 0.0) {
                x.iter_mut().for_each(|v| *v = 0.0);
                for (p, &k) in passive.iter().enumerate() {
                    x[k] = z[p];
                }
                break;
            }
            // Step toward z until the first passive coordinate hits zero.
            let mut alpha = f64::INFINITY;
            let mut blocking = passive[0];
            for (p, &k) in passive.iter().enumerate() {
                if z[p] <= 0.0 {
                    let a = x[k] / (x[k] - z[p]);
                    if a < alpha {
                        alpha = a;
                        blocking = k;
                    }
                }
            }
            for (p, &k) in passive.iter().enumerate() {
                x[k] += alpha * (z[p] - x[k]);
            }
            x[blocking] = 0.0;
            passive.retain(|&k| {
                if x[k] <= 0.0 {
                    x[k] = 0.0;
                }
                x[k] > 0.0
            });
            if passive.is_empty() {
                break;
            }
        }
    }
    None
}

fn kkt_holds(b: &DMatrix<f64>, gram: &DMatrix<f64>, cross: &DMatrix<f64>, tol: f64) -> bool {
    let grad = b * gram - cross;
    b.iter().zip(grad.iter()).all(|(&x, &g)| if x > 0.0 { g.abs() <= tol } else { g >= -tol })
}

/// KKT violation of a candidate `B` for `½‖M − A·Bᵀ‖²_F` subject to `B ≥ 0`:
/// the largest of `|∇|` over positive entries and `max(−∇, 0)` over zero entries,
/// plus any negativity of `B` itself.
pub fn nnls_kkt_violation(m: &Matrix, a: &Matrix, b: &Matrix) -> Result<f64> {
    let gram = a.inner().transpose() * a.inner();
    let cross = m.inner().transpose() * a.inner();
    if b.shape() != cross.shape() {
        return Err(Error::dims("nnls_kkt_violation", format!("{:?}", cross.shape()), format!("{:?}", b.shape())));
    }
    let grad = b.inner() * gram - cross;
    Ok(b.inner()
        .iter()
        .zip(grad.iter())
        .map(|(&x, &g)| {
            if x < 0.0 {
                -x
            } else if x > 0.0 {
                g.abs()
            } else {
                (-g).max(0.0)
            }
        })
        .fold(0.0, f64::max))
}

/// `‖M − A·Bᵀ‖_F / ‖M‖_F`
pub fn relative_error(m: &Matrix, a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows() != m.rows() || b.rows() != m.cols() || a.cols() != b.cols() {
        return Err(Error::dims(
            "relative_error",
            format!("A {}x_, B {}x_ with equal rank", m.rows(), m.cols()),
            format!("A {:?}, B {:?}", a.shape(), b.shape()),
        ));
    }
    let denom = m.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::Degenerate("relative error undefined for an all-zero data matrix".into()));
    }
    let residual = m.inner() - a.inner() * b.inner().transpose();
    Ok(residual.norm() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
        Matrix::from_col_major(rows, cols, data).unwrap()
    }

    #[test]
    fn ls_identity_b() {
        let m = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let a = solve_ls(&m, &Matrix::identity(2), &SolverOptions::default()).unwrap();
        assert_eq!(a, m);
    }

    #[test]
    fn ls_recovers_planted_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a0 = random(5, 2, &mut rng, -1.0, 1.0);
        let b0 = random(6, 2, &mut rng, -1.0, 1.0);
        let m = a0.matmul_t(&b0).unwrap();
        let a = solve_ls(&m, &b0, &SolverOptions::default()).unwrap();
        assert!(a.sub(&a0).unwrap().frobenius_norm() < 1e-10);
    }

    #[test]
    fn ls_zero_b_uses_ridge() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::zeros(2, 1);
        let opts = SolverOptions { ridge_epsilon: 1e-8, ..Default::default() };
        let a = solve_ls(&m, &b, &opts).unwrap();
        assert!(a.is_finite());
        assert_eq!(a, Matrix::zeros(2, 1));
        // ε = 0 takes the pseudo-inverse route.
        let a = solve_ls(&m, &b, &SolverOptions { ridge_epsilon: 0.0, ..Default::default() }).unwrap();
        assert_eq!(a, Matrix::zeros(2, 1));
    }

    #[test]
    fn ls_duplicate_columns_stay_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let col = random(6, 1, &mut rng, 0.0, 1.0);
        let b = Matrix::hcat(&[&col, &col]).unwrap();
        let m = random(4, 6, &mut rng, 0.0, 1.0);
        let a = solve_ls(&m, &b, &SolverOptions::default()).unwrap();
        assert!(a.is_finite());
    }

    #[test]
    fn ls_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random(7, 9, &mut rng, -1.0, 1.0);
        let b = random(9, 3, &mut rng, -1.0, 1.0);
        let a = solve_ls(&m, &b, &SolverOptions::default()).unwrap();
        let resid = m.sub(&a.matmul_t(&b).unwrap()).unwrap().matmul(&b).unwrap();
        assert!(resid.frobenius_norm() <= 1e-8 * m.frobenius_norm() * b.frobenius_norm());
    }

    #[test]
    fn ls_rejects_mismatch() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(
            solve_ls(&m, &Matrix::zeros(2, 1), &SolverOptions::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn nnls_identity_clips_negatives() {
        // Columns of M are pixels; with A = I, Bᵀ = max(M, 0).
        let m = Matrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![-2.0, 4.0, 0.0], vec![3.0, -1.0, 0.0]]).unwrap();
        let b = solve_nnls(&m, &Matrix::identity(3), &SolverOptions::default()).unwrap();
        assert_eq!(b.transpose(), m.map(|v| v.max(0.0)));
    }

    #[test]
    fn nnls_zero_data() {
        let b = solve_nnls(&Matrix::zeros(4, 3), &Matrix::identity(4).select_columns(&[0, 1]), &SolverOptions::default())
            .unwrap();
        assert_eq!(b, Matrix::zeros(3, 2));
    }

    #[test]
    fn nnls_recovers_planted() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let a = random(6, 3, &mut rng, 0.0, 1.0);
        let b0 = random(4, 3, &mut rng, 0.0, 1.0);
        let m = a.matmul_t(&b0).unwrap();
        let opts = SolverOptions { max_inner_iterations: 10_000, ..Default::default() };
        let b = solve_nnls(&m, &a, &opts).unwrap();
        assert!(b.sub(&b0).unwrap().frobenius_norm() < 1e-6);
    }

    #[test]
    fn nnls_zero_atom_column() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let m = Matrix::from_rows(&[vec![2.0], vec![1.0]]).unwrap();
        let b = solve_nnls(&m, &a, &SolverOptions::default()).unwrap();
        assert_eq!(b.as_col_major(), &[2.0, 0.0]);
    }

    #[test]
    fn relative_error_cases() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let zero_a = Matrix::zeros(2, 1);
        let zero_b = Matrix::zeros(2, 1);
        assert_eq!(relative_error(&m, &zero_a, &zero_b).unwrap(), 1.0);
        assert_eq!(relative_error(&m, &m, &Matrix::identity(2)).unwrap(), 0.0);
        assert!(matches!(
            relative_error(&Matrix::zeros(2, 2), &zero_a, &zero_b),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn relative_error_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (m_, n_, r_) = (5, 7, 3);
        let m = random(m_, n_, &mut rng, -1.0, 1.0);
        let a = random(m_, r_, &mut rng, -1.0, 1.0);
        let b = random(n_, r_, &mut rng, -1.0, 1.0);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..m_ {
            for j in 0..n_ {
                let mut approx = 0.0;
                for k in 0..r_ {
                    approx += a.get(i, k) * b.get(j, k);
                }
                num += (m.get(i, j) - approx).powi(2);
                den += m.get(i, j).powi(2);
            }
        }
        let oracle = (num / den).sqrt();
        assert!((relative_error(&m, &a, &b).unwrap() - oracle).abs() < 1e-12);
    }
}
