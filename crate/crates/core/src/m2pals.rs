//! Alternating least squares with a multi-dictionary projection step.
//!
//! Each iteration computes a least-squares proxy for `A` with `B` fixed,
//! replaces the proxy by the closest admissible atoms, then refits `B`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assignment::{build_cost, selected_atoms, solve_assignment, AssignmentSolution};
use crate::dictionary::{attribute_pick, normalize_constraints, CountConstraint, CountKind, Dictionary};
use crate::error::{Error, Result};
use crate::linalg::{solve_ls, solve_nnls_from, Matrix, Metric, SolverOptions};
use crate::spa::spa;

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// `A₀` = the data columns picked by SPA.
    Spa,
    Factors { a: Matrix, b: Matrix },
    /// `(dictionary, atom)` per column, indexing the dictionaries as passed in.
    AtomIndices(Vec<(usize, usize)>),
    /// `r` distinct data columns drawn with `rng_seed`.
    RandomColumns,
}

#[derive(Debug, Clone, PartialEq)]
pub struct M2palsOptions {
    pub max_iterations: usize,
    pub rel_change_tol: f64,
    pub nonnegative_b: bool,
    pub nonnegative_a_proxy: bool,
    pub metric: Metric,
    pub init: InitSpec,
    pub rng_seed: u64,
    pub solver: SolverOptions,
}

impl Default for M2palsOptions {
    fn default() -> Self {
        M2palsOptions {
            max_iterations: 50,
            rel_change_tol: 1e-5,
            nonnegative_b: true,
            nonnegative_a_proxy: false,
            metric: Metric::Nip,
            init: InitSpec::Spa,
            rng_seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

impl M2palsOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Contract("max_iterations must be at least 1".into()));
        }
        if !(self.rel_change_tol > 0.0) {
            return Err(Error::Contract("rel_change_tol must be positive".into()));
        }
        self.solver.validate()
    }
}

/// Absolute residuals `‖M − A·Bᵀ‖_F` around the steps of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationTrace {
    pub before: f64,
    pub after_proxy: f64,
    pub after_projection: f64,
    pub after_b_update: f64,
    pub nnls_sweeps: usize,
}

/// Where a selected atom came from, in the caller's dictionary list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AtomSource {
    pub dictionary: usize,
    pub atom: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnmixingResult {
    pub a: Matrix,
    pub b: Matrix,
    /// Selection in the normalized problem (see [`UnmixingResult::dictionaries`]).
    pub selection: AssignmentSolution,
    /// Per column of `A`, the pick mapped back to the input dictionaries.
    pub sources: Vec<AtomSource>,
    /// The dictionaries the selection indexes: the inputs plus any augmented one.
    pub dictionaries: Vec<Dictionary>,
    pub constraints: Vec<CountConstraint>,
    /// Relative error after every iteration; the initialization is not included.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Relative error of the returned factors, the minimum of the history.
    pub relative_error: f64,
    /// Iteration (1-based) whose factors are returned.
    pub best_iteration: usize,
    pub initial_error: f64,
    pub trace: Vec<IterationTrace>,
}

/// Relative slack for the monotonicity checks, plus an absolute floor at
/// `1e-13·‖M‖` so exact fits do not trip on rounding.
const MONOTONE_RTOL: f64 = 1e-10;
const MONOTONE_ATOL: f64 = 1e-13;
const STOP_EPS: f64 = 1e-15;

impl UnmixingResult {
    /// The loop contracts that must hold for every run; returns descriptions of failures.
    pub fn contract_violations(&self, data_norm: f64, max_iterations: usize) -> Vec<String> {
        let mut out = Vec::new();
        let slack = |x: f64| x * (1.0 + MONOTONE_RTOL) + MONOTONE_ATOL * data_norm;
        for (t, tr) in self.trace.iter().enumerate() {
            if tr.after_proxy > slack(tr.before) {
                out.push(format!("iteration {}: A-proxy raised residual {} -> {}", t + 1, tr.before, tr.after_proxy));
            }
            if tr.after_b_update > slack(tr.after_projection) {
                out.push(format!(
                    "iteration {}: B-update raised residual {} -> {}",
                    t + 1,
                    tr.after_projection,
                    tr.after_b_update
                ));
            }
        }
        let min = self.residual_history.iter().cloned().fold(f64::INFINITY, f64::min);
        if self.relative_error != min {
            out.push(format!("returned error {} is not the history minimum {min}", self.relative_error));
        }
        if self.residual_history.len() != self.iterations || self.trace.len() != self.iterations {
            out.push("history length differs from iteration count".into());
        }
        if self.iterations > max_iterations {
            out.push(format!("{} iterations exceed the cap of {max_iterations}", self.iterations));
        }
        out
    }

    /// Selected atoms per input dictionary, sorted.
    pub fn selected_sets(&self, dictionaries: usize) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); dictionaries];
        for s in &self.sources {
            sets[s.dictionary].push(s.atom);
        }
        for s in &mut sets {
            s.sort_unstable();
        }
        sets
    }
}

/// Starting factors. `dicts` are the caller's dictionaries (atom indices refer to them).
pub fn initialize(
    m: &Matrix,
    dicts: &[Dictionary],
    r: usize,
    init: &InitSpec,
    seed: u64,
    solver: &SolverOptions,
) -> Result<(Matrix, Matrix)> {
    let (rows, n) = m.shape();
    let a0 = match init {
        InitSpec::Spa => m.select_columns(&spa(m, r)?.indices),
        InitSpec::RandomColumns => {
            if r > n {
                return Err(Error::Contract(format!("cannot draw {r} columns from {n}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, n, r).into_vec();
            idx.sort_unstable();
            m.select_columns(&idx)
        }
        InitSpec::AtomIndices(picks) => {
            if picks.len() != r {
                return Err(Error::Contract(format!("{} initial atoms for rank {r}", picks.len())));
            }
            let mut cols = Vec::with_capacity(r);
            for &(i, k) in picks {
                let d = dicts
                    .get(i)
                    .ok_or_else(|| Error::Contract(format!("initial dictionary index {i} out of range")))?;
                if k >= d.len() {
                    return Err(Error::Contract(format!("initial atom {k} out of range for `{}`", d.id)));
                }
                cols.push(d.atom(k));
            }
            Matrix::from_columns(&cols)?
        }
        InitSpec::Factors { a, b } => {
            if a.shape() != (rows, r) {
                return Err(Error::dims("initial A", format!("{rows}x{r}"), format!("{:?}", a.shape())));
            }
            if b.shape() != (n, r) {
                return Err(Error::dims("initial B", format!("{n}x{r}"), format!("{:?}", b.shape())));
            }
            return Ok((a.clone(), b.clone()));
        }
    };
    if a0.rows() != rows {
        return Err(Error::dims("initial atoms", rows, a0.rows()));
    }
    let b0 = solve_nnls_from(m, &a0, &Matrix::zeros(n, r), solver)?.b;
    Ok((a0, b0))
}

fn check_counts(sol: &AssignmentSolution, constraints: &[CountConstraint]) -> Result<()> {
    let counts = sol.counts(constraints.len());
    for (i, (c, &used)) in constraints.iter().zip(&counts).enumerate() {
        let ok = match c.kind {
            CountKind::Exact => used == c.count,
            CountKind::AtMost => used <= c.count,
            CountKind::AtLeast => used >= c.count,
        };
        if !ok {
            return Err(Error::Contract(format!(
                "selection uses {used} atoms of dictionary {i}, violating {:?}({})",
                c.kind, c.count
            )));
        }
    }
    Ok(())
}

pub fn m2pals(
    m: &Matrix,
    dicts: &[Dictionary],
    constraints: &[CountConstraint],
    r: usize,
    opts: &M2palsOptions,
) -> Result<UnmixingResult> {
    opts.validate()?;
    let (rows, n) = m.shape();
    if r == 0 || n < r {
        return Err(Error::Contract(format!("rank {r} needs 1 ≤ r ≤ n = {n}")));
    }
    let data_norm = m.frobenius_norm();
    if data_norm == 0.0 {
        return Err(Error::Degenerate("data matrix is all zeros".into()));
    }
    let (norm_dicts, norm_constraints) = normalize_constraints(dicts, constraints, r)?;
    if let Some(d) = norm_dicts.iter().find(|d| d.bands() != rows) {
        return Err(Error::dims("dictionary bands", rows, format!("`{}` with {}", d.id, d.bands())));
    }

    let (mut a, mut b) = initialize(m, dicts, r, &opts.init, opts.rng_seed, &opts.solver)?;
    if opts.nonnegative_b {
        b = b.map(|x| x.max(0.0));
    }
    let residual = |a: &Matrix, b: &Matrix| -> Result<f64> { Ok(m.sub(&a.matmul_t(b)?)?.frobenius_norm()) };
    let initial_error = residual(&a, &b)? / data_norm;

    let mut history = Vec::new();
    let mut trace = Vec::new();
    let mut best: Option<(f64, usize, Matrix, Matrix, AssignmentSolution)> = None;
    let mut prev = initial_error;
    let mut converged = false;
    let mt = m.transpose();

    for t in 1..=opts.max_iterations {
        let before = residual(&a, &b)?;
        let proxy = if opts.nonnegative_a_proxy {
            solve_nnls_from(&mt, &b, &a.map(|x| x.max(0.0)), &opts.solver)?.b
        } else {
            solve_ls(m, &b, &opts.solver)?
        };
        let after_proxy = residual(&proxy, &b)?;

        let cost = build_cost(&proxy, &norm_dicts, opts.metric)?;
        let sel = solve_assignment(&cost, &norm_constraints)?;
        check_counts(&sel, &norm_constraints)?;
        a = selected_atoms(&norm_dicts, &sel)?;
        let after_projection = residual(&a, &b)?;

        let mut nnls_sweeps = 0;
        b = if opts.nonnegative_b {
            let out = solve_nnls_from(m, &a, &b, &opts.solver)?;
            nnls_sweeps = out.sweeps;
            out.b
        } else {
            solve_ls(&mt, &a, &opts.solver)?
        };
        let after_b_update = residual(&a, &b)?;
        trace.push(IterationTrace {
            before,
            after_proxy,
            after_projection,
            after_b_update,
            nnls_sweeps,
        });

        let err = after_b_update / data_norm;
        history.push(err);
        if best.as_ref().is_none_or(|(e, ..)| err < *e) {
            best = Some((err, t, a.clone(), b.clone(), sel));
        }
        if (err - prev).abs() / prev.max(STOP_EPS) < opts.rel_change_tol {
            converged = true;
            break;
        }
        prev = err;
    }

    let (relative_error, best_iteration, a, b, selection) = best.expect("at least one iteration runs");
    let sources = selection
        .column_to_dict
        .iter()
        .zip(&selection.column_to_atom)
        .map(|(&i, &k)| {
            let (dictionary, atom) = attribute_pick(&norm_dicts, i, k);
            AtomSource { dictionary, atom }
        })
        .collect();
    Ok(UnmixingResult {
        a,
        b,
        selection,
        sources,
        dictionaries: norm_dicts,
        constraints: norm_constraints,
        iterations: history.len(),
        residual_history: history,
        converged,
        relative_error,
        best_iteration,
        initial_error,
        trace,
    })
}

/// Single-dictionary case: `r` distinct atoms from `d`.
pub fn mpals(m: &Matrix, d: &Dictionary, r: usize, opts: &M2palsOptions) -> Result<UnmixingResult> {
    m2pals(m, std::slice::from_ref(d), &[CountConstraint::exact(r)], r, opts)
}

/// Every pixel of `m` as an atom, for the pure-pixel setting.
pub fn self_dictionary(m: &Matrix, width: usize) -> Result<Dictionary> {
    let pixels = (0..m.cols()).map(|j| crate::dictionary::PixelCoord::of_column(j, width)).collect();
    let mut d = Dictionary::from_pixels("self", m.clone(), pixels)?;
    d.name = "image".into();
    Ok(d)
}
