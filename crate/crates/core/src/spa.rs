//! Successive projection algorithm: greedy max-norm column selection with
//! orthogonal deflation of the residual.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaResult {
    /// Selected column indices of `M`, in selection order.
    pub indices: Vec<usize>,
    /// Largest residual column norm at each step.
    pub residual_norms: Vec<f64>,
}

/// Residual norms below this fraction of the largest input column norm count as zero.
const RANK_TOLERANCE: f64 = 1e-12;

pub fn spa(m: &Matrix, r: usize) -> Result<SpaResult> {
    let (rows, cols) = m.shape();
    if r == 0 || r > rows.min(cols) {
        return Err(Error::Contract(format!("spa needs 1 ≤ r ≤ min(m, n) = {}, got {r}", rows.min(cols))));
    }
    let mut residual = m.clone();
    let mut sq_norms: Vec<f64> = (0..cols).map(|j| dot(residual.column(j), residual.column(j))).collect();
    let scale = sq_norms.iter().fold(0.0_f64, |a, &b| a.max(b)).sqrt();
    if scale == 0.0 {
        return Err(Error::Degenerate("spa on an all-zero matrix".into()));
    }

    let mut indices = Vec::with_capacity(r);
    let mut residual_norms = Vec::with_capacity(r);
    for _ in 0..r {
        let mut best = 0;
        for j in 1..cols {
            if sq_norms[j] > sq_norms[best] {
                best = j;
            }
        }
        let norm = sq_norms[best].sqrt();
        if norm <= RANK_TOLERANCE * scale || indices.contains(&best) {
            return Err(Error::RankDeficient {
                found: indices.len(),
                requested: r,
            });
        }
        indices.push(best);
        residual_norms.push(norm);

        let u: Vec<f64> = residual.column(best).iter().map(|x| x / norm).collect();
        for j in 0..cols {
            let col = residual.column_mut(j);
            let c = dot(&u, col);
            for (x, ui) in col.iter_mut().zip(&u) {
                *x -= c * ui;
            }
            // Recomputed rather than downdated so cancellation cannot leave negative norms.
            sq_norms[j] = dot(col, col);
        }
    }
    Ok(SpaResult { indices, residual_norms })
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
