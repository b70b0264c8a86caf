//! Dense matrices, factor updates, and spectral distances.

mod distance;
mod matrix;
mod solve;

pub use distance::{dist_euclid, dist_mrsa, dist_nip, Metric};
pub use matrix::Matrix;
pub use solve::{
    nnls_kkt_violation, relative_error, solve_ls, solve_nnls, solve_nnls_from, NnlsOutcome, SolverOptions,
};
