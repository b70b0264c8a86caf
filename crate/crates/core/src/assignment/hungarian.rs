//! Rectangular linear assignment (rows ≤ columns) by shortest augmenting paths
//! with dual potentials, plus a lexicographic refinement among optimal ties.

use crate::error::{Error, Result};

/// Row-major `rows × cols` cost table.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("CostMatrix", rows * cols, data.len()));
        }
        if data.iter().any(|c| !c.is_finite()) {
            return Err(Error::Contract("assignment costs must be finite".into()));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Contract("ragged cost rows".into()));
        }
        CostMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `assignment[i]` is the column matched to row `i`.
    pub assignment: Vec<usize>,
    pub total_cost: f64,
}

struct Solved {
    assignment: Vec<usize>,
    row_potential: Vec<f64>,
    col_potential: Vec<f64>,
}

/// Shortest-augmenting-path Hungarian method on the sub-table selected by
/// `rows` × `cols` (indices into `cost`). Requires `rows.len() ≤ cols.len()`.
/// Returned potentials satisfy `u_i + v_j ≤ c_ij` with equality on matched
/// pairs and `v_j ≤ 0`, zero on unmatched columns.
fn solve(cost: &CostMatrix, rows: &[usize], cols: &[usize]) -> Solved {
    let n = rows.len();
    let m = cols.len();
    debug_assert!(n <= m);
    let c = |i: usize, j: usize| cost.get(rows[i - 1], cols[j - 1]);

    // 1-based with a virtual column 0, after the classic e-maxx formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = c(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    Solved {
        assignment,
        row_potential: u[1..].to_vec(),
        col_potential: v[1..].to_vec(),
    }
}

fn sum_cost(cost: &CostMatrix, pairs: impl Iterator<Item = (usize, usize)>) -> f64 {
    pairs.map(|(i, j)| cost.get(i, j)).sum()
}

/// Minimum-cost assignment of every row to a distinct column. Among optimal
/// assignments the lexicographically smallest column vector is returned;
/// costs within a relative `1e-12` of each other count as ties.
pub fn hungarian(cost: &CostMatrix) -> Result<Assignment> {
    let (n, m) = (cost.rows(), cost.cols());
    if n > m {
        return Err(Error::Contract(format!(
            "assignment infeasible: {n} left nodes but only {m} right nodes"
        )));
    }
    if n == 0 {
        return Ok(Assignment { assignment: vec![], total_cost: 0.0 });
    }

    let all_rows: Vec<usize> = (0..n).collect();
    let all_cols: Vec<usize> = (0..m).collect();
    let base = solve(cost, &all_rows, &all_cols);
    let optimum = sum_cost(cost, base.assignment.iter().copied().enumerate());
    let scale = cost.data.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
    let tol = 1e-12 * scale * n as f64;

    // Rows are fixed in order. For row i, any column below the current optimal
    // completion's choice that is tight under the optimal duals is tried; it is
    // kept if the rest can still be completed at the optimal total.
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut fixed_cost = 0.0;
    let mut completion = base.assignment.clone();
    let mut taken = vec![false; m];
    for i in 0..n {
        let current = completion[i];
        let mut pick = current;
        for j in 0..current {
            if taken[j] {
                continue;
            }
            let reduced = cost.get(i, j) - base.row_potential[i] - base.col_potential[j];
            if reduced > tol {
                continue;
            }
            let rest_rows: Vec<usize> = (i + 1..n).collect();
            let rest_cols: Vec<usize> = (0..m).filter(|&c| !taken[c] && c != j).collect();
            let sub = solve(cost, &rest_rows, &rest_cols);
            let sub_cost = sum_cost(cost, sub.assignment.iter().enumerate().map(|(k, &c)| (rest_rows[k], rest_cols[c])));
            if fixed_cost + cost.get(i, j) + sub_cost <= optimum + tol {
                pick = j;
                for (k, &c) in sub.assignment.iter().enumerate() {
                    completion[i + 1 + k] = rest_cols[c];
                }
                break;
            }
        }
        taken[pick] = true;
        fixed_cost += cost.get(i, pick);
        chosen.push(pick);
    }

    let total_cost = sum_cost(cost, chosen.iter().copied().enumerate());
    Ok(Assignment {
        assignment: chosen,
        total_cost,
    })
}
