//! Projection of proxy endmembers onto dictionary atoms under per-dictionary
//! count constraints.
//!
//! The dictionary of each column is chosen by a bipartite assignment between the
//! `r` columns and `countᵢ` copies of each dictionary `Dᵢ`, weighted by the
//! column's distance to the nearest atom of `Dᵢ`. Atoms are then resolved per
//! dictionary so that no atom is used twice. When that resolution has to pay
//! more than the dictionary-level bound, the joint atom-level problem is solved
//! exactly instead.

mod flow;
mod hungarian;

use rayon::prelude::*;
use serde::Serialize;

pub use hungarian::{hungarian, Assignment, CostMatrix};

use crate::dictionary::{CountConstraint, CountKind, Dictionary};
use crate::error::{Error, Issue, Result};
use crate::linalg::{Matrix, Metric};

/// A (dictionary, atom, column) pair whose distance was undefined and was
/// replaced by the metric's maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlaggedPair {
    pub dictionary: usize,
    pub atom: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    pub metric: Metric,
    /// `dict_costs[i][j] = min_k per_atom_costs[i][k][j]`
    pub dict_costs: Vec<Vec<f64>>,
    /// Lowest-index minimizer behind `dict_costs[i][j]`.
    pub best_atom: Vec<Vec<usize>>,
    pub per_atom_costs: Vec<Vec<Vec<f64>>>,
    pub flagged: Vec<FlaggedPair>,
}

impl CostTable {
    pub fn rank(&self) -> usize {
        self.dict_costs.first().map_or(0, Vec::len)
    }

    pub fn dictionaries(&self) -> usize {
        self.dict_costs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignmentSolution {
    pub column_to_dict: Vec<usize>,
    pub column_to_atom: Vec<usize>,
    pub total_cost: f64,
}

impl AssignmentSolution {
    /// Sum of the per-column atom costs, in column order.
    pub fn recompute_cost(&self, cost: &CostTable) -> f64 {
        self.column_to_dict
            .iter()
            .zip(&self.column_to_atom)
            .enumerate()
            .map(|(j, (&i, &k))| cost.per_atom_costs[i][k][j])
            .sum()
    }

    pub fn counts(&self, dictionaries: usize) -> Vec<usize> {
        let mut counts = vec![0; dictionaries];
        for &i in &self.column_to_dict {
            counts[i] += 1;
        }
        counts
    }

    /// Selected atom indices per dictionary (the sets `Kᵢ`), sorted.
    pub fn selected_sets(&self, dictionaries: usize) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); dictionaries];
        for (&i, &k) in self.column_to_dict.iter().zip(&self.column_to_atom) {
            sets[i].push(k);
        }
        for s in &mut sets {
            s.sort_unstable();
        }
        sets
    }
}

/// Distance of every column of `a` to every atom of every dictionary.
pub fn build_cost(a: &Matrix, dicts: &[Dictionary], metric: Metric) -> Result<CostTable> {
    if dicts.is_empty() {
        return Err(Error::Contract("build_cost needs at least one dictionary".into()));
    }
    for d in dicts {
        if d.is_empty() {
            return Err(Error::Contract(format!("dictionary `{}` is empty", d.id)));
        }
        if d.bands() != a.rows() {
            return Err(Error::dims("build_cost", format!("{} bands", a.rows()), format!("`{}` with {}", d.id, d.bands())));
        }
    }
    let r = a.cols();
    let fallback = metric.max_cost();
    let per_dict: Vec<(Vec<Vec<f64>>, Vec<FlaggedPair>)> = dicts
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let mut flagged = Vec::new();
            let table = (0..d.len())
                .map(|k| {
                    (0..r)
                        .map(|j| match (metric.assignment_cost(a.column(j), d.atom(k)), fallback) {
                            (Ok(c), _) => Ok(c),
                            (Err(Error::DistanceUndefined(_)), Some(max)) => {
                                flagged.push(FlaggedPair { dictionary: i, atom: k, column: j });
                                Ok(max)
                            }
                            (Err(e), _) => Err(e),
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((table, flagged))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut dict_costs = Vec::with_capacity(dicts.len());
    let mut best_atom = Vec::with_capacity(dicts.len());
    let mut per_atom_costs = Vec::with_capacity(dicts.len());
    let mut flagged = Vec::new();
    for (table, f) in per_dict {
        let mut mins = vec![f64::INFINITY; r];
        let mut args = vec![0; r];
        for (k, row) in table.iter().enumerate() {
            for j in 0..r {
                if row[j] < mins[j] {
                    mins[j] = row[j];
                    args[j] = k;
                }
            }
        }
        dict_costs.push(mins);
        best_atom.push(args);
        per_atom_costs.push(table);
        flagged.extend(f);
    }
    flagged.sort_by_key(|f| (f.dictionary, f.column, f.atom));
    Ok(CostTable {
        metric,
        dict_costs,
        best_atom,
        per_atom_costs,
        flagged,
    })
}

fn check_counts(cost: &CostTable, constraints: &[CountConstraint]) -> Result<()> {
    let r = cost.rank();
    let p = cost.dictionaries();
    if constraints.len() != p {
        return Err(Error::infeasible(Issue::ConstraintCountMismatch {
            dictionaries: p,
            constraints: constraints.len(),
        }));
    }
    let mut exact = 0;
    let mut capacity = 0;
    let mut slack = false;
    for (i, c) in constraints.iter().enumerate() {
        let atoms = cost.per_atom_costs[i].len();
        match c.kind {
            CountKind::AtLeast => {
                return Err(Error::infeasible(Issue::UnnormalizedConstraint { dictionary: i.to_string() }))
            }
            CountKind::Exact if c.count > atoms => {
                return Err(Error::infeasible(Issue::CountExceedsAtoms {
                    dictionary: i.to_string(),
                    count: c.count,
                    atoms,
                }))
            }
            CountKind::Exact => {
                exact += c.count;
                capacity += c.count;
            }
            CountKind::AtMost => {
                slack = true;
                capacity += c.count.min(atoms);
            }
        }
    }
    if exact > r {
        return Err(Error::infeasible(Issue::ExactSumExceedsRank { sum: exact, rank: r }));
    }
    if !slack && exact != r {
        return Err(Error::infeasible(Issue::ExactSumMismatch { sum: exact, rank: r }));
    }
    if capacity < r {
        return Err(Error::infeasible(Issue::CapacityBelowRank { capacity, rank: r }));
    }
    Ok(())
}

/// Chooses the dictionary of every column: the columns are matched to
/// `countᵢ` copies of each dictionary (capped by its size for at-most rules)
/// with weights `d(i, j)`. Exact copies must all be used; this is enforced by
/// pricing at-most copies above any achievable cost difference and verified.
pub fn assign_dictionaries(cost: &CostTable, constraints: &[CountConstraint]) -> Result<Vec<usize>> {
    check_counts(cost, constraints)?;
    let r = cost.rank();
    let max_cost = cost.dict_costs.iter().flatten().fold(0.0_f64, |a, &c| a.max(c));
    let penalty = 1.0 + 2.0 * max_cost * r as f64;

    let mut owners = Vec::new();
    let mut node_penalty = Vec::new();
    for (i, c) in constraints.iter().enumerate() {
        let copies = match c.kind {
            CountKind::Exact => c.count,
            _ => c.count.min(cost.per_atom_costs[i].len()),
        };
        for _ in 0..copies {
            owners.push(i);
            node_penalty.push(if c.kind == CountKind::Exact { 0.0 } else { penalty });
        }
    }
    let mut data = Vec::with_capacity(r * owners.len());
    for j in 0..r {
        for (node, &i) in owners.iter().enumerate() {
            data.push(cost.dict_costs[i][j] + node_penalty[node]);
        }
    }
    let table = CostMatrix::new(r, owners.len(), data)?;
    let solved = hungarian(&table)?;
    let mapping: Vec<usize> = solved.assignment.iter().map(|&node| owners[node]).collect();

    let mut used = vec![0; constraints.len()];
    for &i in &mapping {
        used[i] += 1;
    }
    for (i, c) in constraints.iter().enumerate() {
        let ok = match c.kind {
            CountKind::Exact => used[i] == c.count,
            _ => used[i] <= c.count,
        };
        if !ok {
            return Err(Error::infeasible(Issue::CountExceedsAtoms {
                dictionary: i.to_string(),
                count: c.count,
                atoms: used[i],
            }));
        }
    }
    Ok(mapping)
}

/// Picks pairwise-distinct atoms within each dictionary for the columns mapped
/// to it, by an assignment on that dictionary's atom table.
pub fn resolve_atoms(cost: &CostTable, dict_map: &[usize]) -> Result<AssignmentSolution> {
    let r = cost.rank();
    if dict_map.len() != r {
        return Err(Error::dims("resolve_atoms", r, dict_map.len()));
    }
    let mut column_to_atom = vec![0; r];
    for i in 0..cost.dictionaries() {
        let columns: Vec<usize> = (0..r).filter(|&j| dict_map[j] == i).collect();
        if columns.is_empty() {
            continue;
        }
        let atoms = cost.per_atom_costs[i].len();
        if columns.len() > atoms {
            return Err(Error::infeasible(Issue::TooManyColumns {
                dictionary: i.to_string(),
                assigned: columns.len(),
                atoms,
            }));
        }
        let mut data = Vec::with_capacity(columns.len() * atoms);
        for &j in &columns {
            data.extend((0..atoms).map(|k| cost.per_atom_costs[i][k][j]));
        }
        let solved = hungarian(&CostMatrix::new(columns.len(), atoms, data)?)?;
        for (row, &j) in columns.iter().enumerate() {
            column_to_atom[j] = solved.assignment[row];
        }
    }
    let mut sol = AssignmentSolution {
        column_to_dict: dict_map.to_vec(),
        column_to_atom,
        total_cost: 0.0,
    };
    sol.total_cost = sol.recompute_cost(cost);
    Ok(sol)
}

/// Solves the assignment problem for the columns of `a` and returns the
/// matrix of selected raw atoms together with the selection.
pub fn project_onto_dictionaries(
    a: &Matrix,
    dicts: &[Dictionary],
    constraints: &[CountConstraint],
    metric: Metric,
) -> Result<(Matrix, AssignmentSolution)> {
    let cost = build_cost(a, dicts, metric)?;
    let sol = solve_assignment(&cost, constraints)?;
    Ok((selected_atoms(dicts, &sol)?, sol))
}

/// Two-stage solve with exact fallback, on a prebuilt cost table.
pub fn solve_assignment(cost: &CostTable, constraints: &[CountConstraint]) -> Result<AssignmentSolution> {
    let dict_map = assign_dictionaries(cost, constraints)?;
    let lower_bound: f64 = dict_map.iter().enumerate().map(|(j, &i)| cost.dict_costs[i][j]).sum();
    let resolved = resolve_atoms(cost, &dict_map)?;
    if resolved.total_cost <= lower_bound {
        return Ok(resolved);
    }
    // Distinctness forced a detour from the per-column optimum, so the
    // dictionary choice itself may no longer be optimal.
    let joint = flow::joint_assignment(&cost.per_atom_costs, constraints, cost.rank())?;
    let mut sol = AssignmentSolution {
        column_to_dict: joint.iter().map(|p| p.0).collect(),
        column_to_atom: joint.iter().map(|p| p.1).collect(),
        total_cost: 0.0,
    };
    sol.total_cost = sol.recompute_cost(cost);
    Ok(if sol.total_cost < resolved.total_cost { sol } else { resolved })
}

/// Column `j` is atom `column_to_atom[j]` of dictionary `column_to_dict[j]`, copied verbatim.
pub fn selected_atoms(dicts: &[Dictionary], sol: &AssignmentSolution) -> Result<Matrix> {
    let columns: Vec<&[f64]> = sol
        .column_to_dict
        .iter()
        .zip(&sol.column_to_atom)
        .map(|(&i, &k)| dicts[i].atom(k))
        .collect();
    Matrix::from_columns(&columns)
}
