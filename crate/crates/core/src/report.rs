//! Serializable summaries of an unmixing run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::{CountConstraint, Dictionary, PixelCoord};
use crate::error::{Error, Result};
use crate::io::{columns_to_csv, write_atomic};
use crate::m2pals::{M2palsOptions, UnmixingResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionarySelection {
    pub index: usize,
    pub id: String,
    pub name: String,
    pub constraint: CountConstraint,
    /// The atom set `Kᵢ`, sorted.
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSelection {
    pub column: usize,
    pub dictionary: usize,
    pub dictionary_id: String,
    pub atom: usize,
    pub label: String,
    pub pixel: Option<PixelCoord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub dictionaries: Vec<DictionarySelection>,
    pub columns: Vec<ColumnSelection>,
}

impl SelectionReport {
    /// `dicts`/`constraints` are the caller's, before lower-bound normalization.
    pub fn new(result: &UnmixingResult, dicts: &[Dictionary], constraints: &[CountConstraint]) -> Self {
        let sets = result.selected_sets(dicts.len());
        let dictionaries = dicts
            .iter()
            .zip(constraints)
            .zip(sets)
            .enumerate()
            .map(|(index, ((d, &constraint), selected))| DictionarySelection {
                index,
                id: d.id.clone(),
                name: d.name.clone(),
                constraint,
                selected,
            })
            .collect();
        let columns = result
            .sources
            .iter()
            .enumerate()
            .map(|(column, s)| {
                let d = &dicts[s.dictionary];
                ColumnSelection {
                    column,
                    dictionary: s.dictionary,
                    dictionary_id: d.id.clone(),
                    atom: s.atom,
                    label: format!("{}:{}", d.id, d.atom_label(s.atom)),
                    pixel: d.pixel(s.atom),
                }
            })
            .collect();
        SelectionReport { dictionaries, columns }
    }

    pub fn pixels(&self) -> Vec<Option<PixelCoord>> {
        self.columns.iter().map(|c| c.pixel).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rank: usize,
    pub metric: String,
    pub nonnegative_b: bool,
    pub nonnegative_a_proxy: bool,
    pub seed: u64,
    pub max_iterations: usize,
    pub rel_change_tol: f64,
    pub relative_error: f64,
    pub initial_error: f64,
    pub iterations: usize,
    pub best_iteration: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    pub contract_violations: Vec<String>,
}

impl RunReport {
    pub fn new(result: &UnmixingResult, opts: &M2palsOptions, data_norm: f64) -> Self {
        RunReport {
            rank: result.a.cols(),
            metric: opts.metric.name().into(),
            nonnegative_b: opts.nonnegative_b,
            nonnegative_a_proxy: opts.nonnegative_a_proxy,
            seed: opts.rng_seed,
            max_iterations: opts.max_iterations,
            rel_change_tol: opts.rel_change_tol,
            relative_error: result.relative_error,
            initial_error: result.initial_error,
            iterations: result.iterations,
            best_iteration: result.best_iteration,
            converged: result.converged,
            residual_history: result.residual_history.clone(),
            contract_violations: result.contract_violations(data_norm, opts.max_iterations),
        }
    }
}

/// Header of `abundances.raw`: `r` maps of `height × width`, float64 little-endian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbundanceHeader {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub dtype: String,
    pub interleave: String,
    pub labels: Vec<String>,
}

/// Values of abundance map `k` in row-major pixel order.
pub fn abundance_map(result: &UnmixingResult, k: usize) -> Vec<f64> {
    result.b.column(k).to_vec()
}

pub fn abundance_bytes(result: &UnmixingResult) -> Vec<u8> {
    result.b.as_col_major().iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Writes `endmembers.csv`, `abundances.raw` + `.json`, `selection.json` and `report.json` into `dir`.
pub fn write_outputs(
    dir: &Path,
    result: &UnmixingResult,
    selection: &SelectionReport,
    report: &RunReport,
    height: usize,
    width: usize,
) -> Result<()> {
    if height * width != result.b.rows() {
        return Err(Error::dims("abundance maps", result.b.rows(), format!("{height}x{width}")));
    }
    std::fs::create_dir_all(dir)?;
    let labels: Vec<String> = selection.columns.iter().map(|c| c.label.clone()).collect();
    write_atomic(&dir.join("endmembers.csv"), columns_to_csv(&result.a, Some(&labels)).as_bytes())?;
    write_atomic(&dir.join("abundances.raw"), &abundance_bytes(result))?;
    let header = AbundanceHeader {
        height,
        width,
        bands: result.b.cols(),
        dtype: "float64".into(),
        interleave: "bsq".into(),
        labels,
    };
    write_json(&dir.join("abundances.json"), &header)?;
    write_json(&dir.join("selection.json"), selection)?;
    write_json(&dir.join("report.json"), report)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}
