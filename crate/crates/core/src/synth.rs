//! Synthetic images with planted pure pixels and the miss-selection benchmark.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::dictionary::{CountConstraint, Dictionary, PixelCoord};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::m2pals::{m2pals, mpals, self_dictionary, M2palsOptions};
use crate::spa::spa;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    /// Noisy, clipped data, `m × n`.
    pub m: Matrix,
    /// Data before noise and clipping.
    pub noise_free: Matrix,
    pub endmembers: Matrix,
    /// `n × r`, rows on the unit simplex; pure pixels have unit rows.
    pub abundances: Matrix,
    /// `pure_indices[k]` is the column holding endmember `k`.
    pub pure_indices: Vec<usize>,
    pub snr_db: f64,
    pub seed: u64,
    /// `‖N‖²_F` of the added noise, before clipping.
    pub noise_energy: f64,
}

impl SyntheticInstance {
    /// SHA-256 of the data and the planted positions, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for v in self.m.as_col_major() {
            h.update(v.to_le_bytes());
        }
        for &p in &self.pure_indices {
            h.update((p as u64).to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of the instance in cell `(snr, trial)`.
pub fn cell_seed(base_seed: u64, snr_db: f64, trial: usize) -> u64 {
    splitmix64(base_seed ^ splitmix64(snr_db.to_bits() ^ splitmix64(trial as u64)))
}

/// Dirichlet(1, …, 1) abundances, `r` pure pixels overwriting random columns,
/// white Gaussian noise at `snr_db` (no noise for `+∞`), negatives clipped.
pub fn generate_synthetic(endmembers: &Matrix, n: usize, snr_db: f64, seed: u64) -> Result<SyntheticInstance> {
    let (m, r) = endmembers.shape();
    if n <= r {
        return Err(Error::Contract(format!("need more pixels than endmembers, got n = {n}, r = {r}")));
    }
    if endmembers.min_value() < 0.0 {
        return Err(Error::Contract("endmembers must be nonnegative".into()));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::Contract(format!("invalid SNR {snr_db}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut abundances = Matrix::zeros(n, r);
    for i in 0..n {
        let draws: Vec<f64> = (0..r).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        for (k, d) in draws.iter().enumerate() {
            abundances.set(i, k, d / total);
        }
    }
    let pure_indices = sample(&mut rng, n, r).into_vec();
    for (k, &j) in pure_indices.iter().enumerate() {
        for l in 0..r {
            abundances.set(j, l, if l == k { 1.0 } else { 0.0 });
        }
    }
    let mut noise_free = endmembers.matmul_t(&abundances)?;
    for (k, &j) in pure_indices.iter().enumerate() {
        noise_free.column_mut(j).copy_from_slice(endmembers.column(k));
    }

    let mut data = noise_free.clone();
    let mut noise_energy = 0.0;
    if snr_db.is_finite() {
        let power = noise_free.frobenius_norm().powi(2);
        let sigma = (power / ((m * n) as f64 * 10f64.powf(snr_db / 10.0))).sqrt();
        for j in 0..n {
            for x in data.column_mut(j) {
                let e: f64 = sigma * rng.sample::<f64, _>(StandardNormal);
                noise_energy += e * e;
                *x = (*x + e).max(0.0);
            }
        }
    }
    Ok(SyntheticInstance {
        m: data,
        noise_free,
        endmembers: endmembers.clone(),
        abundances,
        pure_indices,
        snr_db,
        seed,
        noise_energy,
    })
}

pub const DEFAULT_BANDS: usize = 162;
pub const DEFAULT_RANK: usize = 6;
pub const DEFAULT_ENDMEMBER_SEED: u64 = 0x5eed_0162;

/// Smooth nonnegative spectra: a shared slowly varying baseline plus a few
/// Gaussian bumps per endmember, so that the endmembers are correlated the
/// way reflectance spectra of real materials are.
pub fn default_endmembers(bands: usize, r: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid: Vec<f64> = (0..bands).map(|i| i as f64 / (bands.max(2) - 1) as f64).collect();
    let baseline: Vec<f64> = grid.iter().map(|&t| 0.35 + 0.25 * t).collect();
    let columns: Vec<Vec<f64>> = (0..r)
        .map(|_| {
            let bumps = rng.random_range(2..=4);
            let params: Vec<(f64, f64, f64)> = (0..bumps)
                .map(|_| {
                    (
                        rng.random_range(0.01..0.07),
                        rng.random_range(0.0..1.0),
                        rng.random_range(0.04..0.15),
                    )
                })
                .collect();
            let level = rng.random_range(0.8..1.2);
            grid.iter()
                .zip(&baseline)
                .map(|(&t, &base)| {
                    level * base
                        + params
                            .iter()
                            .map(|&(a, c, w)| a * (-(t - c).powi(2) / (2.0 * w * w)).exp())
                            .sum::<f64>()
                })
                .collect()
        })
        .collect();
    Matrix::from_columns(&columns).expect("generated spectra are finite")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureDictionaries {
    pub dicts: Vec<Dictionary>,
    pub constraints: Vec<CountConstraint>,
    /// Image column of every atom, per dictionary.
    pub columns: Vec<Vec<usize>>,
    /// Position of the pure pixel within each dictionary.
    pub pure_position: Vec<usize>,
}

/// One dictionary per endmember: its pure pixel plus `s − 1` other columns of
/// the data drawn without replacement. For a fixed seed the filler sets are
/// nested in `s`.
pub fn build_pure_dictionaries(inst: &SyntheticInstance, s: usize, seed: u64) -> Result<PureDictionaries> {
    let n = inst.m.cols();
    if s == 0 || s > n {
        return Err(Error::Contract(format!("dictionary size {s} outside 1..={n}")));
    }
    let mut out = PureDictionaries {
        dicts: Vec::new(),
        constraints: Vec::new(),
        columns: Vec::new(),
        pure_position: Vec::new(),
    };
    for (k, &pure) in inst.pure_indices.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(k as u64)));
        let mut others: Vec<usize> = (0..n).filter(|&j| j != pure).collect();
        others.shuffle(&mut rng);
        let mut cols: Vec<usize> = others[..s - 1].to_vec();
        let pos = rng.random_range(0..s);
        cols.insert(pos, pure);
        let pixels = cols.iter().map(|&j| PixelCoord::of_column(j, n)).collect();
        let mut d = Dictionary::from_pixels(format!("d{k}"), inst.m.select_columns(&cols), pixels)?;
        d.name = format!("endmember {k}");
        out.dicts.push(d);
        out.constraints.push(CountConstraint::exact(1));
        out.columns.push(cols);
        out.pure_position.push(pos);
    }
    Ok(out)
}

/// Percentage of selected columns that are not planted pure pixels.
pub fn miss_selection_rate(selected: &[usize], pure_indices: &[usize]) -> Result<f64> {
    let r = pure_indices.len();
    if selected.len() != r {
        return Err(Error::Contract(format!("{} selected columns for rank {r}", selected.len())));
    }
    let missed = selected.iter().filter(|j| !pure_indices.contains(j)).count();
    Ok(100.0 * missed as f64 / r as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Spa,
    /// Self-dictionary matching pursuit with nonnegative abundances.
    Mpnals,
    /// Pure-pixel dictionaries of the given size.
    M2pnals(usize),
}

impl Algorithm {
    pub fn name(self) -> String {
        match self {
            Algorithm::Spa => "spa".into(),
            Algorithm::Mpnals => "mpnals".into(),
            Algorithm::M2pnals(s) => format!("m2pnals-{s:02}"),
        }
    }

    pub const SUPPORTED: &'static str = "spa, mpnals, m2pnals (one run per dictionary size), m2pnals-<size>";

    /// Parses one name; a bare `m2pnals` expands over `dict_sizes`.
    pub fn parse_list(names: &[String], dict_sizes: &[usize]) -> Result<Vec<Algorithm>> {
        let mut out = Vec::new();
        for name in names {
            let lower = name.trim().to_ascii_lowercase();
            match lower.as_str() {
                "spa" => out.push(Algorithm::Spa),
                "mpnals" | "mpanls" => out.push(Algorithm::Mpnals),
                "m2pnals" => out.extend(dict_sizes.iter().map(|&s| Algorithm::M2pnals(s))),
                other => match other.strip_prefix("m2pnals-").map(str::parse::<usize>) {
                    Some(Ok(s)) if s > 0 => out.push(Algorithm::M2pnals(s)),
                    _ => {
                        return Err(Error::Parse(format!(
                            "unknown algorithm `{name}`; supported: {}",
                            Algorithm::SUPPORTED
                        )))
                    }
                },
            }
        }
        if out.is_empty() {
            return Err(Error::Parse("no algorithms requested".into()));
        }
        Ok(out)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub snr_grid: Vec<f64>,
    pub n_trials: usize,
    pub n: usize,
    pub r: usize,
    pub dict_size_grid: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub base_seed: u64,
    pub options: M2palsOptions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            snr_grid: vec![0.0, 10.0, 20.0, 30.0, 50.0],
            n_trials: 20,
            n: 200,
            r: DEFAULT_RANK,
            dict_size_grid: vec![1, 10, 25, 50],
            algorithms: vec![
                Algorithm::Spa,
                Algorithm::Mpnals,
                Algorithm::M2pnals(1),
                Algorithm::M2pnals(10),
                Algorithm::M2pnals(25),
                Algorithm::M2pnals(50),
            ],
            base_seed: 0,
            options: M2palsOptions::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self, endmembers: &Matrix) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Contract("n_trials must be at least 1".into()));
        }
        if self.n < self.r || self.r == 0 {
            return Err(Error::Contract(format!("need 1 ≤ r ≤ n, got r = {}, n = {}", self.r, self.n)));
        }
        if self.snr_grid.is_empty() || self.algorithms.is_empty() {
            return Err(Error::Contract("empty SNR grid or algorithm list".into()));
        }
        if endmembers.cols() != self.r {
            return Err(Error::dims("endmembers", self.r, endmembers.cols()));
        }
        self.options.validate()
    }
}

fn serialize_snr<S: Serializer>(snr: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if snr.is_finite() {
        s.serialize_f64(*snr)
    } else {
        s.serialize_str(&snr_label(*snr))
    }
}

pub fn snr_label(snr: f64) -> String {
    if snr == f64::INFINITY {
        "inf".into()
    } else {
        snr.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub algorithm: String,
    #[serde(serialize_with = "serialize_snr")]
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    pub instance_hash: String,
    pub selected: Vec<usize>,
    pub rate_pct: Option<f64>,
    pub time_s: f64,
    pub iterations: Option<usize>,
    pub relative_error: Option<f64>,
    pub contract_violations: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub algorithm: String,
    #[serde(serialize_with = "serialize_snr")]
    pub snr_db: f64,
    /// Mean over successful trials; `NaN` when every trial failed.
    pub mean_rate_pct: f64,
    pub mean_time_s: f64,
    pub n_trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResults {
    /// Ordered by algorithm (as configured), SNR (as configured), trial.
    pub trials: Vec<TrialRecord>,
    pub summary: Vec<BenchSummary>,
}

impl BenchResults {
    pub fn summary_for(&self, algorithm: Algorithm, snr_db: f64) -> Option<&BenchSummary> {
        let name = algorithm.name();
        self.summary.iter().find(|s| s.algorithm == name && s.snr_db.to_bits() == snr_db.to_bits())
    }

    pub fn trials_for(&self, algorithm: Algorithm, snr_db: f64) -> impl Iterator<Item = &TrialRecord> {
        let name = algorithm.name();
        self.trials
            .iter()
            .filter(move |t| t.algorithm == name && t.snr_db.to_bits() == snr_db.to_bits())
    }

    /// Mean rates without timing, so repeated runs compare byte for byte.
    pub fn rates_csv(&self) -> String {
        let mut out = String::from("algorithm,snr_db,mean_rate_pct,n_trials,failures\n");
        for s in &self.summary {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.algorithm,
                snr_label(s.snr_db),
                s.mean_rate_pct,
                s.n_trials,
                s.failures
            ));
        }
        out
    }

    pub fn bench_csv(&self) -> String {
        let mut out = String::from("algorithm,snr_db,mean_rate_pct,mean_time_s,n_trials\n");
        for s in &self.summary {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.algorithm,
                snr_label(s.snr_db),
                s.mean_rate_pct,
                s.mean_time_s,
                s.n_trials
            ));
        }
        out
    }

    pub fn trials_jsonl(&self) -> String {
        self.trials
            .iter()
            .map(|t| serde_json::to_string(t).expect("trial record serializes") + "\n")
            .collect()
    }
}

fn run_algorithm(
    algorithm: Algorithm,
    inst: &SyntheticInstance,
    r: usize,
    dict_seed: u64,
    opts: &M2palsOptions,
) -> Result<(Vec<usize>, Option<(usize, f64, Vec<String>)>)> {
    let data_norm = inst.m.frobenius_norm();
    match algorithm {
        Algorithm::Spa => Ok((spa(&inst.m, r)?.indices, None)),
        Algorithm::Mpnals => {
            let d = self_dictionary(&inst.m, inst.m.cols())?;
            let res = mpals(&inst.m, &d, r, opts)?;
            let selected = res.sources.iter().map(|s| s.atom).collect();
            let violations = res.contract_violations(data_norm, opts.max_iterations);
            Ok((selected, Some((res.iterations, res.relative_error, violations))))
        }
        Algorithm::M2pnals(s) => {
            let pd = build_pure_dictionaries(inst, s, dict_seed)?;
            let res = m2pals(&inst.m, &pd.dicts, &pd.constraints, r, opts)?;
            let selected = res.sources.iter().map(|src| pd.columns[src.dictionary][src.atom]).collect();
            let violations = res.contract_violations(data_norm, opts.max_iterations);
            Ok((selected, Some((res.iterations, res.relative_error, violations))))
        }
    }
}

/// Runs every algorithm on the same instance per `(snr, trial)` cell. Cells run
/// in parallel; results are ordered by key, not completion.
pub fn run_benchmark(cfg: &BenchConfig, endmembers: &Matrix) -> Result<BenchResults> {
    cfg.validate(endmembers)?;
    let cells: Vec<(usize, usize)> = (0..cfg.snr_grid.len())
        .flat_map(|si| (0..cfg.n_trials).map(move |t| (si, t)))
        .collect();

    let per_cell: Vec<Result<Vec<((usize, usize, usize), TrialRecord)>>> = cells
        .par_iter()
        .map(|&(si, trial)| {
            let snr = cfg.snr_grid[si];
            let seed = cell_seed(cfg.base_seed, snr, trial);
            let inst = generate_synthetic(endmembers, cfg.n, snr, seed)?;
            let hash = inst.hash();
            let dict_seed = splitmix64(seed ^ 0xd1c7);
            Ok(cfg
                .algorithms
                .iter()
                .enumerate()
                .map(|(ai, &alg)| {
                    let start = Instant::now();
                    let outcome = run_algorithm(alg, &inst, cfg.r, dict_seed, &cfg.options);
                    let time_s = start.elapsed().as_secs_f64();
                    let mut rec = TrialRecord {
                        algorithm: alg.name(),
                        snr_db: snr,
                        trial,
                        seed,
                        instance_hash: hash.clone(),
                        selected: Vec::new(),
                        rate_pct: None,
                        time_s,
                        iterations: None,
                        relative_error: None,
                        contract_violations: Vec::new(),
                        error: None,
                    };
                    match outcome.and_then(|(sel, extra)| Ok((miss_selection_rate(&sel, &inst.pure_indices)?, sel, extra))) {
                        Ok((rate, sel, extra)) => {
                            rec.selected = sel;
                            rec.rate_pct = Some(rate);
                            if let Some((it, err, v)) = extra {
                                rec.iterations = Some(it);
                                rec.relative_error = Some(err);
                                rec.contract_violations = v;
                            }
                        }
                        Err(e) => rec.error = Some(e.to_string()),
                    }
                    ((ai, si, trial), rec)
                })
                .collect())
        })
        .collect();

    let mut keyed = BTreeMap::new();
    for cell in per_cell {
        for (key, rec) in cell? {
            keyed.insert(key, rec);
        }
    }
    let trials: Vec<TrialRecord> = keyed.into_values().collect();

    let mut summary = Vec::new();
    for alg in &cfg.algorithms {
        let name = alg.name();
        for &snr in &cfg.snr_grid {
            let recs: Vec<&TrialRecord> = trials
                .iter()
                .filter(|t| t.algorithm == name && t.snr_db.to_bits() == snr.to_bits())
                .collect();
            let rates: Vec<f64> = recs.iter().filter_map(|t| t.rate_pct).collect();
            let mean_rate_pct = if rates.is_empty() {
                f64::NAN
            } else {
                rates.iter().sum::<f64>() / rates.len() as f64
            };
            let mean_time_s = recs.iter().map(|t| t.time_s).sum::<f64>() / recs.len() as f64;
            summary.push(BenchSummary {
                algorithm: name.clone(),
                snr_db: snr,
                mean_rate_pct,
                mean_time_s,
                n_trials: rates.len(),
                failures: recs.len() - rates.len(),
            });
        }
    }
    Ok(BenchResults { trials, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn endmembers() -> Matrix {
        default_endmembers(DEFAULT_BANDS, DEFAULT_RANK, DEFAULT_ENDMEMBER_SEED)
    }

    #[test]
    fn noiseless_pure_columns_are_endmembers() {
        let e = endmembers();
        let inst = generate_synthetic(&e, 50, f64::INFINITY, 1).unwrap();
        assert_eq!(inst.m, inst.noise_free);
        for (k, &j) in inst.pure_indices.iter().enumerate() {
            assert_eq!(inst.m.column(j), e.column(k));
        }
        let mut p = inst.pure_indices.clone();
        p.sort();
        p.dedup();
        assert_eq!(p.len(), DEFAULT_RANK);
    }

    #[test]
    fn noisy_data_is_clipped_and_pure_before_noise() {
        let e = endmembers();
        let inst = generate_synthetic(&e, 80, 0.0, 2).unwrap();
        assert!(inst.m.min_value() >= 0.0);
        for (k, &j) in inst.pure_indices.iter().enumerate() {
            assert_eq!(inst.noise_free.column(j), e.column(k));
        }
    }

    #[test]
    fn abundances_on_simplex() {
        let inst = generate_synthetic(&endmembers(), 60, 30.0, 3).unwrap();
        for i in 0..60 {
            let row: Vec<f64> = (0..DEFAULT_RANK).map(|k| inst.abundances.get(i, k)).collect();
            assert!(row.iter().all(|&x| x >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_snr_near_target() {
        let e = endmembers();
        for seed in 0..20 {
            let target = 10.0 * (seed % 5) as f64;
            let inst = generate_synthetic(&e, 100, target, seed).unwrap();
            let signal = inst.noise_free.frobenius_norm().powi(2);
            let snr = 10.0 * (signal / inst.noise_energy).log10();
            assert!((snr - target).abs() < 0.5, "seed {seed}: {snr} vs {target}");
        }
    }

    #[test]
    fn dictionaries_contain_pure_pixel_and_nest() {
        let inst = generate_synthetic(&endmembers(), 100, 30.0, 4).unwrap();
        let small = build_pure_dictionaries(&inst, 10, 7).unwrap();
        let large = build_pure_dictionaries(&inst, 25, 7).unwrap();
        let other = build_pure_dictionaries(&inst, 10, 8).unwrap();
        for k in 0..DEFAULT_RANK {
            assert_eq!(small.dicts[k].len(), 10);
            assert_eq!(small.columns[k][small.pure_position[k]], inst.pure_indices[k]);
            assert_eq!(small.dicts[k].atom(small.pure_position[k]), inst.m.column(inst.pure_indices[k]));
            let mut distinct = small.columns[k].clone();
            distinct.sort();
            distinct.dedup();
            assert_eq!(distinct.len(), 10);
            for j in &small.columns[k] {
                assert!(large.columns[k].contains(j));
            }
        }
        assert_ne!(small.columns, other.columns);
        assert!(build_pure_dictionaries(&inst, 0, 1).is_err());
        let single = build_pure_dictionaries(&inst, 1, 1).unwrap();
        assert!(single.columns.iter().zip(&inst.pure_indices).all(|(c, &p)| c == &vec![p]));
    }

    #[test]
    fn rate_arithmetic() {
        let pure = [3, 9, 12, 20, 41, 7];
        assert_eq!(miss_selection_rate(&pure, &pure).unwrap(), 0.0);
        assert_eq!(miss_selection_rate(&[0, 1, 2, 4, 5, 6], &pure).unwrap(), 100.0);
        let one = miss_selection_rate(&[3, 9, 12, 20, 41, 8], &pure).unwrap();
        assert!((one - 16.67).abs() < 0.01);
        assert!(miss_selection_rate(&[3], &pure).is_err());
    }

    #[test]
    fn algorithm_names() {
        let list = Algorithm::parse_list(&["spa".into(), "m2pnals".into(), "M2PNALS-7".into()], &[1, 10]).unwrap();
        assert_eq!(
            list,
            vec![Algorithm::Spa, Algorithm::M2pnals(1), Algorithm::M2pnals(10), Algorithm::M2pnals(7)]
        );
        assert_eq!(Algorithm::M2pnals(1).name(), "m2pnals-01");
        assert!(Algorithm::parse_list(&["nfindr".into()], &[]).is_err());
        assert!(Algorithm::parse_list(&[], &[1]).is_err());
    }

    #[test]
    fn small_benchmark_is_deterministic() {
        let cfg = BenchConfig {
            snr_grid: vec![30.0, f64::INFINITY],
            n_trials: 3,
            n: 60,
            algorithms: vec![Algorithm::Spa, Algorithm::M2pnals(1), Algorithm::M2pnals(5)],
            ..Default::default()
        };
        let e = endmembers();
        let x = run_benchmark(&cfg, &e).unwrap();
        let y = run_benchmark(&cfg, &e).unwrap();
        assert_eq!(x.rates_csv(), y.rates_csv());
        assert_eq!(x.trials.len(), 3 * 2 * 3);
        for snr in [30.0, f64::INFINITY] {
            assert_eq!(x.summary_for(Algorithm::M2pnals(1), snr).unwrap().mean_rate_pct, 0.0);
            let hashes: Vec<Vec<&str>> = cfg
                .algorithms
                .iter()
                .map(|&a| x.trials_for(a, snr).map(|t| t.instance_hash.as_str()).collect())
                .collect();
            assert!(hashes.windows(2).all(|w| w[0] == w[1]));
        }
        assert!(x.trials.iter().all(|t| t.contract_violations.is_empty() && t.error.is_none()));
        assert!(x.rates_csv().contains("spa,inf,"));
        assert!(x.trials_jsonl().contains("\"snr_db\":\"inf\""));
    }
}
