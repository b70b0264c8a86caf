//! Command-line front end: `unmix`, `bench`, `synth`, `serve`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dictionary::{from_regions, CountConstraint, CountKind, Dictionary, PixelCoord};
use crate::error::Error;
use crate::io::{
    columns_to_csv, load_dictionary, load_hsi, load_regions, parse_columns_csv, save_dictionary, save_hsi,
    write_atomic, HsiCube, HsiFormat,
};
use crate::linalg::{Matrix, Metric};
use crate::m2pals::{m2pals, self_dictionary, InitSpec, M2palsOptions};
use crate::report::{write_json, write_outputs, RunReport, SelectionReport};
use crate::synth::{
    build_pure_dictionaries, default_endmembers, generate_synthetic, run_benchmark, splitmix64, Algorithm,
    BenchConfig, DEFAULT_BANDS, DEFAULT_ENDMEMBER_SEED,
};

pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "specmix", version, about = "Spectral unmixing with dictionary-constrained endmembers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Factor an image with endmembers drawn from dictionaries.
    Unmix(UnmixArgs),
    /// Miss-selection benchmark on synthetic images.
    Bench(BenchArgs),
    /// Write one synthetic instance with its pure-pixel dictionaries.
    Synth(SynthArgs),
    /// Run the HTTP service.
    #[cfg(feature = "service")]
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["regions", "dicts", "self_dict"])))]
struct UnmixArgs {
    #[arg(long)]
    image: PathBuf,
    /// Region file (JSON list of rectangles with count rules).
    #[arg(long)]
    regions: Option<PathBuf>,
    /// Dictionary CSV files, one atom per column.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    dicts: Vec<PathBuf>,
    /// Use every pixel of the image as one dictionary.
    #[arg(long)]
    self_dict: bool,
    /// Count rules for --dicts, e.g. `exact:2,at_least:1`; overrides sidecar rules.
    #[arg(long, value_delimiter = ',')]
    counts: Vec<String>,
    /// Rank; defaults to the sum of exact and lower-bound counts.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, default_value = "nip")]
    metric: String,
    /// Nonnegative abundances.
    #[arg(long)]
    nonneg: bool,
    /// Nonnegative least squares for the endmember proxy too.
    #[arg(long)]
    nonneg_proxy: bool,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `spa` or `random`.
    #[arg(long, default_value = "spa")]
    init: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// SNR values in dB, comma separated; `inf` for no noise.
    #[arg(long, value_delimiter = ',', required = true)]
    snr: Vec<String>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,10,25,50")]
    dict_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "spa,mpnals,m2pnals")]
    algorithms: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV of endmember spectra, one per column.
    #[arg(long)]
    endmembers: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    height: usize,
    #[arg(long, default_value_t = 20)]
    width: usize,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, default_value = "40")]
    snr: String,
    #[arg(long, default_value_t = 10)]
    dict_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    endmembers: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[cfg(feature = "service")]
#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 7878)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PARSE } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Unmix(a) => unmix(a),
        Command::Bench(a) => bench(a),
        Command::Synth(a) => synth(a),
        #[cfg(feature = "service")]
        Command::Serve(a) => serve(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_PARSE
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Parse(_) | Error::Io(_) => EXIT_PARSE,
        _ => EXIT_FAILURE,
    }
}

fn parse_snr(s: &str) -> CliResult<f64> {
    let t = s.trim();
    match t.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        _ => t
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Failure::Usage(format!("invalid SNR `{s}`"))),
    }
}

fn load_endmembers(path: Option<&Path>, r: Option<usize>) -> CliResult<Matrix> {
    match path {
        Some(p) => {
            let text = crate::io::read_text(p)?;
            let (m, _) = parse_columns_csv(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            if let Some(r) = r {
                if r != m.cols() {
                    return Err(Failure::Usage(format!("--r {r} but {} has {} spectra", p.display(), m.cols())));
                }
            }
            Ok(m)
        }
        None => Ok(default_endmembers(DEFAULT_BANDS, r.unwrap_or(6), DEFAULT_ENDMEMBER_SEED)),
    }
}

fn unmix(args: UnmixArgs) -> CliResult {
    let metric: Metric = args.metric.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let init = match args.init.as_str() {
        "spa" => InitSpec::Spa,
        "random" => InitSpec::RandomColumns,
        other => return Err(Failure::Usage(format!("unknown init `{other}` (spa, random)"))),
    };
    let cube = load_hsi(&args.image, None)?;
    let m = cube.to_matrix();

    let (dicts, constraints): (Vec<Dictionary>, Vec<CountConstraint>) = if let Some(path) = &args.regions {
        from_regions(&cube, &load_regions(path)?)?
    } else if args.self_dict {
        let r = args.r.ok_or_else(|| Failure::Usage("--self-dict needs --r".into()))?;
        (vec![self_dictionary(&m, cube.width)?], vec![CountConstraint::exact(r)])
    } else {
        let overrides: Vec<CountConstraint> = args
            .counts
            .iter()
            .map(|s| s.parse::<CountConstraint>().map_err(|e| Failure::Usage(e.to_string())))
            .collect::<CliResult<_>>()?;
        if !overrides.is_empty() && overrides.len() != args.dicts.len() {
            return Err(Failure::Usage(format!(
                "{} count rules for {} dictionaries",
                overrides.len(),
                args.dicts.len()
            )));
        }
        let mut dicts = Vec::new();
        let mut constraints = Vec::new();
        for (i, path) in args.dicts.iter().enumerate() {
            let (d, c) = load_dictionary(path)?;
            let c = overrides.get(i).copied().or(c).ok_or_else(|| {
                Failure::Usage(format!("no count rule for {}; pass --counts or a sidecar", path.display()))
            })?;
            dicts.push(d);
            constraints.push(c);
        }
        (dicts, constraints)
    };

    let r = match args.r {
        Some(r) => r,
        None if constraints.iter().any(|c| c.kind == CountKind::AtMost) => {
            return Err(Failure::Usage("--r is required when at-most rules are present".into()))
        }
        None => constraints.iter().map(|c| c.count).sum(),
    };
    let opts = M2palsOptions {
        max_iterations: args.max_iter,
        rel_change_tol: args.tol,
        nonnegative_b: args.nonneg,
        nonnegative_a_proxy: args.nonneg_proxy,
        metric,
        init,
        rng_seed: args.seed,
        ..Default::default()
    };
    let result = m2pals(&m, &dicts, &constraints, r, &opts)?;
    let selection = SelectionReport::new(&result, &dicts, &constraints);
    let report = RunReport::new(&result, &opts, m.frobenius_norm());
    write_outputs(&args.out, &result, &selection, &report, cube.height, cube.width)?;
    println!(
        "relative error {:.6} after {} iterations ({})",
        result.relative_error,
        result.iterations,
        if result.converged { "converged" } else { "iteration cap" }
    );
    Ok(())
}

fn bench(args: BenchArgs) -> CliResult {
    let snr_grid: Vec<f64> = args
        .snr
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_snr(s))
        .collect::<CliResult<_>>()?;
    if snr_grid.is_empty() {
        return Err(Failure::Usage("--snr needs at least one value".into()));
    }
    let algorithms = Algorithm::parse_list(&args.algorithms, &args.dict_sizes).map_err(|e| Failure::Usage(e.to_string()))?;
    if args.trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    let endmembers = load_endmembers(args.endmembers.as_deref(), args.r)?;
    let cfg = BenchConfig {
        snr_grid,
        n_trials: args.trials,
        n: args.n,
        r: endmembers.cols(),
        dict_size_grid: args.dict_sizes,
        algorithms,
        base_seed: args.seed,
        ..Default::default()
    };
    let results = run_benchmark(&cfg, &endmembers)?;
    std::fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join("bench.csv"), results.bench_csv().as_bytes())?;
    write_atomic(&args.out.join("rates.csv"), results.rates_csv().as_bytes())?;
    write_atomic(&args.out.join("trials.jsonl"), results.trials_jsonl().as_bytes())?;
    print!("{}", results.bench_csv());
    let failed = results.trials.iter().filter(|t| t.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} trial runs failed; see trials.jsonl");
    }
    Ok(())
}

#[derive(Serialize)]
struct Truth {
    height: usize,
    width: usize,
    snr_db: String,
    seed: u64,
    pure_columns: Vec<usize>,
    pure_pixels: Vec<PixelCoord>,
    dictionaries: Vec<String>,
}

fn synth(args: SynthArgs) -> CliResult {
    let snr = parse_snr(&args.snr)?;
    let endmembers = load_endmembers(args.endmembers.as_deref(), args.r)?;
    let n = args.height * args.width;
    let mut inst = generate_synthetic(&endmembers, n, snr, args.seed)?;
    // Dictionaries are cut from the stored single-precision image so atoms match pixels exactly.
    let cube = HsiCube::from_matrix(&inst.m, args.height, args.width)?;
    inst.m = cube.to_matrix();
    let pd = build_pure_dictionaries(&inst, args.dict_size, splitmix64(args.seed ^ 0xd1c7))?;

    std::fs::create_dir_all(&args.out)?;
    save_hsi(&cube, &args.out.join("image.raw"), HsiFormat::Raw)?;
    let mut names = Vec::new();
    for (k, (mut d, cols)) in pd.dicts.into_iter().zip(&pd.columns).enumerate() {
        d.pixels = Some(cols.iter().map(|&j| PixelCoord::of_column(j, args.width)).collect());
        let name = format!("dict_{k}.csv");
        save_dictionary(&d, Some(CountConstraint::exact(1)), &args.out.join(&name))?;
        names.push(name);
    }
    write_atomic(&args.out.join("endmembers.csv"), columns_to_csv(&endmembers, None).as_bytes())?;
    let truth = Truth {
        height: args.height,
        width: args.width,
        snr_db: crate::synth::snr_label(snr),
        seed: args.seed,
        pure_columns: inst.pure_indices.clone(),
        pure_pixels: inst.pure_indices.iter().map(|&j| PixelCoord::of_column(j, args.width)).collect(),
        dictionaries: names,
    };
    write_json(&args.out.join("truth.json"), &truth)?;
    println!("wrote {}x{}x{} image and {} dictionaries to {}", args.height, args.width, cube.bands, truth.dictionaries.len(), args.out.display());
    Ok(())
}

#[cfg(feature = "service")]
fn serve(args: ServeArgs) -> CliResult {
    let addr = format!("{}:{}", args.host, args.port);
    crate::service::serve_blocking(&addr)?;
    Ok(())
}
