//! `exqte`: estimation of extremal quantile treatment effects from CSV
//! data, Monte Carlo simulation of the estimators, and k-diagnostic
//! sweeps. Every randomized command takes an explicit --seed and produces
//! byte-identical output on reruns.

mod dataset;

use clap::{Args, Parser, Subcommand};
use dataset::{read_csv_dataset, write_csv_dataset, CsvDataset};
use exqte_core::extrapolation::write_k_sweep_csv;
use exqte_core::rng::replication_rng;
use exqte_core::simulation::{
    generate, run_study, write_qq_csv, write_records_csv, write_summary_json, KRule, Method,
    PRule, SimModel, StudyConfig,
};
use exqte_core::{
    default_basis_size, extremal_qte, fit_sieve_logistic, k_sweep, stepwise_loocv_select,
    ExtrapolationConfig, FitOptions, LoocvOptions, PropensityModel, SieveBasis,
};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Errors split by exit code: 2 for usage and data-schema problems, 1 for
/// runtime estimation failures.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl ToString) -> Self {
        CliError::Runtime(msg.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "exqte",
    version,
    about = "Extremal quantile treatment effect estimation for heavy-tailed outcomes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo study and write report CSV/JSON files.
    Simulate(SimulateArgs),
    /// Estimate the extremal QTE from a CSV data set.
    Estimate(EstimateArgs),
    /// Re-estimate over a grid of k values and write the sweep table.
    Ksweep(KsweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Outcome model: h1, h2 or h3.
    #[arg(long)]
    model: String,
    /// Sample size; repeat the flag for a grid.
    #[arg(long, required = true)]
    n: Vec<usize>,
    /// Extreme-level rule: 5_over_n, 1_over_n or 5_over_nlogn; repeatable.
    #[arg(long = "p-rule", required = true)]
    p_rule: Vec<String>,
    /// Comma-separated methods: hill, pickands, firpo_zhang, bs_hill, bs_pickands.
    #[arg(long, value_delimiter = ',', required = true)]
    methods: Vec<String>,
    /// Replications per cell.
    #[arg(long, default_value_t = 300)]
    reps: usize,
    /// Master seed (required; there is no wall-clock seeding).
    #[arg(long)]
    seed: u64,
    /// Output path prefix; writes <out>.csv, <out>.json and <out>_qq.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Fixed intermediate budget k (default: n^exponent).
    #[arg(long, conflicts_with = "k_exponent")]
    k: Option<f64>,
    /// Exponent e for k = n^e.
    #[arg(long = "k-exponent", default_value_t = 0.65)]
    k_exponent: f64,
    /// Bootstrap replicates for bs_hill / bs_pickands.
    #[arg(long = "bootstrap-reps", default_value_t = 500)]
    bootstrap_reps: usize,
    /// Sieve basis size (default: floor(2 n^(1/11))).
    #[arg(long = "basis-size")]
    basis_size: Option<usize>,
    /// Worker threads (default: all logical cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Also write the first replication's data set as CSV (y, d, x1).
    #[arg(long = "emit-data")]
    emit_data: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateInputArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Outcome column name.
    #[arg(long)]
    outcome: String,
    /// Treatment column name (values 0/1).
    #[arg(long)]
    treatment: String,
    /// Comma-separated covariate column names.
    #[arg(long, value_delimiter = ',', required = true)]
    covariates: Vec<String>,
    /// Extreme level p.
    #[arg(long, conflicts_with = "quantile")]
    p: Option<f64>,
    /// Target quantile level (p = 1 - quantile).
    #[arg(long)]
    quantile: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Basis choice: "fixed:<h>" or "loocv" (default: fixed at floor(2 n^(1/11))).
    #[arg(long)]
    basis: Option<String>,
    /// Propensity clipping bounds lo,hi.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.01, 0.99])]
    clip: Vec<f64>,
    /// Cap on n for leave-one-out basis selection.
    #[arg(long = "loocv-cap", default_value_t = 5000)]
    loocv_cap: usize,
    /// Constant added to every outcome before estimation. The Hill step
    /// needs positive outcomes; shifting is never done silently, and all
    /// reported quantiles refer to the shifted outcome.
    #[arg(long, default_value_t = 0.0)]
    shift: f64,
    /// Worker threads (default: all logical cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: EstimateInputArgs,
    /// Intermediate budget k (default: n^0.65).
    #[arg(long)]
    k: Option<f64>,
    /// Output JSON path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KsweepArgs {
    #[command(flatten)]
    input: EstimateInputArgs,
    /// Grid lo:hi:step of k values, inclusive of both ends.
    #[arg(long = "k-grid")]
    k_grid: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Ksweep(args) => cmd_ksweep(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        // A second init in the same process is not an error we care about.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", prefix.display()))
}

/// Relative output paths may be redirected by the EXQTE_OUT_DIR
/// environment variable, the only environment configuration the tool
/// reads besides logging.
fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os("EXQTE_OUT_DIR") {
        Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn create(path: &Path) -> Result<File, CliError> {
    let path = resolve_out(path);
    File::create(&path)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    init_threads(args.threads);
    let model = SimModel::parse(&args.model).map_err(CliError::usage_from)?;
    let p_rules: Vec<PRule> = args
        .p_rule
        .iter()
        .map(|s| PRule::parse(s))
        .collect::<exqte_core::Result<_>>()
        .map_err(CliError::usage_from)?;
    let methods: Vec<Method> = args
        .methods
        .iter()
        .map(|s| Method::parse(s))
        .collect::<exqte_core::Result<_>>()
        .map_err(CliError::usage_from)?;
    if args.reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    let mut cfg = StudyConfig::new(model, args.n.clone(), p_rules, methods, args.reps, args.seed);
    cfg.alpha = args.alpha;
    cfg.k_rule = match args.k {
        Some(k) => KRule::Fixed(k),
        None => KRule::Power(args.k_exponent),
    };
    cfg.bootstrap_reps = args.bootstrap_reps;
    cfg.basis_size = args.basis_size;
    let reports = run_study(&cfg).map_err(CliError::runtime)?;

    write_records_csv(&reports, create(&with_suffix(&args.out, ".csv"))?)
        .map_err(CliError::runtime)?;
    write_summary_json(&reports, create(&with_suffix(&args.out, ".json"))?)
        .map_err(CliError::runtime)?;
    write_qq_csv(&reports, create(&with_suffix(&args.out, "_qq.csv"))?)
        .map_err(CliError::runtime)?;

    if let Some(path) = &args.emit_data {
        let sample = generate(model, args.n[0], &mut replication_rng(args.seed, 0))
            .map_err(CliError::runtime)?;
        write_csv_dataset(&sample, &resolve_out(path)).map_err(CliError::runtime)?;
    }
    let failures: usize = reports.iter().map(|r| r.failures).sum();
    if failures > 0 {
        eprintln!("note: {failures} replication-method runs failed and were excluded");
    }
    Ok(())
}

enum BasisChoice {
    Fixed(usize),
    Loocv,
}

fn parse_basis(spec: Option<&str>, n: usize) -> Result<BasisChoice, CliError> {
    match spec {
        None => Ok(BasisChoice::Fixed(default_basis_size(n))),
        Some("loocv") => Ok(BasisChoice::Loocv),
        Some(s) => match s.strip_prefix("fixed:") {
            Some(h) => h
                .parse::<usize>()
                .map(BasisChoice::Fixed)
                .map_err(|_| CliError::usage(format!("invalid basis size in '{s}'"))),
            None => Err(CliError::usage(format!(
                "--basis must be 'loocv' or 'fixed:<h>', got '{s}'"
            ))),
        },
    }
}

/// Candidate pool for leave-one-out selection: all linear, squared and
/// pairwise-interaction terms over r covariates.
fn loocv_candidate_pool(r: usize) -> Vec<Vec<u32>> {
    let mut pool = Vec::new();
    for i in 0..r {
        let mut t = vec![0u32; r];
        t[i] = 1;
        pool.push(t);
    }
    for i in 0..r {
        let mut t = vec![0u32; r];
        t[i] = 2;
        pool.push(t);
    }
    for i in 0..r {
        for j in (i + 1)..r {
            let mut t = vec![0u32; r];
            t[i] = 1;
            t[j] = 1;
            pool.push(t);
        }
    }
    pool
}

struct FittedEstimation {
    dataset: CsvDataset,
    cfg: ExtrapolationConfig,
    basis: SieveBasis,
    basis_mode: &'static str,
    model: PropensityModel,
}

fn prepare_estimation(
    input: &EstimateInputArgs,
    k: Option<f64>,
) -> Result<FittedEstimation, CliError> {
    init_threads(input.threads);
    let mut dataset = read_csv_dataset(
        &input.data,
        &input.outcome,
        &input.treatment,
        &input.covariates,
    )?;
    if input.shift != 0.0 {
        dataset.sample = dataset.sample.with_shifted_outcomes(input.shift);
    }
    if dataset.dropped_rows > 0 {
        eprintln!(
            "note: dropped {} rows with missing values; {} rows used",
            dataset.dropped_rows,
            dataset.sample.n()
        );
    }
    let n = dataset.sample.n();
    let p = match (input.p, input.quantile) {
        (Some(p), None) => p,
        (None, Some(q)) => {
            if !(q > 0.0 && q < 1.0) {
                return Err(CliError::usage(format!("--quantile must be in (0,1), got {q}")));
            }
            1.0 - q
        }
        (None, None) => return Err(CliError::usage("one of --p or --quantile is required")),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    let k = k.unwrap_or_else(|| ExtrapolationConfig::default_k(n));
    let cfg = ExtrapolationConfig::new(n, k, p, input.alpha).map_err(CliError::runtime)?;
    if input.clip.len() != 2 {
        return Err(CliError::usage("--clip expects two values lo,hi"));
    }
    let fit = FitOptions { clip: (input.clip[0], input.clip[1]), ..FitOptions::default() };
    let (basis, basis_mode) = match parse_basis(input.basis.as_deref(), n)? {
        BasisChoice::Fixed(h) => (
            SieveBasis::graded(dataset.sample.covariate_dim(), h)
                .map_err(CliError::usage_from)?,
            "fixed",
        ),
        BasisChoice::Loocv => {
            let pool = loocv_candidate_pool(dataset.sample.covariate_dim());
            let opts = LoocvOptions { max_n: input.loocv_cap, fit };
            (
                stepwise_loocv_select(&dataset.sample, &pool, &opts)
                    .map_err(CliError::runtime)?,
                "loocv",
            )
        }
    };
    let model = fit_sieve_logistic(&dataset.sample, &basis, &fit).map_err(CliError::runtime)?;
    Ok(FittedEstimation { dataset, cfg, basis, basis_mode, model })
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    let est = prepare_estimation(&args.input, args.k)?;
    let result = extremal_qte(&est.dataset.sample, &est.model, &est.cfg)
        .map_err(CliError::runtime)?;
    let doc = serde_json::json!({
        "schema_version": "estimate-result/v1",
        "input": {
            "path": est.dataset.path.display().to_string(),
            "outcome": est.dataset.outcome,
            "treatment": est.dataset.treatment,
            "covariates": est.dataset.covariates,
            "rows_used": est.dataset.sample.n(),
            "dropped_rows": est.dataset.dropped_rows,
            "outcome_shift": args.input.shift,
        },
        "basis": {
            "mode": est.basis_mode,
            "size": est.basis.len(),
            "terms": est.basis.term_labels(),
        },
        "propensity_model": est.model.to_json(),
        "result": result,
    });
    let rendered = serde_json::to_string_pretty(&doc).map_err(CliError::runtime)?;
    match &args.out {
        Some(path) => {
            let mut f = create(path)?;
            writeln!(f, "{rendered}").map_err(CliError::runtime)?;
        }
        None => println!("{rendered}"),
    }
    Ok(())
}

fn parse_k_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::usage(format!("--k-grid expects lo:hi:step, got '{spec}'")));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|s| s.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::usage(format!("--k-grid expects numbers, got '{spec}'")))?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0 && lo > 0.0 && hi >= lo) {
        return Err(CliError::usage(format!(
            "--k-grid needs 0 < lo <= hi and step > 0, got '{spec}'"
        )));
    }
    let mut grid = Vec::new();
    let mut i = 0u64;
    loop {
        let k = lo + step * i as f64;
        if k > hi + 1e-9 * step {
            break;
        }
        grid.push(k);
        i += 1;
    }
    Ok(grid)
}

fn cmd_ksweep(args: KsweepArgs) -> Result<(), CliError> {
    let grid = parse_k_grid(&args.k_grid)?;
    // Template config: validated against the smallest grid entry so the
    // sweep itself decides per-row feasibility.
    let est = prepare_estimation(&args.input, Some(grid[grid.len() - 1]))?;
    let rows = k_sweep(&est.dataset.sample, &est.model, &est.cfg, &grid);
    let succeeded = rows.iter().filter(|r| r.error.is_none()).count();
    let failed = rows.len() - succeeded;
    write_k_sweep_csv(&rows, create(&args.out)?).map_err(CliError::runtime)?;
    if failed > 0 {
        eprintln!("note: {failed} of {} grid rows failed; see the error column", rows.len());
    }
    if succeeded == 0 {
        return Err(CliError::runtime("every k in the grid failed"));
    }
    Ok(())
}

impl CliError {
    fn usage_from(e: exqte_core::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}
