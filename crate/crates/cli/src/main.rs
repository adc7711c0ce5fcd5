use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use quartic_core::functions::TestFunction;
use quartic_core::simulate::{write_binary, write_csv};
use quartic_core::sums::{EvalPoint, Functional, Parity};
use quartic_lab::config::{ConfigFile, ExperimentConfig, ExperimentKind, Overrides};
use quartic_lab::csv::{write_aggregate, write_long};
use quartic_lab::{parse_kernel, runner, verbs, with_workers, LabError};

#[derive(Parser)]
#[command(name = "quartic-lab", version, about = "Simulate and check Gaussian processes with nontrivial quartic variation")]
struct Cli {
    /// Size of the worker pool (default: one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Print the constant κ with its truncation index and certified error bound.
    ComputeKappa {
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Evaluate a discrete functional on sampled paths.
    Sums(SumsArgs),
    /// Run a Monte Carlo experiment and write summary.json + replicates.csv.
    Verify(VerifyArgs),
    /// Dump a sampled ensemble.
    Sample(SampleArgs),
    /// Dump the exact increment covariances and audit the increment inequalities.
    CovTable(CovTableArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FunctionalArg {
    Midpoint,
    Offset,
    Trapezoid,
    Jn,
    Bn,
    Qn,
    Bnbar,
    Power,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParityArg {
    Odd,
    Even,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalPointArg {
    Left,
    Right,
}

#[derive(Args)]
struct EnsembleArgs {
    /// heat, fbm_quarter, lei_nualart_xi, brownian_motion or fbm_decomposition.
    #[arg(long, default_value = "heat")]
    kernel: String,
    #[arg(long, default_value_t = 1024)]
    n: usize,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long = "M", default_value_t = 100)]
    replicates: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct SumsArgs {
    #[arg(long, value_enum)]
    functional: FunctionalArg,
    /// Test function id, optionally with parameters (e.g. `sine:2`).
    #[arg(long, default_value = "const")]
    g: String,
    /// Derivative of g in x used as the integrand.
    #[arg(long, default_value_t = 0)]
    deriv: u32,
    #[arg(long, default_value_t = 4)]
    p: u32,
    #[arg(long, value_enum, default_value = "all")]
    parity: ParityArg,
    #[arg(long, value_enum, default_value = "left")]
    eval_point: EvalPointArg,
    /// Comma-separated evaluation times (default: T).
    #[arg(long = "t", value_delimiter = ',')]
    times: Vec<f64>,
    #[command(flatten)]
    ensemble: EnsembleArgs,
    /// Emit per-time statistics (t, count, mean, std_dev, std_error) instead of every replicate.
    #[arg(long)]
    summary: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    experiment: Option<ExperimentKind>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated resolutions for multi-resolution experiments.
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long = "M")]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: quartic-out/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Binary,
    Csv,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[arg(long, value_enum, default_value = "binary")]
    format: Format,
    /// Required for binary output; CSV goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CovTableArgs {
    #[arg(long, default_value_t = 4096)]
    n: usize,
    /// Largest increment index (default: n).
    #[arg(long)]
    max_j: Option<usize>,
    /// Number of off-diagonal cross moments per row.
    #[arg(long, default_value_t = 4)]
    lag: usize,
    /// Write the table here as CSV; the audit always goes to stdout as JSON.
    #[arg(long)]
    table: Option<PathBuf>,
}

fn functional(args: &SumsArgs) -> Functional {
    match args.functional {
        FunctionalArg::Midpoint => Functional::Midpoint,
        FunctionalArg::Offset => Functional::Offset,
        FunctionalArg::Trapezoid => Functional::Trapezoid,
        FunctionalArg::Jn => Functional::Jn,
        FunctionalArg::Bn => Functional::Bn,
        FunctionalArg::Qn => Functional::Qn,
        FunctionalArg::Bnbar => Functional::Bnbar,
        FunctionalArg::Power => Functional::Power {
            p: args.p,
            parity: match args.parity {
                ParityArg::Odd => Parity::Odd,
                ParityArg::Even => Parity::Even,
                ParityArg::All => Parity::All,
            },
            eval_point: match args.eval_point {
                EvalPointArg::Left => EvalPoint::Left,
                EvalPointArg::Right => EvalPoint::Right,
            },
        },
    }
}

fn output(path: Option<&PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| LabError::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run_sums(args: SumsArgs) -> anyhow::Result<ExitCode> {
    let g: TestFunction =
        args.g.parse().map_err(|e: quartic_core::Error| LabError::Config { field: "g".into(), message: e.to_string() })?;
    let times = if args.times.is_empty() { vec![args.ensemble.horizon] } else { args.times.clone() };
    let req = verbs::SumsRequest {
        functional: functional(&args),
        g,
        deriv: args.deriv,
        kernel: parse_kernel(&args.ensemble.kernel)?,
        n: args.ensemble.n,
        horizon: args.ensemble.horizon,
        replicates: args.ensemble.replicates,
        seed: args.ensemble.seed,
        times,
    };
    let rows = verbs::sums(&req)?;
    let w = output(args.out.as_ref())?;
    if args.summary {
        write_aggregate(w, &req.times, &rows)
    } else {
        write_long(w, &req.times, &rows)
    }
    .context("writing sums")?;
    Ok(ExitCode::SUCCESS)
}

fn run_verify(args: VerifyArgs) -> anyhow::Result<ExitCode> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let over = Overrides {
        experiment: args.experiment,
        n: args.n,
        ns: args.ns,
        replicates: args.replicates,
        seed: args.seed,
        output_dir: args.out,
    };
    let config = ExperimentConfig::resolve(file, over)?;
    let (summary, dir) = runner::run(&config)?;
    for (i, rep) in summary.runs.iter().enumerate() {
        for c in &rep.checks {
            let status = match (c.passed, c.flagged) {
                (false, _) => "FAIL",
                (true, true) => "PASS (flagged)",
                (true, false) => "PASS",
            };
            eprintln!("run {i} seed {}: {} = {:.6} vs {:.6}: {status}", rep.seed, c.name, c.value, c.threshold);
        }
    }
    eprintln!(
        "{}: {} of {} runs passed (need {}); artifacts in {}",
        config.experiment,
        summary.passing_runs,
        summary.runs.len(),
        summary.min_passing,
        dir.display()
    );
    Ok(if summary.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run_sample(args: SampleArgs) -> anyhow::Result<ExitCode> {
    let e = &args.ensemble;
    let ens = verbs::sample(&parse_kernel(&e.kernel)?, e.n, e.horizon, e.replicates, e.seed)?;
    match args.format {
        Format::Binary => {
            let path = args.out.as_ref().ok_or_else(|| LabError::Config {
                field: "out".into(),
                message: "binary output needs --out".into(),
            })?;
            write_binary(&ens, output(Some(path))?).map_err(LabError::from)?;
        }
        Format::Csv => write_csv(&ens, output(args.out.as_ref())?).map_err(LabError::from)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn run_cov_table(args: CovTableArgs) -> anyhow::Result<ExitCode> {
    let (table, audit) = verbs::cov_table(args.n, args.max_j, args.lag)?;
    if let Some(p) = &args.table {
        verbs::write_cov_table(&table, output(Some(p))?).context("writing covariance table")?;
    }
    println!("{}", serde_json::to_string_pretty(&audit)?);
    Ok(if audit.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = with_workers(cli.workers, move || match cli.verb {
        Verb::ComputeKappa { tol } => verbs::compute_kappa(tol).map(|k| {
            print!("{}", verbs::kappa_text(&k));
            ExitCode::SUCCESS
        }).map_err(anyhow::Error::from),
        Verb::Sums(a) => run_sums(a),
        Verb::Verify(a) => run_verify(a),
        Verb::Sample(a) => run_sample(a),
        Verb::CovTable(a) => run_cov_table(a),
    })
    .map_err(anyhow::Error::from)
    .and_then(|r| r);
    match result {
        Ok(code) => code,
        Err(e) => match e.downcast_ref::<LabError>() {
            Some(lab) => {
                eprintln!("{}", lab.diagnostic());
                ExitCode::from(lab.exit_code() as u8)
            }
            None => {
                eprintln!("{}", serde_json::json!({ "error": "internal", "message": format!("{e:#}") }));
                ExitCode::from(4)
            }
        },
    }
}
