mod io;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deautoconv::experiments::{self, ExperimentKind, ExperimentSpec};
use deautoconv::{Error, Init, RunConfig, RunOutcome, Signal};
use log::info;
use serde_json::json;

const EXIT_TABLE: &str = "\
Exit codes:
  0  success
  2  invalid command line
  3  input file could not be parsed
  4  infeasible solver state, solver failure or validation failure
  5  divergence not finite at the initial point
  6  invalid parameters, or y_0 = 0 without --allow-degenerate
  7  I/O error
  8  no experiment run completed";

#[derive(Debug, Parser)]
#[command(name = "deautoconv", version, about = "Positive deautoconvolution by I-divergence minimization", after_help = EXIT_TABLE)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit x >= 0 so that the truncated autoconvolution of x matches the data.
    #[command(after_help = EXIT_TABLE)]
    Fit(FitArgs),
    /// Write synthetic data.
    #[command(after_help = EXIT_TABLE)]
    Generate(GenerateArgs),
    /// Generate data and fit it from several random starts.
    #[command(after_help = EXIT_TABLE)]
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitKind {
    Random,
    Constant,
    File,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Exact,
    Random,
}

impl From<Kind> for ExperimentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Exact => ExperimentKind::Exact,
            Kind::Random => ExperimentKind::Random,
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Data file: one nonnegative value per line, optional header "y".
    input: PathBuf,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    /// Relative decrease over 10 iterations below which the run stops.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, value_enum, default_value_t = InitKind::Random)]
    init: InitKind,
    /// Starting point for `--init file`, same format as the data.
    #[arg(long, required_if_eq("init", "file"))]
    init_file: Option<PathBuf>,
    /// Cross-check every step (recursive solver, gain decomposition, conservation).
    #[arg(long)]
    validate: bool,
    #[arg(long, env = "DEAUTOCONV_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Accept data with y_0 = 0.
    #[arg(long)]
    allow_degenerate: bool,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    m: usize,
    /// Scale of the random generator.
    #[arg(long = "K", default_value_t = 5)]
    k_scale: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Data file to write; the exact kind also writes `<stem>_true_x.<ext>` next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    m: usize,
    #[arg(long = "K", default_value_t = 5)]
    k_scale: u32,
    #[arg(long = "T", default_value_t = 2000)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to 3 for the exact kind and 2 for the random kind.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, env = "DEAUTOCONV_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    validate: bool,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        Failure::new(7, format!("{}: {err}", path.display()))
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err.root() {
            Error::InfiniteDivergence => 5,
            Error::InvalidConfig(_)
            | Error::LengthMismatch { .. }
            | Error::Empty
            | Error::InvalidEntry { .. } => 6,
            _ => 4,
        };
        Failure::new(code, err.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn write_file(path: &Path, contents: &str) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

fn read_input(path: &Path) -> Result<Signal, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    io::parse_signal(&text).map_err(|e| Failure::new(3, format!("{}: {e}", path.display())))
}

fn to_json(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    s
}

fn outcome_json(outcome: &RunOutcome) -> serde_json::Value {
    json!({
        "final_divergence": outcome.final_divergence(),
        "initial_divergence": outcome.initial_divergence(),
        "iterations": outcome.iterations,
        "stop": outcome.stop,
        "init_seed": outcome.init_seed,
        "kkt": outcome.kkt,
        "warnings": outcome.warnings,
    })
}

fn cmd_fit(args: FitArgs) -> CliResult {
    let y = read_input(&args.input)?;
    if y[0] == 0.0 && !args.allow_degenerate {
        return Err(Failure::new(
            6,
            "y_0 = 0: a minimizer may not exist; pass --allow-degenerate to fit anyway",
        ));
    }
    let init = match args.init {
        InitKind::Random => Init::default(),
        InitKind::Constant => Init::Constant,
        InitKind::File => {
            let path = args
                .init_file
                .as_deref()
                .expect("clap requires --init-file");
            Init::Given(read_input(path)?)
        }
    };
    let config = RunConfig {
        max_iterations: args.max_iter,
        stop_tolerance: args.tol,
        seed: args.seed,
        restarts: args.restarts,
        validate: args.validate,
        init,
        ..RunConfig::default()
    };
    config.check()?;
    let outcome = deautoconv::run(&y, &config)?;
    info!(
        "{} iterations, divergence {:e} -> {:e}",
        outcome.iterations,
        outcome.initial_divergence(),
        outcome.final_divergence()
    );

    let report = json!({
        "input": args.input,
        "data_length": y.len(),
        "data_mass": y.sum(),
        "seed": args.seed,
        "config": config,
        "result": outcome_json(&outcome),
    });
    write_file(
        &args.out_dir.join("x.csv"),
        &io::signal_csv(&outcome.x, Some("x")),
    )?;
    write_file(
        &args.out_dir.join("trace.csv"),
        &io::trace_csv(&outcome.trace),
    )?;
    write_file(&args.out_dir.join("report.json"), &to_json(&report))?;
    Ok(())
}

fn true_x_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_true_x.{}", ext.to_string_lossy()),
        None => format!("{stem}_true_x"),
    };
    out.with_file_name(name)
}

fn cmd_generate(args: GenerateArgs) -> CliResult {
    match args.kind {
        Kind::Exact => {
            let (x, y) = experiments::generate_exact(args.m, args.seed)?;
            write_file(&args.out, &io::signal_csv(&y, None))?;
            write_file(&true_x_path(&args.out), &io::signal_csv(&x, None))?;
        }
        Kind::Random => {
            let y = experiments::generate_random(args.m, args.k_scale, args.seed)?;
            write_file(&args.out, &io::signal_csv(&y, None))?;
        }
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> CliResult {
    let base = match args.kind {
        Kind::Exact => ExperimentSpec::exact(args.m, args.seed),
        Kind::Random => ExperimentSpec::random(args.m, args.k_scale, args.seed),
    };
    let spec = ExperimentSpec {
        kind: args.kind.into(),
        k_scale: args.k_scale,
        iterations: args.iterations,
        restarts: args.restarts.unwrap_or(base.restarts),
        validate: args.validate,
        ..base
    };
    let result = experiments::run_experiment(&spec)?;

    let dir = &args.out_dir;
    write_file(&dir.join("y.csv"), &io::signal_csv(&result.y, Some("y")))?;
    if let Some(x) = &result.true_x {
        write_file(&dir.join("true_x.csv"), &io::signal_csv(x, Some("x")))?;
    }
    let mut runs = Vec::new();
    for run in &result.runs {
        let entry = match &run.outcome {
            Ok(outcome) => {
                let trace = format!("run_{}_trace.csv", run.restart);
                let x = format!("run_{}_x.csv", run.restart);
                write_file(&dir.join(&trace), &io::trace_csv(&outcome.trace))?;
                write_file(&dir.join(&x), &io::signal_csv(&outcome.x, Some("x")))?;
                json!({
                    "restart": run.restart,
                    "init_seed": run.init_seed,
                    "trace_file": trace,
                    "x_file": x,
                    "result": outcome_json(outcome),
                    "reduction": run.reduction(),
                    "recovery_error": run.recovery_error,
                    "fixed_point_distance": run.fixed_point_distance,
                    "sudden_drops": experiments::sudden_drops(outcome, 20, 10.0),
                })
            }
            Err(message) => {
                log::warn!("restart {} failed: {message}", run.restart);
                json!({
                    "restart": run.restart,
                    "init_seed": run.init_seed,
                    "error": message,
                })
            }
        };
        runs.push(entry);
    }
    let summary = json!({
        "spec": spec,
        "data_file": "y.csv",
        "true_x_file": result.true_x.as_ref().map(|_| "true_x.csv"),
        "completed": result.completed(),
        "best_restart": result.best().map(|r| r.restart),
        "runs": runs,
    });
    write_file(&dir.join("summary.json"), &to_json(&summary))?;
    if result.completed() == 0 {
        return Err(Failure::new(8, "no run completed"));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
