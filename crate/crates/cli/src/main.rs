//! Command-line harness: run benchmarks or external models, print the
//! exploration plan, and re-estimate from saved designs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use rare_ring::benchmarks::{Benchmark, BenchmarkKind, BinaryOnly, ExternalEvaluator, LimitState};
use rare_ring::classifier::{DesignRecord, ExperimentalDesign};
use rare_ring::driver::{self, RunConfig};
use rare_ring::exploration_plan::plan_table;
use rare_ring::gaussian_geometry::SpaceDim;
use rare_ring::reporting::{self, HistoryFormat, RunOutcome, RunReport};
use rare_ring::sensitivity::DEFAULT_K;
use rare_ring::Error;

const OUT_ENV: &str = "RARE_RING_OUT";
const DEFAULT_OUT: &str = "rare-ring-out";

#[derive(Parser)]
#[command(
    name = "rare-ring",
    version,
    about = "Rare-event probabilities by adaptive sequential sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sequential analysis on a benchmark or an external model.
    Run(RunArgs),
    /// List the built-in benchmarks with their reference probabilities.
    ListBenchmarks,
    /// Print the exploration layers: level, exterior probability, count, radius.
    Plan {
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 15)]
        levels: u32,
    },
    /// Estimate again from a saved design (a report or a bare design JSON).
    EstimateOnly {
        #[arg(long)]
        ed: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        n_is: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(
        long,
        conflicts_with = "external",
        required_unless_present = "external"
    )]
    benchmark: Option<String>,
    /// Model command; it reads coordinate lines and answers one label per line.
    #[arg(long, num_args = 1.., allow_hyphen_values = true)]
    external: Option<Vec<String>>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_is: Option<usize>,
    #[arg(long)]
    n_is_final: Option<usize>,
    #[arg(long)]
    estimate_every: Option<usize>,
    #[arg(long)]
    stop_psi_ratio: Option<f64>,
    /// Output directory; defaults to $RARE_RING_OUT, then ./rare-ring-out.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Hide raw performance values from the driver.
    #[arg(long)]
    binary_only: bool,
    #[arg(long)]
    force: bool,
    /// Run this many consecutive seeds and print median results.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// JSON file with run settings; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::ListBenchmarks => {
            list_benchmarks();
            Ok(())
        }
        Command::Plan { dim, levels } => plan(dim, levels),
        Command::EstimateOnly { ed, n_is, seed, k } => estimate_only(&ed, n_is, seed, k),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::Config(_) | Error::Domain(_)) => 2,
        Some(Error::Evaluator(_)) => 3,
        _ => 1,
    }
}

fn run_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(if let Some(v) = args.$field { cfg.$field = v; })*};
    }
    set!(
        budget,
        seed,
        n_is,
        n_is_final,
        estimate_every,
        stop_psi_ratio
    );
    cfg.validate()?;
    Ok(cfg)
}

/// The model to run plus what the report needs to know about it.
struct Model {
    evaluator: Box<dyn LimitState>,
    name: Option<String>,
    p_ref: Option<f64>,
}

fn model(args: &RunArgs) -> anyhow::Result<Model> {
    if let Some(cmd) = &args.external {
        let dim = args
            .dim
            .ok_or_else(|| Error::Config("--external needs --dim".into()))?;
        let ev = ExternalEvaluator::new(cmd.clone(), SpaceDim::new(dim)?)?;
        return Ok(Model {
            evaluator: Box::new(ev),
            name: None,
            p_ref: None,
        });
    }
    let name = args
        .benchmark
        .as_deref()
        .expect("clap requires a benchmark or an external command");
    let bench = Benchmark::new(name, args.dim)?;
    let p_ref = bench.reference().p_f;
    let name = Some(bench.name().to_string());
    let ev: Box<dyn LimitState> = if args.binary_only {
        Box::new(BinaryOnly(bench))
    } else {
        Box::new(bench)
    };
    Ok(Model {
        evaluator: ev,
        name,
        p_ref: Some(p_ref),
    })
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    if args.repeat == 0 {
        return Err(Error::Config("--repeat must be at least 1".into()).into());
    }
    let base = run_config(&args)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let format = match args.format {
        Format::Csv => HistoryFormat::Csv,
        Format::Json => HistoryFormat::Json,
    };
    let mut outcomes: Vec<RunOutcome> = Vec::new();
    for i in 0..args.repeat {
        let cfg = RunConfig {
            seed: base.seed + i as u64,
            ..base.clone()
        };
        let dir = if args.repeat == 1 {
            out.clone()
        } else {
            out.join(format!("seed-{}", cfg.seed))
        };
        let m = model(&args)?;
        let result = driver::run(cfg.clone(), m.evaluator)?;
        let mut report = RunReport::new(m.name.as_deref(), &cfg, &result, m.p_ref);
        reporting::write_run_outputs(&dir, &mut report, &result.history, format, args.force)?;
        print_run(&report, &dir);
        outcomes.push(report.outcome());
    }
    println!();
    print!("{}", reporting::summarize(&outcomes));
    Ok(())
}

fn print_run(report: &RunReport, dir: &Path) {
    println!(
        "seed {} terminated by {:?} after {} evaluations, output in {}",
        report.config.seed,
        report.termination,
        report.n_sim,
        dir.display()
    );
    for e in report.estimates.iter().filter(|e| e.label.is_rare()) {
        println!(
            "  label {:>3}  p_hat {:.6e}  cov {:.4}",
            e.label.code(),
            e.p_hat,
            e.cov
        );
    }
    for s in &report.sensitivities {
        let v: Vec<String> = s.s.iter().map(|x| format!("{x:.4}")).collect();
        println!("  label {:>3}  s^2 [{}]", s.label.code(), v.join(", "));
    }
}

fn list_benchmarks() {
    println!("{:<14} {:>4} {:>14}  notes", "name", "dim", "p_ref");
    for kind in BenchmarkKind::ALL {
        let b = Benchmark::new(kind.name(), None).expect("registered benchmark");
        let r = b.reference();
        let dim = if kind == BenchmarkKind::Linear {
            "any".to_string()
        } else {
            b.space_dim().get().to_string()
        };
        println!(
            "{:<14} {:>4} {:>14.6e}  {}",
            kind.name(),
            dim,
            r.p_f,
            r.notes
        );
    }
}

fn plan(dim: usize, levels: u32) -> anyhow::Result<()> {
    if levels == 0 {
        bail!(Error::Config("--levels must be at least 1".into()));
    }
    let rows = plan_table(SpaceDim::new(dim)?, levels)?;
    println!("{:>5} {:>9} {:>7} {:>9}", "level", "p_out", "n_i", "rho_i");
    for r in rows {
        println!(
            "{:>5} {:>9.0e} {:>7} {:>9.4}",
            r.level, r.p_out, r.count, r.radius
        );
    }
    Ok(())
}

fn load_design(path: &Path) -> anyhow::Result<ExperimentalDesign> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let record = value.get("design").cloned().unwrap_or(value);
    let record: DesignRecord = serde_json::from_value(record)
        .map_err(|e| Error::Config(format!("{}: not a design: {e}", path.display())))?;
    Ok(ExperimentalDesign::try_from(record)?)
}

fn estimate_only(path: &Path, n_is: usize, seed: u64, k: usize) -> anyhow::Result<()> {
    if n_is == 0 || k == 0 {
        bail!(Error::Config("--n-is and --k must be at least 1".into()));
    }
    let ed = load_design(path)?;
    let (est, sens) = driver::estimate_only(&ed, seed, n_is, k)?;
    let out = serde_json::json!({
        "n_sim": ed.len(),
        "estimates": est.global.records,
        "localized": est.localized,
        "annulus": est.annulus,
        "sensitivities": sens,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
