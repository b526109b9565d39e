//! Command-line driver: `simulate`, `sweep`, `demo-shift`, `ripcheck`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use swiftlink::harness::{
    demo_shift, ripcheck_suite, simulate, sweep, write_grid_csv, write_results_csv, write_rip_csv, write_sweep_csv,
    ExperimentConfig,
};
use swiftlink::ripcheck::trial_rng;
use swiftlink::trajectories::TrajectoryKind;
use swiftlink::Error;

#[derive(Parser)]
#[command(name = "swiftlink", version, about = "CFO-robust compressive beam alignment experiments")]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Permit Swift-Link runs at CFOs outside the correctable range.
    #[arg(long)]
    override_range: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Per-trial results for every method and operating point.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Fill the runtime_ms column (makes the output run-dependent).
        #[arg(long)]
        timings: bool,
    },
    /// Mean and standard error per (SNR, CFO, M, method) cell.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Beamspace magnitude grid for a single component under CFO.
    DemoShift {
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// CFO per measurement slot, radians.
        #[arg(long, default_value_t = 0.09)]
        epsilon: f64,
        #[arg(long, value_enum, default_value_t = DemoKind::Row)]
        kind: DemoKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lemma and expected-energy checks; exit code 3 on any violation.
    Ripcheck {
        #[command(flatten)]
        common: Common,
        /// Also write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoKind {
    Row,
    Block,
    P,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Validation(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
        cfg.rip_trials = t;
    }
    cfg.override_range |= common.override_range;
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.cmd {
        Cmd::Simulate { common, timings } => {
            let cfg = load(&common)?;
            cfg.validate()?;
            let rows = simulate(&cfg)?;
            write_results_csv(&rows, output(common.out.as_deref())?, timings)?;
        }
        Cmd::Sweep { common } => {
            let cfg = load(&common)?;
            cfg.validate()?;
            write_sweep_csv(&sweep(&cfg)?, output(common.out.as_deref())?)?;
        }
        Cmd::DemoShift { n, epsilon, kind, seed, out } => {
            let kind = match kind {
                DemoKind::Row => TrajectoryKind::Row,
                DemoKind::Block => TrajectoryKind::Block,
                DemoKind::P => TrajectoryKind::P,
            };
            let g = demo_shift(n, epsilon, kind, &mut trial_rng(seed, 0))
                .map_err(|e| Failure::Validation(e.to_string()))?;
            write_grid_csv(&g, output(out.as_deref())?)?;
        }
        Cmd::Ripcheck { common, json } => {
            let cfg = load(&common)?;
            let suite = ripcheck_suite(&cfg)?;
            write_rip_csv(&suite, output(common.out.as_deref())?)?;
            if let Some(p) = json {
                let text = serde_json::to_string_pretty(&suite).expect("report serializes");
                std::fs::write(&p, text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
            }
            let v = suite.violations();
            if v > 0 {
                eprintln!("ripcheck: {v} bound violation(s)");
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}
