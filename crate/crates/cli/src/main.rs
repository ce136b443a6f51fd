//! `goemax`: solve, sweep and validate from a JSON experiment config.

mod output;
mod validate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use goemax_core::config::ExperimentConfig;
use goemax_core::effectiveness::FailureScale;
use goemax_core::optimizer::{solve_algorithm1, Tying};
use goemax_core::policy::{scheme_betas, SchemeKind, ThresholdPolicy};
use goemax_core::simulator::{sweep_states, sweep_threshold, write_states_csv, write_threshold_csv, SimSettings};
use goemax_core::Instance;
use serde::Serialize;

use crate::output::{header_lines, write_file, write_json};

const EXIT_CONFIG: u8 = 2;
const EXIT_CONVERGENCE: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "goemax", version, about = "Goal-oriented multiple access: optimizer, sweeps and validation")]
struct Cli {
    /// JSON experiment config; defaults apply to absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Delivery-failure scaling.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Restricts the run to one acquisition scheme.
    #[arg(long, global = true, value_enum)]
    scheme: Option<Scheme>,
    /// Reduced draw counts with tolerances widened three times.
    #[arg(long, global = true)]
    quick: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimizes the activation probabilities and writes solution.json.
    Solve {
        /// One activation probability shared by every ISA and attribute.
        #[arg(long)]
        tied_alpha: bool,
    },
    /// Runs a simulator sweep and writes its CSV.
    Sweep {
        #[arg(value_enum)]
        which: SweepKind,
    },
    /// Runs the oracle checks and writes validation.json.
    Validate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    AsPrinted,
    Normalized,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scheme {
    Uniform,
    Change,
    Semantics,
}

impl From<Scheme> for SchemeKind {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Uniform => SchemeKind::Uniform,
            Scheme::Change => SchemeKind::ChangeAware,
            Scheme::Semantics => SchemeKind::SemanticsAware,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepKind {
    Fig2,
    Fig3,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let result = match cli.command {
        Command::Solve { tied_alpha } => cmd_solve(&cfg, tied_alpha, &cli.out),
        Command::Sweep { which } => cmd_sweep(&cfg, which, cli.quick, &cli.out),
        Command::Validate => cmd_validate(&cfg, cli.quick, &cli.out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_json(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = cli.mode {
        cfg.model.failure_scale = match mode {
            Mode::AsPrinted => FailureScale::AsPrinted,
            Mode::Normalized => FailureScale::Normalized,
        };
    }
    if let Some(scheme) = cli.scheme {
        cfg.schemes = vec![scheme.into()];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(value) = std::env::var("GOEMAX_THREADS") {
        let threads: usize = value.parse().with_context(|| format!("GOEMAX_THREADS={value:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SchemeThresholds {
    scheme: SchemeKind,
    beta: Vec<f64>,
    v_th: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    config_sha256: String,
    seed: u64,
    #[serde(flatten)]
    solution: &'a goemax_core::optimizer::Solution,
    tied: bool,
    thresholds: Vec<SchemeThresholds>,
}

fn cmd_solve(cfg: &ExperimentConfig, tied_alpha: bool, out: &Path) -> anyhow::Result<ExitCode> {
    let mut cfg = cfg.clone();
    if tied_alpha {
        cfg.optimizer.tying = Tying::Global;
    }
    let instance = cfg.instance(0)?;
    let solution = match solve_algorithm1(&instance, &cfg.optimizer) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_CONVERGENCE));
        }
    };
    let thresholds = cfg
        .schemes
        .iter()
        .map(|&scheme| {
            let beta = scheme_betas(&instance, scheme, &solution.alpha_star, 50);
            let policy = ThresholdPolicy::from_alpha(&instance, &solution.alpha_star, &beta);
            SchemeThresholds { scheme, beta, v_th: policy.v_th }
        })
        .collect();
    let report = SolveReport {
        config_sha256: output::config_hash(&cfg),
        seed: cfg.seed,
        solution: &solution,
        tied: solution.is_tied(&instance),
        thresholds,
    };
    let path = out.join("solution.json");
    write_json(&path, &report)?;
    println!(
        "objective {:.6e}, constraint gap {:.2e}, KKT residual {:.2e}, converged {} -> {}",
        solution.objective,
        solution.constraint_gap,
        solution.kkt_residual,
        solution.converged,
        path.display()
    );
    Ok(if solution.converged && solution.feasible {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CONVERGENCE)
    })
}

fn cmd_sweep(cfg: &ExperimentConfig, which: SweepKind, quick: bool, out: &Path) -> anyhow::Result<ExitCode> {
    let mut cfg = cfg.clone();
    if quick {
        cfg.simulation.seeds = cfg.simulation.seeds.min(4);
        cfg.simulation.intervals = cfg.simulation.intervals.min(100);
    }
    let mut header = header_lines(&cfg);
    let mut buf = Vec::new();
    let name = match which {
        SweepKind::Fig2 => {
            let instances = instances(&cfg)?;
            let settings = SimSettings::new(cfg.simulation.intervals, cfg.seed);
            let rows = sweep_threshold(&instances, &cfg.schemes, &cfg.sweep.v_th_grid(), &settings);
            header.push(format!("euu_min={} euu_level={}", cfg.euu_min, cfg.goe_functions().g_inv(3, cfg.euu_min)));
            write_threshold_csv(&mut buf, &header, &rows)?;
            "fig2.csv"
        }
        SweepKind::Fig3 => {
            let step = if quick { 0.05 } else { 0.01 };
            let rows = sweep_states(&cfg, &cfg.sweep.states_grid, &cfg.sweep.query_grid, step)?;
            header.push(format!("grid_step={step}"));
            write_states_csv(&mut buf, &header, &rows)?;
            "fig3.csv"
        }
    };
    let path = out.join(name);
    write_file(&path, &buf)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn instances(cfg: &ExperimentConfig) -> anyhow::Result<Vec<Instance>> {
    (0..cfg.simulation.seeds as u64)
        .map(|s| cfg.instance(s).with_context(|| format!("building replicate {s}")))
        .collect()
}

fn cmd_validate(cfg: &ExperimentConfig, quick: bool, out: &Path) -> anyhow::Result<ExitCode> {
    let report = validate::run(cfg, quick)?;
    for check in &report.checks {
        let status = match (check.pass, check.informational) {
            (true, _) => "PASS",
            (false, true) => "INFO",
            (false, false) => "FAIL",
        };
        println!("{status} {}: measured {:.4e}, tolerance {:.4e}; {}", check.name, check.measured, check.tolerance, check.detail);
    }
    let path = out.join("validation.json");
    write_json(&path, &report)?;
    println!("wrote {}", path.display());
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(EXIT_VALIDATION) })
}
