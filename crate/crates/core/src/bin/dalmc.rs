use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dalmc::config::{read_section, ExperimentConfig};
use dalmc::experiment::{self, SweepAxis};
use dalmc::schedules::{Schedule, DIVERGENCE_THRESHOLD};
use dalmc::targets::TargetSpec;
use dalmc::theory::{self, KlInput, PlannerInput};
use dalmc::{Error, Result};

#[derive(Parser)]
#[command(name = "dalmc", version, about = "Diffusion annealed Langevin Monte Carlo experiments")]
struct Cli {
    /// Seed overriding the one in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Target checks.
    Targets {
        #[command(subcommand)]
        action: TargetsCmd,
    },
    /// Schedule constants.
    Schedules {
        #[command(subcommand)]
        action: SchedulesCmd,
    },
    /// Path marginals.
    Paths {
        #[command(subcommand)]
        action: PathsCmd,
    },
    /// Run an experiment: samples.csv, report.json and heatmap.csv when configured.
    Run { config: PathBuf },
    /// Complexity planners.
    Theory {
        #[command(subcommand)]
        action: TheoryCmd,
    },
    /// Sample diagnostics.
    Diagnostics {
        #[command(subcommand)]
        action: DiagnosticsCmd,
    },
    /// Rerun the sampler over a range of one parameter.
    Sweep {
        config: PathBuf,
        /// M, eps_score or kappa.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated increasing values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
    },
}

#[derive(Subcommand)]
enum TargetsCmd {
    /// Build the target and print its smoothness report.
    Validate { file: PathBuf },
}

#[derive(Subcommand)]
enum SchedulesCmd {
    /// Print both schedule constants.
    Check {
        file: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        grid: usize,
    },
}

#[derive(Subcommand)]
enum PathsCmd {
    /// Write heatmap.csv and modes.csv for the diffusion and geometric paths.
    Heatmap { config: PathBuf },
}

#[derive(Subcommand)]
enum DiagnosticsCmd {
    /// Compare samples against the target of a config.
    Compare {
        samples: PathBuf,
        target: PathBuf,
        #[arg(long)]
        bandwidth: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Planner {
    Gaussian,
    Relaxed,
    Heavy,
}

#[derive(Subcommand)]
enum TheoryCmd {
    /// Print (kappa, M) and the KL bound at the plan.
    Plan(PlanArgs),
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    planner: Planner,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    m2: f64,
    #[arg(long)]
    l_max: Option<f64>,
    #[arg(long)]
    l_pi: Option<f64>,
    #[arg(long)]
    k_pi: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Horizon T used for ∫L² ≤ T·L_max² in the KL bound.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn plan(args: &PlanArgs) -> Result<serde_json::Value> {
    let mut input = PlannerInput::new(args.eps, args.d, args.m2);
    input.l_max = args.l_max;
    input.l_pi = args.l_pi;
    input.k_pi = args.k_pi;
    input.alpha = args.alpha;
    let plan = match args.planner {
        Planner::Gaussian => theory::plan_gaussian(&input)?,
        Planner::Relaxed => theory::plan_relaxed(&input)?,
        Planner::Heavy => theory::plan_heavy(&input)?,
    };
    let l = match args.planner {
        Planner::Relaxed => args.l_pi,
        _ => args.l_max,
    };
    let rhs = match l {
        Some(l) => Some(theory::kl_rhs_gaussian(&KlInput {
            kappa: plan.kappa,
            steps: plan.steps_real,
            l_max: l,
            m2: args.m2,
            d: args.d,
            int_l2: args.horizon * l * l,
            eps_score: args.eps,
        })?),
        None => None,
    };
    Ok(json!({ "plan": plan, "kl_rhs": rhs }))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Targets {
            action: TargetsCmd::Validate { file },
        } => {
            let spec: TargetSpec = read_section(&file, "target")?;
            let target = spec.build()?;
            let report = target.smoothness()?;
            print_json(&json!({
                "kind": target.name(),
                "dim": target.dim(),
                "second_moment": target.second_moment(),
                "smoothness": report,
            }))
        }
        Command::Schedules {
            action: SchedulesCmd::Check { file, grid },
        } => {
            let schedule: Schedule = read_section(&file, "schedule")?;
            schedule.validate()?;
            let c = schedule.constants(grid)?;
            print_json(&json!({
                "schedule": schedule,
                "grid": grid,
                "divergence_threshold": DIVERGENCE_THRESHOLD,
                "constants": c,
            }))
        }
        Command::Paths {
            action: PathsCmd::Heatmap { config },
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let exp = cfg.validate()?;
            let h = exp
                .config
                .heatmap
                .clone()
                .ok_or_else(|| Error::config("heatmap", "the config has no [heatmap] section"))?;
            let heat = experiment::heatmap(&exp, &h)?;
            let dir = experiment::resolve_out_dir(&exp.config, &config, cli.out.as_deref());
            std::fs::create_dir_all(&dir)?;
            let mut buf = Vec::new();
            experiment::write_heatmap(&mut buf, &heat)?;
            std::fs::write(dir.join("heatmap.csv"), buf)?;
            let mut buf = Vec::new();
            experiment::write_modes(&mut buf, &heat.modes)?;
            std::fs::write(dir.join("modes.csv"), buf)?;
            print_json(&json!({ "out": dir, "modes": heat.modes }))
        }
        Command::Run { config } => {
            let (report, files) = experiment::run_experiment(&config, cli.out.as_deref(), cli.seed)?;
            print_json(&json!({
                "name": report.name,
                "all_pass": report.all_pass,
                "checks": report.checks.len(),
                "failed": report.checks.iter().filter(|c| !c.pass).map(|c| &c.name).collect::<Vec<_>>(),
                "flagged_chains": report.flagged_chains,
                "files": files,
            }))
        }
        Command::Theory {
            action: TheoryCmd::Plan(args),
        } => print_json(&plan(&args)?),
        Command::Diagnostics {
            action: DiagnosticsCmd::Compare {
                samples,
                target,
                bandwidth,
            },
        } => {
            let spec: TargetSpec = read_section(&target, "target")?;
            let target = spec.build()?;
            let xs = experiment::read_samples(&samples)?;
            let metrics = experiment::compare(&target, &xs, bandwidth, cli.seed.unwrap_or(0))?;
            print_json(&metrics)
        }
        Command::Sweep {
            config,
            axis,
            values,
            replicates,
        } => {
            let (rows, file) =
                experiment::run_sweep(&config, axis, &values, replicates, cli.out.as_deref(), cli.seed)?;
            print_json(&json!({ "file": file, "rows": rows }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
