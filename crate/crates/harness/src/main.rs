use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use porflow::workflow::{self, Overrides};
use porflow::{load_config, CaseConfig, HarnessError};

#[derive(Parser)]
#[command(name = "porflow", version, about = "Two-phase reservoir simulation and physics-informed surrogate training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Case file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Target training loss per step.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Newton simulator.
    Simulate(Common),
    /// Train one network per timestep.
    Train(Common),
    /// Replay trained checkpoints.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/checkpoints`.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Score a predicted trajectory against a reference.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/prediction.pftr`.
        #[arg(long)]
        predicted: Option<PathBuf>,
        /// Defaults to `<out>/reference.pftr`, simulated when absent.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Time the simulator and the network on several grid sizes.
    Bench(Common),
    /// Evaluate checkpoints on random control schedules.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<CaseConfig, HarnessError> {
    let mut cfg = load_config(&common.config)?;
    cfg.apply(&Overrides { out: common.out.clone(), seed: common.seed, sigma: common.sigma, max_epochs: common.max_epochs })?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = load(&c)?;
            let sim = workflow::run_simulate(&cfg)?;
            let iters: usize = sim.trajectory.diagnostics.iter().map(|d| d.newton_iterations).sum();
            println!("simulated {} steps ({iters} Newton iterations) -> {}", sim.trajectory.n_steps(), cfg.output.dir.display());
        }
        Command::Train(c) => {
            let cfg = load(&c)?;
            let out = workflow::run_train(&cfg, |r| {
                eprintln!("step {:>4}: {} epochs, loss {:.4e} ({:.1}s)", r.step, r.epochs_used, r.final_loss, r.wall_clock_secs)
            })?;
            println!(
                "trained {} steps; mean MAPE pressure {:.3e}, saturation {:.3e} -> {}",
                out.run.records.len(),
                out.report.mean_pressure(),
                out.report.mean_saturation(),
                cfg.output.dir.display()
            );
        }
        Command::Infer { common, checkpoints } => {
            let cfg = load(&common)?;
            let pred = workflow::run_infer(&cfg, checkpoints.as_deref())?;
            let total: f64 = pred.step_secs.iter().sum();
            println!("inferred {} steps in {total:.3}s -> {}", pred.step_secs.len(), cfg.output.dir.display());
        }
        Command::Compare { common, predicted, reference } => {
            let cfg = load(&common)?;
            let r = workflow::run_compare(&cfg, predicted.as_deref(), reference.as_deref())?;
            println!("mean MAPE pressure {:.3e}, saturation {:.3e}", r.mean_pressure(), r.mean_saturation());
        }
        Command::Bench(c) => {
            let cfg = load(&c)?;
            println!("{:>9} {:>7} {:>10} {:>12} {:>12} {:>8}", "grid", "dofs", "params", "infer_s", "sim_s", "speedup");
            for r in workflow::run_bench(&cfg)? {
                println!(
                    "{:>9} {:>7} {:>10} {:>12.4e} {:>12.4e} {:>8.2}",
                    r.grid, r.dofs, r.parameter_count, r.inference_secs, r.sim_secs, r.speedup
                );
            }
        }
        Command::Sweep { common, checkpoints } => {
            let cfg = load(&common)?;
            for e in workflow::run_sweep(&cfg, checkpoints.as_deref())? {
                println!(
                    "period {:>5} days: mean MAPE pressure {:.3e}, saturation {:.3e} over {} schedules",
                    e.period,
                    e.mean_pressure(),
                    e.mean_saturation(),
                    e.reports.len()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
