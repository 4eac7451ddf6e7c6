use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use multicap::pipeline::{exit_code, Pipeline};

/// Train, prune and regrow small CNNs into multi-capacity models, then
/// schedule and benchmark them.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Pipeline config (JSON).
    #[arg(long, global = true, default_value = "configs/toy.json")]
    config: PathBuf,
    /// Overrides the config's run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts and manifests.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Verify bit-exact extraction and freezing; reject wall-clock latency.
    #[arg(long, global = true)]
    strict: bool,
    /// Check greedy plans against the exhaustive optimum.
    #[arg(long, global = true)]
    oracle: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every application's vanilla model.
    Train,
    /// Iteratively prune the vanilla models and record roadmaps.
    Prune,
    /// Regrow the pruned filters into multi-capacity models.
    Recover,
    /// Profile accuracy, latency and memory of every level.
    Profile,
    /// Plan one allocation for the configured apps or a request file.
    Schedule {
        #[arg(long)]
        request: Option<PathBuf>,
    },
    /// Generate benchmark traces and simulate every scheme.
    Simulate,
    /// Render metrics tables and sweep data.
    Report {
        /// Report on this metrics file instead of the pipeline's own.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Run every stage in order.
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn run(cli: &Cli) -> multicap::Result<()> {
    let p = Pipeline::open(&cli.config, &cli.out, cli.seed)?
        .with_strict(cli.strict)
        .with_oracle(cli.oracle);
    match &cli.command {
        Command::Train => {
            for r in p.train()? {
                println!(
                    "{}: test accuracy {:.4} after {} epochs",
                    r.app, r.test_accuracy, r.epochs_run
                );
            }
        }
        Command::Prune => {
            for r in p.prune()? {
                let accs: Vec<String> = r
                    .records
                    .iter()
                    .map(|x| format!("{:.3}", x.accuracy))
                    .collect();
                println!(
                    "{} footprints, accuracies [{}]",
                    r.records.len(),
                    accs.join(", ")
                );
            }
        }
        Command::Recover => {
            for r in p.recover()? {
                println!(
                    "{}: {} levels, stored {} B vs {} B separately",
                    r.app, r.levels, r.stored_bytes, r.separate_bytes
                );
            }
        }
        Command::Profile => {
            for prof in p.profile()? {
                for l in &prof.levels {
                    println!(
                        "{} level {}: accuracy {:.4}, latency {:.6} s, memory {} B",
                        prof.app, l.level, l.accuracy, l.latency, l.memory
                    );
                }
            }
        }
        Command::Schedule { request } => {
            for sp in p.schedule(request.as_deref())?.plans {
                println!("{:?}: objective {:.6}", sp.objective, sp.plan.objective);
                for a in &sp.plan.assignments {
                    println!("  {} level {} share {:.2}", a.app, a.level, a.share);
                }
                if let Some(o) = sp.oracle {
                    println!(
                        "  oracle at quantum {}: optimum {:.6}, gap {:.6}, within 10%: {}",
                        o.quantum, o.optimal_objective, o.gap, o.within_ten_percent
                    );
                }
            }
        }
        Command::Simulate => {
            let (metrics, _) = p.simulate()?;
            println!(
                "baseline: accuracy {:.4}, {:.2} fps",
                metrics.baseline.accuracy, metrics.baseline.frame_rate
            );
            for (m, c) in metrics.runs.iter().zip(&metrics.comparisons) {
                println!(
                    "{:?}: accuracy {:.4}, {:.2} fps, gain {:.2} pp, speedup {:.2}x",
                    m.scheme, m.accuracy, m.frame_rate, c.accuracy_gain, c.speedup
                );
            }
        }
        Command::Report { metrics } => print!("{}", p.report(metrics.as_deref())?),
        Command::All => print!("{}", p.run_all()?),
    }
    Ok(())
}
