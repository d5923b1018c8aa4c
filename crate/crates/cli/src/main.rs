use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use specres_cli::commands;
use specres_cli::config::{ExperimentConfig, SolverKind};
use specres_cli::output::ResultTable;

#[derive(Parser)]
#[command(name = "specres", version, about = "Frequency-selective spectral super-resolution experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; the built-in 8x8 two-tone scene when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    solver: Option<SolverArg>,
    /// Drop the band constraints: no refinement, full-width bands.
    #[arg(long, global = true)]
    no_fs: bool,
    #[arg(long, global = true)]
    trials: Option<usize>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SolverArg {
    Constrained,
    Regularized,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scene (trial 0) as JSON.
    Synth,
    /// Solve a scene file and write the solution and its trace.
    Solve {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Per-iteration NMSE and residuals.
    Convergence,
    /// Success rate over the (N_s, r) sweep.
    PhaseTransition,
    /// Frequency RMSE over the SNR sweep.
    RmseSnr,
    /// Dual polynomial modulus over the bands and its peaks.
    DualSurface,
    /// Solve time per problem size.
    Bench,
}

fn load_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::reference(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(solver) = common.solver {
        cfg.solver = Some(match solver {
            SolverArg::Constrained => SolverKind::Constrained,
            SolverArg::Regularized => SolverKind::Regularized,
        });
    }
    if common.no_fs {
        cfg.fs = false;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    cfg.validate().context("config after command-line overrides")?;
    Ok(cfg)
}

fn print_table(table: &ResultTable) {
    println!("{}", table.columns.join("\t"));
    for row in table.rows.iter().take(20) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        println!("{}", cells.join("\t"));
    }
    if table.rows.len() > 20 {
        println!("... {} rows", table.rows.len());
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli.common)?;
    let written = match cli.command {
        Command::Synth => commands::synth(&cfg)?,
        Command::Solve { scene } => {
            let scene = commands::load_scene(&scene)?;
            let (written, solved) = commands::solve(&cfg, &scene)?;
            println!("iterations {} objective {:.6e} nmse {:.3e}", solved.output.trace.len(), solved.output.final_objective(), solved.nmse);
            written
        }
        Command::Convergence => {
            let (written, table) = commands::convergence(&cfg)?;
            if let Some(last) = table.rows.last() {
                println!("final nmse {:.3e} after {} iterations", last[1], table.rows.len());
            }
            written
        }
        Command::PhaseTransition => {
            let (written, table) = commands::phase_transition(&cfg)?;
            print_table(&table);
            written
        }
        Command::RmseSnr => {
            let (written, table) = commands::rmse_snr(&cfg)?;
            print_table(&table);
            written
        }
        Command::DualSurface => {
            let (written, report) = commands::dual_surface(&cfg)?;
            println!("level {:.4} max {:.4} nmse {:.3e}", report.level, report.surface.max(), report.nmse);
            for p in &report.peaks {
                println!("peak {:?} {:.4}", p.freq, p.value);
            }
            written
        }
        Command::Bench => {
            let (written, table) = commands::bench(&cfg)?;
            print_table(&table);
            written
        }
    };
    for path in written.0 {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
