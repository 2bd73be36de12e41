use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mono_split_cli::commands::{cmd_reproduce, cmd_run, ReproduceOptions, Table, DEFAULT_PLAYERS, DEFAULT_TRIALS};
use mono_split_cli::error::CliResult;
use mono_split_cli::harness::resolve_jobs;
use mono_split_cli::validate::{cmd_validate, SuiteOptions};

#[derive(Parser)]
#[command(name = "mono-split", version, about = "Stochastic forward-backward-forward splitting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every solver block of an experiment config.
    Run {
        config: PathBuf,
        /// Worker threads (default: MONO_SPLIT_JOBS, then all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Regenerate one of the comparison tables.
    Reproduce {
        /// table2, table3 or table4
        table: String,
        /// Fraction of the full evaluation budgets.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of players in the Cournot game.
        #[arg(long, default_value_t = DEFAULT_PLAYERS)]
        players: usize,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
    },
    /// Check the standing assumptions of an instance document.
    Validate {
        instance: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { config, jobs } => {
            let summary = cmd_run(&config, resolve_jobs(jobs))?;
            for r in &summary.rows {
                println!(
                    "{:<16} L={:<6} error={:.3e} ci=[{:.3e}, {:.3e}] time={:.3}s",
                    r.solver, r.label, r.error_mean, r.ci_low, r.ci_high, r.time_mean_s
                );
            }
            println!("wrote {}", summary.aggregate_path.display());
        }
        Command::Reproduce { table, scale, out, jobs, seed, players, trials } => {
            let table: Table = table.parse()?;
            let mut opts = ReproduceOptions::new(out);
            opts.scale = scale;
            opts.jobs = resolve_jobs(jobs);
            opts.seed = seed;
            opts.players = players;
            opts.trials = trials;
            let report = cmd_reproduce(table, &opts)?;
            print!("{}", report.text);
            println!("wrote {}", opts.out.join("aggregate.csv").display());
        }
        Command::Validate { instance, seed } => {
            let opts = SuiteOptions { seed, ..SuiteOptions::default() };
            cmd_validate(&instance, &opts)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
