use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phybandit::envs::EnvConfig;
use phybandit::harness::{emit_bound_curve, parse_config, run_experiment, ExperimentConfig, ALGORITHMS};

/// Batch simulator for wireless decision problems.
#[derive(Debug, Parser)]
#[command(name = "phybandit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment described by a JSON configuration.
    Run {
        config: PathBuf,
        /// Output directory (overrides the configuration).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Master seed (overrides the configuration).
        #[arg(long)]
        seed: Option<u64>,
        /// Number of replications (overrides the configuration).
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Write the Lai-Robbins lower-bound curve of a Bernoulli configuration.
    BoundCurve {
        config: PathBuf,
        /// Output CSV file; standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the registered agent ids, one per line.
    ListAlgorithms,
    /// Print the registered environment ids, one per line.
    ListEnvs,
}

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

fn load(path: &PathBuf) -> Result<ExperimentConfig, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(CONFIG_ERROR)
    })?;
    parse_config(&text).map_err(|errs| {
        eprintln!("error: invalid configuration {}:", path.display());
        for e in &errs.errors {
            eprintln!("  {e}");
        }
        ExitCode::from(CONFIG_ERROR)
    })
}

fn runtime_failure(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(RUNTIME_ERROR)
}

/// Like [`runtime_failure`], except that a closed standard output (as in
/// `phybandit list-envs | head -1`) ends the command quietly.
fn stdout_failure(e: phybandit::Error) -> ExitCode {
    if e.is_broken_pipe() {
        return ExitCode::SUCCESS;
    }
    runtime_failure(e)
}

fn run(cli: Cli) -> Result<(), ExitCode> {
    match cli.command {
        Command::Run {
            config,
            output,
            seed,
            replications,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(n) = replications {
                if n == 0 {
                    eprintln!("error: --replications must be at least 1");
                    return Err(ExitCode::from(CONFIG_ERROR));
                }
                cfg.replications = n;
            }
            let dir = output.unwrap_or_else(|| cfg.resolved_output_dir());
            let summary = run_experiment(&cfg, &dir).map_err(runtime_failure)?;
            let agg = &summary.aggregate;
            println!(
                "{}: {} replication(s), final regret {:.4} ± {:.4}, reward sum {:.4} ± {:.4} -> {}",
                cfg.name,
                agg.n,
                agg.final_regret_mean,
                agg.final_regret_ci95,
                agg.reward_sum_mean,
                agg.reward_sum_ci95,
                dir.display()
            );
            if agg.failed > 0 {
                eprintln!("warning: {} replication(s) failed; see summary.csv", agg.failed);
            }
        }
        Command::BoundCurve { config, output } => {
            let cfg = load(&config)?;
            match output {
                Some(path) => {
                    let file = fs::File::create(&path).map_err(runtime_failure)?;
                    emit_bound_curve(&cfg, io::BufWriter::new(file)).map_err(runtime_failure)?;
                }
                None => emit_bound_curve(&cfg, io::stdout().lock()).map_err(stdout_failure)?,
            }
        }
        Command::ListAlgorithms => {
            let mut out = io::stdout().lock();
            for (id, _) in ALGORITHMS {
                writeln!(out, "{id}").map_err(|e| stdout_failure(e.into()))?;
            }
        }
        Command::ListEnvs => {
            let mut out = io::stdout().lock();
            for id in EnvConfig::IDS {
                writeln!(out, "{id}").map_err(|e| stdout_failure(e.into()))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { CONFIG_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
