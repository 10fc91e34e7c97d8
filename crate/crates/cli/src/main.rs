//! Experiment runner CLI: `run` trains a beta/seed sweep and writes one
//! metrics CSV and manifest per cell, `plot` renders the metric charts for a
//! finished run directory, and `verify` executes a named verification suite
//! and exits nonzero on any failure.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use legible_marl_core::harness::{self, ExperimentConfig};
use legible_marl_core::plot;
use legible_marl_core::verify::{self, Suite};

#[derive(Parser)]
#[command(name = "legible-marl", version, about = "Multiagent active-legibility workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (beta, seed) cell of a sweep.
    Run {
        /// JSON config file; omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config's beta list.
        #[arg(long = "beta", num_args = 1..)]
        betas: Vec<f64>,
        /// Override the config's seed list.
        #[arg(long = "seed", num_args = 1..)]
        seeds: Vec<u64>,
        /// Override the number of training episodes per cell.
        #[arg(long)]
        episodes: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render SVG charts (reward, PCR, PTR, success) for a run directory.
    Plot {
        dir: PathBuf,
        /// Rolling-mean window in episodes.
        #[arg(long, default_value_t = 1000)]
        window: usize,
    },
    /// Run a verification suite: unit, properties, desk, or all.
    Verify { suite: String },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, betas, seeds, episodes, out } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading config {}", path.display()))?;
                    ExperimentConfig::from_json(&text)?
                }
                None => ExperimentConfig::default(),
            };
            if !betas.is_empty() {
                cfg.betas = betas;
            }
            if !seeds.is_empty() {
                cfg.seeds = seeds;
            }
            if let Some(episodes) = episodes {
                cfg.episodes = episodes;
            }
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            let summaries = harness::run(&cfg)?;
            for s in &summaries {
                println!(
                    "cell beta={} seed={} -> {} ({} episodes)",
                    s.beta,
                    s.seed,
                    s.dir.display(),
                    s.rows
                );
            }
            println!("{} cells complete under {}", summaries.len(), cfg.out_dir.display());
            Ok(())
        }
        Command::Plot { dir, window } => {
            let written = plot::plot_run_dir(&dir, window)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Verify { suite } => {
            let Some(suite) = Suite::parse(&suite) else {
                bail!("unknown suite `{suite}`; expected unit, properties, desk, or all");
            };
            let reports = verify::run_suite(suite);
            print!("{}", verify::render_report(&reports));
            if verify::all_passed(&reports) {
                println!("suite ok");
                Ok(())
            } else {
                bail!("one or more criteria failed");
            }
        }
    }
}
