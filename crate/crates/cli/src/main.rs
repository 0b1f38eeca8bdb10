//! `ecl`: generate data, train runs, analyze them and summarize grids.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use ecl_core::envsim::{generate_dataset_to_dir, DatasetConfig};
use ecl_core::harness::{train, PreparedDataset, RunConfig};
use ecl_core::neuro::{analyze_run, AnalysisOptions, CheckpointChoice, JPCA_DIMS};
use ecl_core::pipeline::{env_output_root, report, run_grid, ExperimentGrid, DEFAULT_THRESHOLD};

#[derive(Parser)]
#[command(name = "ecl", version, about = "Embodied counting testbed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Checkpoint {
    Best,
    Final,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the counting dataset and write it to disk.
    GenData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Side of the square camera frames in pixels.
        #[arg(long, default_value_t = 64)]
        image_size: usize,
        /// Number of episodes.
        #[arg(long)]
        total: Option<usize>,
    },
    /// Train a single run from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Also write the analysis outputs after training.
        #[arg(long)]
        analyze: bool,
    },
    /// Write the neural analysis of a trained run to `<run>/analysis`.
    Analyze {
        #[arg(long)]
        run: PathBuf,
        /// LSTM layer used for `rdm.csv` and `pca_coords.csv`.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        layer: u8,
        #[arg(long, value_enum, default_value = "final")]
        checkpoint: Checkpoint,
        /// PCA dimensions before the dynamics fit.
        #[arg(long, default_value_t = JPCA_DIMS)]
        k: usize,
        /// Dataset directory; defaults to the one in the run config.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train every run of a grid file, skipping finished runs.
    Grid {
        #[arg(long)]
        config: PathBuf,
        /// Skip the per-run analysis.
        #[arg(long)]
        no_analyze: bool,
        /// Write the summary report when the grid finishes.
        #[arg(long)]
        report: bool,
    },
    /// Aggregate completed runs under an output root into report.csv and report.json.
    Report {
        /// Output root; defaults to $ECL_OUT, then `runs`.
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
}

fn gen_data(seed: u64, out: &Path, image_size: usize, total: Option<usize>) -> Result<()> {
    if image_size == 0 {
        bail!("--image-size must be positive");
    }
    let mut cfg = DatasetConfig::default();
    cfg.render.height = image_size;
    cfg.render.width = image_size;
    if let Some(t) = total {
        cfg.total = t;
    }
    let manifest = generate_dataset_to_dir(seed, &cfg, out)?;
    println!(
        "wrote {} episodes ({} train, {} val) to {}",
        manifest.episodes.len(),
        manifest.split.train.len(),
        manifest.split.val.len(),
        out.display()
    );
    Ok(())
}

fn train_one(config_path: &Path, analyze: bool) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let dataset = ecl_core::envsim::load_dataset(&config.dataset)
        .with_context(|| format!("loading dataset for run {}", config.id))?;
    let data = PreparedDataset::<f32>::new(&dataset)?;
    let run_dir = env_output_root(&config.output_root).join(&config.id);
    info!("training {} into {}", config.id, run_dir.display());
    let outcome = train(&config, &data, Some(&run_dir))?;
    let best = outcome.record.best();
    println!(
        "{}: best val accuracy {} at epoch {}",
        config.id, best.val_count_acc, outcome.record.best_epoch
    );
    if analyze {
        analyze_run(&run_dir, &AnalysisOptions::default())?;
        println!("analysis written to {}", run_dir.join("analysis").display());
    }
    Ok(())
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData {
            seed,
            out,
            image_size,
            total,
        } => gen_data(seed, &out, image_size, total)?,
        Command::Train { config, analyze } => train_one(&config, analyze)?,
        Command::Analyze {
            run,
            layer,
            checkpoint,
            k,
            dataset,
        } => {
            let opts = AnalysisOptions {
                layer: layer as usize,
                checkpoint: match checkpoint {
                    Checkpoint::Best => CheckpointChoice::Best,
                    Checkpoint::Final => CheckpointChoice::Final,
                },
                k,
                dataset,
            };
            let summary = analyze_run(&run, &opts)?;
            for l in &summary.layers {
                println!(
                    "layer {}: rsa rho {} (p {}), rotation quality {}",
                    l.layer,
                    l.rsa.rho,
                    l.rsa.p,
                    l.jpca.quality.map_or("undefined".to_string(), |q| q.to_string())
                );
            }
            println!("analysis written to {}", run.join("analysis").display());
        }
        Command::Grid {
            config,
            no_analyze,
            report: with_report,
        } => {
            let mut grid = ExperimentGrid::load(&config)?;
            if no_analyze {
                grid.analyze = false;
            }
            let root = env_output_root(&grid.output_root);
            let outcome = run_grid(&grid, &root)?;
            println!(
                "{} trained, {} skipped, {} failed",
                outcome.trained.len(),
                outcome.skipped.len(),
                outcome.failed.len()
            );
            for (id, err) in &outcome.failed {
                eprintln!("run {id} failed: {err}");
            }
            if with_report {
                report(&root, grid.threshold)?;
            }
            return Ok(outcome.success());
        }
        Command::Report { root, threshold } => {
            let root = root.unwrap_or_else(|| env_output_root(Path::new("runs")));
            let rep = report(&root, threshold)?;
            println!("{} runs summarized in {}", rep.runs.len(), root.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
