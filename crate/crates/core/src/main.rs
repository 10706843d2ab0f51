use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use taskdrop::experiment::{self, ExperimentConfig, ExperimentOutput};
use taskdrop::model::Model;
use taskdrop::taskgen::{Dataset, Split};
use taskdrop::Result;

#[derive(Parser)]
#[command(name = "taskdrop", version, about = "Continual learning with task-aware unit masks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed (replaces the config's seed list).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Task family: hi, mix or lo.
    #[arg(long)]
    preset: Option<String>,
    /// Retention ratio for TaskDrop and StandardDropout.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    orderings: Option<usize>,
}

#[derive(Args)]
struct Grid {
    /// Comma-separated retention ratios (defaults to the config's grid).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured variant over all seeds and orderings.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// A^{≤T} of TaskDrop across retention ratios.
    SweepP {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: Grid,
    },
    /// TaskDrop vs per-sample dropout across retention ratios.
    CompareDropout {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: Grid,
    },
    /// Export masked final encoder outputs for one task's examples.
    DumpReps {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: usize,
        /// JSONL dataset of {"tokens", "label"} records.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "reps.jsonl")]
        out: PathBuf,
    },
    /// Write a family's datasets and embedding table.
    GenData {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(preset) = &c.preset {
        cfg.preset = Some(preset.clone());
        cfg.family = None;
    }
    if let Some(seed) = c.seed {
        cfg.seeds = vec![seed];
    }
    if c.p.is_some() {
        cfg.p = c.p;
    }
    if let Some(n) = c.orderings {
        cfg.orderings = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(out: &Path, output: &ExperimentOutput, file: &str) {
    eprintln!(
        "{} runs, {} summary rows written to {}",
        output.runs.len(),
        output.summary.len(),
        out.join(file).display()
    );
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common } => {
            let cfg = load_config(&common)?;
            let out = experiment::run_experiment(&cfg, Some(&common.out))?;
            report(&common.out, &out, "summary.csv");
        }
        Command::SweepP { common, grid } => {
            let cfg = load_config(&common)?;
            let g = grid.grid.unwrap_or_else(|| cfg.p_grid.clone());
            let out = experiment::sweep_retention(&cfg, &g, Some(&common.out))?;
            report(&common.out, &out, "sweep.csv");
        }
        Command::CompareDropout { common, grid } => {
            let cfg = load_config(&common)?;
            let g = grid.grid.unwrap_or_else(|| cfg.p_grid.clone());
            let out = experiment::compare_dropout(&cfg, &g, Some(&common.out))?;
            report(&common.out, &out, "compare.csv");
        }
        Command::DumpReps {
            checkpoint,
            task,
            data,
            out,
        } => {
            let model = Model::load(&checkpoint)?;
            let dataset = Dataset::read_jsonl(&data, task, Split::Test)?;
            let reps = experiment::dump_representations(&model, task, &dataset)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            experiment::write_representations(&out, &reps)?;
            eprintln!("{} representations written to {}", reps.len(), out.display());
        }
        Command::GenData { common } => {
            let cfg = load_config(&common)?;
            let family = experiment::generate_data(&cfg, &common.out)?;
            eprintln!("{} tasks written to {}", family.len(), common.out.display());
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

