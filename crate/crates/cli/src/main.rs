use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use stressnet::checkpoint::Checkpoint;
use stressnet::dataset::{load_coarse, sim_dir_name, write_dataset, CoarseSim};
use stressnet::evaluation::rollout;
use stressnet::experiment::{
    evaluate_models, load_all, train_all, write_results, ExperimentConfig, Profile, Variant,
    PAPER_PROFILE_WARNING,
};
use stressnet::model::{Channel, Surrogate};
use stressnet::plot::{write_svg, Series};
use stressnet::sim::{generate_dataset, SimConfig};
use stressnet::Error;

#[derive(Parser)]
#[command(name = "stressnet", version, about = "Maximum-stress surrogate for fracturing brittle plates")]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Dataset directory (written by `generate`, read by everything else).
    #[arg(long, global = true, default_value = "data")]
    data_dir: PathBuf,
    /// JSON file with optional `sim` and `experiment` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "desk")]
    profile: Profile,
    /// Fit normalization bounds on all simulations, test ones included.
    #[arg(long, global = true)]
    paper_faithful_norm: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synthetic dataset into --data-dir.
    Generate {
        /// Defaults to the profile's dataset size.
        #[arg(long)]
        n_sims: Option<usize>,
    },
    /// Train the benchmark models and save them under --out.
    Train {
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Restrict to these channels (repeatable).
        #[arg(long = "channel")]
        channels: Vec<Channel>,
        /// Restrict to these models (repeatable): ha, lstm, bilstm,
        /// stressnet_mse, stressnet_mape, stressnet.
        #[arg(long = "model")]
        models: Vec<Variant>,
    },
    /// Roll every model saved under --out over the test sims and write the
    /// results table, rollout CSVs and plots.
    Evaluate {
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Recursive rollout of one checkpoint on one simulation.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Index of the simulation in --data-dir.
        #[arg(long)]
        sim: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Plot rollout CSVs (`t,truth,pred`) against the ground truth of the first.
    Plot {
        #[arg(required = true)]
        rollouts: Vec<PathBuf>,
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
        #[arg(long, default_value = "rollout")]
        title: String,
    },
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    sim: Option<SimConfig>,
    experiment: Option<ExperimentConfig>,
}

/// Failure classes, each with its own exit status.
enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::InvalidArgument(_) => Failure::Usage(m),
            Error::NonFinite(_) | Error::Domain(_) => Failure::Numeric(m),
            _ => Failure::Data(m),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn read_config(path: Option<&Path>) -> std::result::Result<ConfigFile, Failure> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let bytes = fs::read(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_dataset(dir: &Path) -> std::result::Result<Vec<CoarseSim>, Failure> {
    if !dir.join("dataset.json").exists() {
        return Err(Failure::Data(format!(
            "no dataset in {} (run `stressnet generate` first)",
            dir.display()
        )));
    }
    Ok(load_coarse(dir)?)
}

fn log(msg: &str) {
    eprintln!("{msg}");
}

fn generate(cli: &Cli, file: &ConfigFile, n_sims: Option<usize>) -> Outcome {
    let cfg = file.sim.clone().unwrap_or_default();
    let n = n_sims.unwrap_or_else(|| cli.profile.n_sims());
    log(&format!("simulating {n} records into {}", cli.data_dir.display()));
    let records = generate_dataset(&cfg, n, cli.seed)?;
    write_dataset(&cli.data_dir, &cfg, &records)?;
    let failed = records.iter().filter(|r| r.failure_step.is_some()).count();
    println!("wrote {n} simulations to {} ({failed} failed)", cli.data_dir.display());
    Ok(())
}

fn train(cli: &Cli, file: &ConfigFile, out: &Path, channels: &[Channel], models: &[Variant]) -> Outcome {
    let profile = file.experiment.as_ref().map_or(cli.profile, |c| c.profile);
    if profile == Profile::Paper {
        log(PAPER_PROFILE_WARNING);
    }
    let sims = load_dataset(&cli.data_dir)?;
    let mut cfg = match &file.experiment {
        Some(c) => c.clone(),
        None => ExperimentConfig::for_dataset(cli.profile, cli.seed, sims.len())?,
    };
    cfg.paper_faithful_norm |= cli.paper_faithful_norm;
    if !channels.is_empty() {
        cfg.channels = channels.to_vec();
    }
    if !models.is_empty() {
        cfg.variants = models.to_vec();
    }
    train_all(out, &cfg, &sims, &mut |m| log(m))?;
    println!("saved models under {}", out.join("models").display());
    Ok(())
}

fn evaluate(cli: &Cli, out: &Path) -> Outcome {
    let sims = load_dataset(&cli.data_dir)?;
    let (manifest, models) = load_all(out)?;
    if manifest.n_sims != sims.len() {
        return Err(Failure::Data(format!(
            "models were trained on {} simulations, {} has {}",
            manifest.n_sims,
            cli.data_dir.display(),
            sims.len()
        )));
    }
    let table = evaluate_models(&models, &sims, &manifest.split)?;
    write_results(out, &models, &table)?;
    print!("{}", table.to_text());
    Ok(())
}

fn rollout_one(cli: &Cli, checkpoint: &Path, index: usize, out: &Path) -> Outcome {
    let ckpt = Checkpoint::load(checkpoint)?;
    let sims = load_dataset(&cli.data_dir)?;
    let sim = sims.get(index).ok_or_else(|| {
        Failure::Usage(format!("simulation {index} not in a dataset of {}", sims.len()))
    })?;
    let prepared = sim.prepare(ckpt.model.channel(), &ckpt.stats)?;
    let result = rollout(&ckpt.model, &prepared, &ckpt.stats)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(format!("rollout_{}.csv", sim_dir_name(index)));
    fs::write(&path, result.to_csv()).map_err(|e| Error::io(&path, e))?;
    println!(
        "{}: MAPE {:.6} (normalized {:.6}) in {:.2}s -> {}",
        sim_dir_name(index),
        result.mape,
        result.mape_norm,
        result.seconds,
        path.display()
    );
    Ok(())
}

/// `(first step, truth, prediction)` from a rollout CSV.
fn read_rollout_csv(path: &Path) -> std::result::Result<(usize, Vec<f64>, Vec<f64>), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let bad = |line: usize| Failure::Data(format!("{}: malformed line {line}", path.display()));
    let mut lines = text.lines();
    if lines.next() != Some("t,truth,pred") {
        return Err(bad(1));
    }
    let (mut first, mut truth, mut pred) = (None, Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        let [t, x, p] = cols.as_slice() else {
            return Err(bad(i + 2));
        };
        let t: usize = t.parse().map_err(|_| bad(i + 2))?;
        if *first.get_or_insert(t) + truth.len() != t {
            return Err(bad(i + 2));
        }
        truth.push(x.parse().map_err(|_| bad(i + 2))?);
        pred.push(p.parse().map_err(|_| bad(i + 2))?);
    }
    let first = first.ok_or_else(|| Failure::Data(format!("{} has no rows", path.display())))?;
    Ok((first, truth, pred))
}

fn label_for(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .filter(|n| !n.is_empty())
        .unwrap_or_else(|| path.display().to_string())
}

fn plot(rollouts: &[PathBuf], out: &Path, title: &str) -> Outcome {
    let mut truth = None;
    let mut series = Vec::new();
    for path in rollouts {
        let (first, t, p) = read_rollout_csv(path)?;
        truth.get_or_insert(Series {
            label: "ground truth".into(),
            first_step: first,
            values: t,
        });
        series.push(Series {
            label: label_for(path),
            first_step: first,
            values: p,
        });
    }
    let truth = truth.expect("clap requires at least one rollout");
    write_svg(out, title, &truth, &series)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Outcome {
    let file = read_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Generate { n_sims } => generate(cli, &file, *n_sims),
        Command::Train {
            out,
            channels,
            models,
        } => train(cli, &file, out, channels, models),
        Command::Evaluate { out } => evaluate(cli, out),
        Command::Rollout {
            checkpoint,
            sim,
            out,
        } => rollout_one(cli, checkpoint, *sim, out),
        Command::Plot {
            rollouts,
            out,
            title,
        } => plot(rollouts, out, title),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
