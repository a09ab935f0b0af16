//! The benchmark run end to end: split, normalize, train every model variant
//! per channel, roll out on the test sims, and write the artifacts. Shared by
//! the command line and the acceptance suite.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BiLstmBaseline, HistoricalAverage, LstmBaseline};
use crate::checkpoint::Checkpoint;
use crate::dataset::{sim_dir_name, CoarseSim};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, Entry, Predictor, ResultsTable};
use crate::losses::LossKind;
use crate::model::{AnyModel, Channel, StressNet, StressNetConfig, Surrogate};
use crate::pipeline::{split_dataset, DatasetSplit, NormalizationStats, PreparedSim};
use crate::plot::{write_svg, Series};
use crate::trainer::{
    train, write_history_csv, write_train_config, EpochRecord, TrainConfig, TrainHistory,
    TrainSet,
};

pub const PAPER_PROFILE_WARNING: &str = "warning: the paper profile trains every model for \
1800 epochs on 61 simulations; the original runs took 8 to 20 hours per model on a GPU";

/// Records in the reference dataset and how many of them are held out.
const REFERENCE_SIMS: usize = 61;
const REFERENCE_HOLDOUT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    /// Simulations generated when no dataset is given.
    pub fn n_sims(self) -> usize {
        match self {
            Profile::Desk => 8,
            Profile::Paper => REFERENCE_SIMS,
        }
    }

    pub fn train_config(self, seed: u64) -> TrainConfig {
        match self {
            Profile::Desk => TrainConfig::desk(seed),
            Profile::Paper => TrainConfig::paper(seed),
        }
    }

    pub fn stressnet_config(self) -> StressNetConfig {
        match self {
            Profile::Desk => StressNetConfig::desk(),
            Profile::Paper => StressNetConfig::default(),
        }
    }

    pub fn baseline_config(self) -> BaselineConfig {
        match self {
            Profile::Desk => BaselineConfig::desk(),
            Profile::Paper => BaselineConfig::default(),
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::InvalidArgument(format!("unknown profile {s:?}"))),
        }
    }
}

/// The six rows of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    HistoricalAverage,
    Lstm,
    BiLstm,
    StressNetMse,
    StressNetMape,
    StressNet,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::HistoricalAverage,
        Variant::Lstm,
        Variant::BiLstm,
        Variant::StressNetMse,
        Variant::StressNetMape,
        Variant::StressNet,
    ];

    /// Row label in the results table.
    pub fn name(self) -> &'static str {
        match self {
            Variant::HistoricalAverage => "Historical Average",
            Variant::Lstm => "LSTM",
            Variant::BiLstm => "Bi-LSTM",
            Variant::StressNetMse => "StressNet(MSE)",
            Variant::StressNetMape => "StressNet(MAPE)",
            Variant::StressNet => "StressNet(Dynamic Loss)",
        }
    }

    /// File-system and command-line name.
    pub fn slug(self) -> &'static str {
        match self {
            Variant::HistoricalAverage => "ha",
            Variant::Lstm => "lstm",
            Variant::BiLstm => "bilstm",
            Variant::StressNetMse => "stressnet_mse",
            Variant::StressNetMape => "stressnet_mape",
            Variant::StressNet => "stressnet",
        }
    }

    fn loss(self, train: &TrainConfig) -> LossKind {
        match self {
            Variant::StressNet => train.loss.clone(),
            Variant::StressNetMape => LossKind::Mape,
            _ => LossKind::Mse,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.slug() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub seed: u64,
    /// Records held out for testing.
    pub n_test: usize,
    /// Fit normalization bounds on every record instead of the training pool.
    pub paper_faithful_norm: bool,
    pub channels: Vec<Channel>,
    pub variants: Vec<Variant>,
    pub train: TrainConfig,
    pub stressnet: StressNetConfig,
    pub baseline: BaselineConfig,
}

impl ExperimentConfig {
    /// Profile defaults for a dataset of `n_sims` records. The 55/6 split and
    /// six validation sims are kept at 61 records and scaled down below.
    pub fn for_dataset(profile: Profile, seed: u64, n_sims: usize) -> Result<Self> {
        let held = ((n_sims * REFERENCE_HOLDOUT) as f64 / REFERENCE_SIMS as f64).round() as usize;
        let held = held.clamp(1, REFERENCE_HOLDOUT);
        if n_sims < 2 * held + 1 {
            return Err(Error::Data(format!(
                "{n_sims} simulations cannot be split into train, validation and test"
            )));
        }
        let mut train = profile.train_config(seed);
        train.n_val = held;
        Ok(ExperimentConfig {
            profile,
            seed,
            n_test: held,
            paper_faithful_norm: false,
            channels: Channel::ALL.to_vec(),
            variants: Variant::ALL.to_vec(),
            train,
            stressnet: profile.stressnet_config(),
            baseline: profile.baseline_config(),
        })
    }

    pub fn validate(&self, n_sims: usize) -> Result<()> {
        self.train.validate()?;
        if self.n_test == 0 || self.n_test >= n_sims {
            return Err(Error::Data(format!(
                "cannot hold out {} of {n_sims} simulations",
                self.n_test
            )));
        }
        if self.train.n_val >= n_sims - self.n_test {
            return Err(Error::Data(format!(
                "{} validation sims leave nothing to train on",
                self.train.n_val
            )));
        }
        if self.channels.is_empty() || self.variants.is_empty() {
            return Err(Error::InvalidArgument("no channels or models selected".into()));
        }
        Ok(())
    }

    pub fn split(&self, n_sims: usize) -> Result<DatasetSplit> {
        self.validate(n_sims)?;
        split_dataset(n_sims, n_sims - self.n_test, self.seed)
    }
}

/// Min-max bounds for one channel, from the training pool unless the
/// paper-faithful variant is requested.
pub fn channel_stats(
    sims: &[CoarseSim],
    split: &DatasetSplit,
    channel: Channel,
    all_records: bool,
) -> Result<NormalizationStats> {
    let series: Vec<&[f64]> = if all_records {
        sims.iter().map(|s| s.stress(channel)).collect()
    } else {
        split.train_pool.iter().map(|&i| sims[i].stress(channel)).collect()
    };
    NormalizationStats::fit(&series)
}

#[derive(Debug, Clone)]
pub enum Fitted {
    Network {
        model: AnyModel,
        history: TrainHistory,
    },
    Historical {
        average: HistoricalAverage,
        first_step: usize,
    },
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub variant: Variant,
    pub channel: Channel,
    pub stats: NormalizationStats,
    pub fitted: Fitted,
}

impl TrainedModel {
    pub fn dir_name(&self) -> String {
        model_dir_name(self.variant, self.channel)
    }

    fn entry(&self) -> Entry<'_> {
        let predictor = match &self.fitted {
            Fitted::Network { model, .. } => Predictor::Model(model),
            Fitted::Historical {
                average,
                first_step,
            } => Predictor::Historical {
                average,
                first_step: *first_step,
            },
        };
        Entry {
            name: self.variant.name().to_string(),
            channel: self.channel,
            predictor,
            stats: self.stats,
        }
    }
}

pub fn model_dir_name(variant: Variant, channel: Channel) -> String {
    format!("{}_{}", variant.slug(), channel)
}

fn prepare_all(sims: &[CoarseSim], channel: Channel, stats: &NormalizationStats) -> Result<Vec<PreparedSim>> {
    sims.iter().map(|s| s.prepare(channel, stats)).collect()
}

/// Trains (or, for the historical average, fits) one variant on one channel.
pub fn train_variant(
    cfg: &ExperimentConfig,
    variant: Variant,
    channel: Channel,
    sims: &[CoarseSim],
    split: &DatasetSplit,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainedModel> {
    let stats = channel_stats(sims, split, channel, cfg.paper_faithful_norm)?;
    let prepared = prepare_all(sims, channel, &stats)?;
    let fitted = if variant == Variant::HistoricalAverage {
        let series: Vec<&[f64]> = split
            .train_pool
            .iter()
            .map(|&i| prepared[i].stress_norm.as_slice())
            .collect();
        Fitted::Historical {
            average: HistoricalAverage::fit(&series)?,
            first_step: cfg.stressnet.delta_t + 1,
        }
    } else {
        let data = TrainSet {
            sims: &prepared,
            pool: &split.train_pool,
            stats,
        };
        let train_cfg = cfg.train.clone().with_loss(variant.loss(&cfg.train));
        let mut model: AnyModel = match variant {
            Variant::Lstm => LstmBaseline::new(cfg.baseline, channel, cfg.seed)?.into(),
            Variant::BiLstm => BiLstmBaseline::new(cfg.baseline, channel, cfg.seed)?.into(),
            _ => StressNet::new(cfg.stressnet.clone(), channel, cfg.seed)?.into(),
        };
        let history = train(&mut model, data, &train_cfg, on_epoch)?;
        Fitted::Network { model, history }
    };
    Ok(TrainedModel {
        variant,
        channel,
        stats,
        fitted,
    })
}

#[derive(Serialize, Deserialize)]
struct HistoricalFile {
    stats: NormalizationStats,
    first_step: usize,
    average: HistoricalAverage,
}

const CHECKPOINT_FILE: &str = "checkpoint.bin";
const HISTORICAL_FILE: &str = "historical_average.json";

/// Writes a trained model under `dir/models/<variant>_<channel>/`.
pub fn save_trained(dir: &Path, cfg: &ExperimentConfig, trained: &TrainedModel) -> Result<PathBuf> {
    let out = dir.join("models").join(trained.dir_name());
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    match &trained.fitted {
        Fitted::Network { model, history } => {
            Checkpoint {
                model: model.clone(),
                stats: trained.stats,
            }
            .save(&out.join(CHECKPOINT_FILE))?;
            write_history_csv(&out.join("history.csv"), history)?;
            let train_cfg = cfg.train.clone().with_loss(trained.variant.loss(&cfg.train));
            write_train_config(&out.join("train_config.json"), &train_cfg)?;
        }
        Fitted::Historical {
            average,
            first_step,
        } => {
            let file = HistoricalFile {
                stats: trained.stats,
                first_step: *first_step,
                average: average.clone(),
            };
            let path = out.join(HISTORICAL_FILE);
            fs::write(&path, serde_json::to_string_pretty(&file)?).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(out)
}

pub fn load_trained(dir: &Path, variant: Variant, channel: Channel) -> Result<TrainedModel> {
    let root = dir.join("models").join(model_dir_name(variant, channel));
    if variant == Variant::HistoricalAverage {
        let path = root.join(HISTORICAL_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let file: HistoricalFile = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        return Ok(TrainedModel {
            variant,
            channel,
            stats: file.stats,
            fitted: Fitted::Historical {
                average: file.average,
                first_step: file.first_step,
            },
        });
    }
    let ckpt = Checkpoint::load(&root.join(CHECKPOINT_FILE))?;
    if ckpt.model.channel() != channel {
        return Err(Error::Data(format!(
            "{} holds a {} model",
            root.display(),
            ckpt.model.channel()
        )));
    }
    Ok(TrainedModel {
        variant,
        channel,
        stats: ckpt.stats,
        fitted: Fitted::Network {
            model: ckpt.model,
            history: TrainHistory {
                epochs: Vec::new(),
                best_epoch: 0,
                best_val_mape: f64::NAN,
            },
        },
    })
}

/// Rolls every model out over the test sims of its channel.
pub fn evaluate_models(models: &[TrainedModel], sims: &[CoarseSim], split: &DatasetSplit) -> Result<ResultsTable> {
    let mut test_sims = Vec::new();
    for m in models {
        if test_sims.iter().any(|(c, _)| *c == m.channel) {
            continue;
        }
        let prepared = split
            .test
            .iter()
            .map(|&i| sims[i].prepare(m.channel, &m.stats))
            .collect::<Result<Vec<_>>>()?;
        test_sims.push((m.channel, prepared));
    }
    let entries: Vec<Entry<'_>> = models.iter().map(TrainedModel::entry).collect();
    evaluate(&entries, &test_sims)
}

/// Results tables, then per channel one plot per test sim and one rollout
/// CSV per model and sim.
pub fn write_results(dir: &Path, models: &[TrainedModel], table: &ResultsTable) -> Result<()> {
    table.write(dir)?;
    for channel in Channel::ALL {
        let rows: Vec<_> = table.rows.iter().filter(|r| r.channel == channel).collect();
        let Some(first) = rows.first() else { continue };
        let ch_dir = dir.join(channel.as_str());
        for row in &rows {
            let slug = models
                .iter()
                .find(|m| m.channel == channel && m.variant.name() == row.model)
                .map(|m| m.variant.slug())
                .unwrap_or("model");
            let out = ch_dir.join(slug);
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for r in &row.rollouts {
                let path = out.join(format!("rollout_{}.csv", sim_dir_name(r.sim_id)));
                fs::write(&path, r.to_csv()).map_err(|e| Error::io(&path, e))?;
            }
        }
        for (k, base) in first.rollouts.iter().enumerate() {
            let truth = Series {
                label: "ground truth".into(),
                first_step: base.first_step(),
                values: base.truth_raw.clone(),
            };
            let series: Vec<Series> = rows
                .iter()
                .map(|row| {
                    let r = &row.rollouts[k];
                    Series {
                        label: row.model.clone(),
                        first_step: r.first_step(),
                        values: r.pred_raw.clone(),
                    }
                })
                .collect();
            let name = sim_dir_name(base.sim_id);
            write_svg(
                &ch_dir.join(format!("plot_{name}.svg")),
                &format!("{name}, channel {channel}"),
                &truth,
                &series,
            )?;
        }
    }
    Ok(())
}

/// What a run used, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub n_sims: usize,
    pub split: DatasetSplit,
}

pub const MANIFEST_FILE: &str = "experiment.json";

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(manifest)?).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Trains and saves every configured variant on every configured channel.
pub fn train_all(
    dir: &Path,
    cfg: &ExperimentConfig,
    sims: &[CoarseSim],
    log: &mut dyn FnMut(&str),
) -> Result<Vec<TrainedModel>> {
    let split = cfg.split(sims.len())?;
    write_manifest(
        dir,
        &RunManifest {
            config: cfg.clone(),
            n_sims: sims.len(),
            split: split.clone(),
        },
    )?;
    let mut models = Vec::new();
    for &channel in &cfg.channels {
        for &variant in &cfg.variants {
            log(&format!("training {} on {channel}", variant.name()));
            let mut on_epoch = |r: &EpochRecord| {
                log(&format!(
                    "  {} {channel} epoch {}: loss {:.6e}, validation MAPE {:.4}",
                    variant.slug(),
                    r.epoch,
                    r.train_loss,
                    r.val_mape
                ))
            };
            let trained = train_variant(cfg, variant, channel, sims, &split, &mut on_epoch)?;
            save_trained(dir, cfg, &trained)?;
            models.push(trained);
        }
    }
    Ok(models)
}

/// Reloads every model a previous `train_all` saved under `dir`.
pub fn load_all(dir: &Path) -> Result<(RunManifest, Vec<TrainedModel>)> {
    let manifest = read_manifest(dir)?;
    let mut models = Vec::new();
    for &channel in &manifest.config.channels {
        for &variant in &manifest.config.variants {
            models.push(load_trained(dir, variant, channel)?);
        }
    }
    Ok((manifest, models))
}

/// Train, evaluate, and write everything.
pub fn run(
    dir: &Path,
    cfg: &ExperimentConfig,
    sims: &[CoarseSim],
    log: &mut dyn FnMut(&str),
) -> Result<ResultsTable> {
    let models = train_all(dir, cfg, sims, log)?;
    let split = cfg.split(sims.len())?;
    let table = evaluate_models(&models, sims, &split)?;
    write_results(dir, &models, &table)?;
    Ok(table)
}
