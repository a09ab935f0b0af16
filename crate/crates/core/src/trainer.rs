//! Adam training loop: teacher-forced one-step windows, per-epoch validation
//! resampling, feed-order reshuffles, and best-validation retention.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::rollout;
use crate::losses::{self, LossKind, LossSchedule};
use crate::model::Surrogate;
use crate::params::{Gradients, ParamStore};
use crate::pipeline::{resample_validation, NormalizationStats, PreparedSim};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} params, {} grads, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (id, g) in params.ids().zip(grads.iter()) {
        let i = id.index();
        if g.shape() != params.value(id).shape() || state.m[i].shape() != g.shape() {
            return Err(Error::ShapeMismatch(format!(
                "parameter {}: value {:?}, grad {:?}",
                params.name(id),
                params.value(id).shape(),
                g.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let ids: Vec<_> = params.ids().collect();
    for (id, g) in ids.into_iter().zip(grads.iter()) {
        let i = id.index();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params.value_mut(id).data_mut();
        for (((p, m), v), &g) in p.iter_mut().zip(m).zip(v).zip(g.data()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs_per_shuffle: usize,
    pub n_shuffles: usize,
    /// Validation sims drawn from the pool each epoch. With zero, the
    /// epoch's training sims double as the validation set.
    pub n_val: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// What the per-epoch validation MAPE measures, and so which epoch is kept.
    #[serde(default)]
    pub validation: ValidationMetric,
}

/// Per-epoch validation score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMetric {
    /// Teacher-forced next-step MAPE over every window.
    #[default]
    OneStep,
    /// Mean per-sim MAPE of a full recursive rollout.
    Rollout,
    /// Rollout MAPE over every pool sim, not just the epoch's validation sims.
    PoolRollout,
}

impl TrainConfig {
    /// 1800 epochs, lambda switching after epoch 600.
    pub fn paper(seed: u64) -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 32,
            epochs_per_shuffle: 30,
            n_shuffles: 60,
            n_val: 6,
            seed,
            loss: LossKind::Dynamic(LossSchedule::paper()),
            validation: ValidationMetric::PoolRollout,
        }
    }

    /// 60 epochs; the lambda switch keeps the same one-third position.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            n_shuffles: 2,
            loss: LossKind::Dynamic(
                LossSchedule::new(0.9, 0.1, 20, 60).expect("valid desk schedule"),
            ),
            ..Self::paper(seed)
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_per_shuffle * self.n_shuffles
    }

    pub fn with_loss(mut self, loss: LossKind) -> Self {
        self.loss = loss;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(Error::InvalidArgument("invalid Adam hyperparameters".into()));
        }
        if self.batch_size == 0 || self.epochs_per_shuffle == 0 || self.n_shuffles == 0 {
            return Err(Error::InvalidArgument(
                "batch_size, epochs_per_shuffle and n_shuffles must be positive".into(),
            ));
        }
        if let LossKind::Dynamic(s) = &self.loss {
            s.validate()?;
            if s.total_epochs != self.total_epochs() {
                return Err(Error::InvalidArgument(format!(
                    "loss schedule covers {} epochs, training runs {}",
                    s.total_epochs,
                    self.total_epochs()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda: Option<f64>,
    pub train_loss: f64,
    pub val_mape: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mape: f64,
}

/// Sims available to training, addressed by position in `sims`.
#[derive(Debug, Clone, Copy)]
pub struct TrainSet<'a> {
    pub sims: &'a [PreparedSim],
    pub pool: &'a [usize],
    pub stats: NormalizationStats,
}

/// Teacher-forced one-step MAPE over every window of `sims`, in raw units.
pub fn one_step_mape<M: Surrogate + ?Sized>(
    model: &M,
    sims: &[&PreparedSim],
    stats: &NormalizationStats,
) -> Result<f64> {
    let dt = model.delta_t();
    let per_sim: Vec<(Vec<f64>, Vec<f64>)> = sims
        .par_iter()
        .map(|sim| {
            let mut pred = Vec::with_capacity(sim.window_count(dt));
            let mut truth = Vec::with_capacity(sim.window_count(dt));
            for k in 0..sim.window_count(dt) {
                let w = sim.window(k, dt, model.uses_damage())?;
                let p = model.predict(&w.stress, w.damage.as_ref())?;
                pred.push(stats.denormalize(p));
                truth.push(sim.stress_raw[k + dt]);
            }
            Ok((pred, truth))
        })
        .collect::<Result<_>>()?;
    let (pred, truth): (Vec<f64>, Vec<f64>) = per_sim
        .into_iter()
        .flat_map(|(p, t)| p.into_iter().zip(t))
        .unzip();
    if pred.is_empty() {
        return Err(Error::Data("no windows to evaluate".into()));
    }
    losses::mape(&pred, &truth)
}

/// Mean over `sims` of the raw-scale MAPE of a full recursive rollout.
pub fn rollout_mape<M: Surrogate + ?Sized>(
    model: &M,
    sims: &[&PreparedSim],
    stats: &NormalizationStats,
) -> Result<f64> {
    if sims.is_empty() {
        return Err(Error::Data("no sims to evaluate".into()));
    }
    let per_sim: Vec<f64> = sims
        .par_iter()
        .map(|sim| rollout(model, sim, stats).map(|r| r.mape))
        .collect::<Result<_>>()?;
    Ok(per_sim.iter().sum::<f64>() / per_sim.len() as f64)
}

/// Trains in place and leaves the best-validation parameters in `model`.
/// `on_epoch` sees each history row as it is produced.
pub fn train<M: Surrogate>(
    model: &mut M,
    data: TrainSet<'_>,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainHistory> {
    cfg.validate()?;
    if data.pool.is_empty() {
        return Err(Error::Data("training pool is empty".into()));
    }
    if let Some(&bad) = data.pool.iter().find(|&&i| i >= data.sims.len()) {
        return Err(Error::Data(format!("pool index {bad} out of range")));
    }
    let dt = model.delta_t();
    if let Some(s) = data.pool.iter().map(|&i| &data.sims[i]).find(|s| s.len() <= dt) {
        return Err(Error::Data(format!(
            "sim {} has {} steps, need more than delta_t = {dt}",
            s.id,
            s.len()
        )));
    }

    let mut order_rng = SplitMix64::derived(cfg.seed, "feed-order");
    let mut val_rng = SplitMix64::derived(cfg.seed, "validation");
    let mut order = data.pool.to_vec();
    let mut adam = AdamState::new(model.params());
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut epochs = Vec::with_capacity(cfg.total_epochs());

    for epoch in 1..=cfg.total_epochs() {
        if (epoch - 1) % cfg.epochs_per_shuffle == 0 {
            order_rng.shuffle(&mut order);
        }
        let (train_ids, val_ids) = resample_validation(&order, cfg.n_val, &mut val_rng)?;
        let windows: Vec<(usize, usize)> = train_ids
            .iter()
            .flat_map(|&s| (0..data.sims[s].window_count(dt)).map(move |k| (s, k)))
            .collect();

        let mut loss_sum = 0.0;
        for batch in windows.chunks(cfg.batch_size) {
            let m: &M = model;
            let results: Vec<(f64, Gradients)> = batch
                .par_iter()
                .map(|&(s, k)| {
                    let w = data.sims[s].window(k, dt, m.uses_damage())?;
                    let loss_fn = |p: f64| {
                        let (l, g) = cfg.loss.evaluate(&[p], &[w.target], epoch)?;
                        Ok((l, g[0]))
                    };
                    let (_, l, g) = m.predict_with_grad(&w.stress, w.damage.as_ref(), &loss_fn)?;
                    if !l.is_finite() || !g.all_finite() {
                        return Err(Error::NonFinite(format!(
                            "epoch {epoch}: loss {l} on sim {} window {k}",
                            data.sims[s].id
                        )));
                    }
                    Ok((l, g))
                })
                .collect::<Result<_>>()?;
            let mut iter = results.into_iter();
            let (first_loss, mut grad) = iter.next().expect("chunks are non-empty");
            loss_sum += first_loss;
            for (l, g) in iter {
                loss_sum += l;
                grad.add_assign(&g)?;
            }
            grad.scale(1.0 / batch.len() as f64);
            adam_step(model.params_mut(), &grad, &mut adam, &cfg.adam)?;
        }
        let train_loss = loss_sum / windows.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("epoch {epoch}: mean training loss {train_loss}")));
        }

        let val_sims: Vec<&PreparedSim> = if val_ids.is_empty() {
            train_ids.iter().map(|&i| &data.sims[i]).collect()
        } else {
            val_ids.iter().map(|&i| &data.sims[i]).collect()
        };
        let val_mape = match cfg.validation {
            ValidationMetric::OneStep => one_step_mape(&*model, &val_sims, &data.stats)?,
            ValidationMetric::Rollout => rollout_mape(&*model, &val_sims, &data.stats)?,
            ValidationMetric::PoolRollout => {
                let pool: Vec<&PreparedSim> = data.pool.iter().map(|&i| &data.sims[i]).collect();
                rollout_mape(&*model, &pool, &data.stats)?
            }
        };
        if !val_mape.is_finite() {
            return Err(Error::NonFinite(format!("epoch {epoch}: validation MAPE {val_mape}")));
        }
        let record = EpochRecord {
            epoch,
            lambda: cfg.loss.lambda(epoch)?,
            train_loss,
            val_mape,
        };
        on_epoch(&record);
        epochs.push(record);
        if best.as_ref().map_or(true, |(_, b, _)| val_mape < *b) {
            best = Some((epoch, val_mape, model.params().clone()));
        }
    }

    let (best_epoch, best_val_mape, params) = best.expect("at least one epoch ran");
    model.params_mut().assign(&params)?;
    Ok(TrainHistory {
        epochs,
        best_epoch,
        best_val_mape,
    })
}

pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut s = String::from("epoch,lambda,train_loss,val_mape\n");
    for r in &history.epochs {
        let lambda = r.lambda.map_or_else(|| "na".to_string(), |l| l.to_string());
        s.push_str(&format!("{},{lambda},{},{}\n", r.epoch, r.train_loss, r.val_mape));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_train_config(path: &Path, cfg: &TrainConfig) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(serde_json::to_string_pretty(cfg)?.as_bytes())
        .map_err(|e| Error::io(path, e))
}
