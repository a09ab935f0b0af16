//! Recursive multi-step rollout and the per-model, per-channel MAPE table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::HistoricalAverage;
use crate::error::{Error, Result};
use crate::losses;
use crate::model::{Channel, Surrogate};
use crate::pipeline::{NormalizationStats, PreparedSim};

/// Denominator floor for MAPE on the normalized scale, where the training
/// minimum maps to exactly zero.
pub const NORMALIZED_MAPE_FLOOR: f64 = 1e-8;

/// Which stress values one rollout window was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTrace {
    /// 1-based step the window predicts.
    pub output_step: usize,
    /// 1-based steps whose stress entries came from earlier predictions.
    pub predicted_steps: Vec<usize>,
    /// 1-based steps whose ground-truth damage frames were supplied.
    pub damage_steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub sim_id: usize,
    pub channel: Channel,
    pub delta_t: usize,
    /// Predictions for steps `delta_t + 1 ..= T`, normalized.
    pub pred_norm: Vec<f64>,
    pub pred_raw: Vec<f64>,
    pub truth_raw: Vec<f64>,
    pub mape: f64,
    pub mape_norm: f64,
    pub seconds: f64,
    pub trace: Vec<WindowTrace>,
}

impl RolloutResult {
    /// 1-based step of the first prediction.
    pub fn first_step(&self) -> usize {
        self.delta_t + 1
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,truth,pred\n");
        for (i, (t, p)) in self.truth_raw.iter().zip(&self.pred_raw).enumerate() {
            let _ = writeln!(s, "{},{t},{p}", self.first_step() + i);
        }
        s
    }
}

/// MAPE with the denominator floored, for truths that may touch zero.
pub fn mape_floored(pred: &[f64], truth: &[f64], floor: f64) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "pred has {} values, truth {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, x)| (p - x).abs() / x.abs().max(floor))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Recursive forecast: the first window holds true stress for steps
/// `1..=delta_t`; every later window slides by one and substitutes the most
/// recent predictions for stress, while damage frames stay ground truth.
pub fn rollout<M: Surrogate + ?Sized>(
    model: &M,
    sim: &PreparedSim,
    stats: &NormalizationStats,
) -> Result<RolloutResult> {
    let started = Instant::now();
    let dt = model.delta_t();
    let t_len = sim.len();
    if t_len <= dt {
        return Err(Error::Data(format!(
            "sim {} has {t_len} steps, rollout needs more than {dt}",
            sim.id
        )));
    }
    if model.uses_damage() && sim.frames.len() != t_len {
        return Err(Error::Data(format!("sim {} is missing damage frames", sim.id)));
    }
    // `series[i]` is the value fed for 0-based step `i`.
    let mut series: Vec<f64> = sim.stress_norm[..dt].iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut trace = Vec::with_capacity(t_len - dt);
    for j in dt..t_len {
        let start = j - dt;
        let damage = if model.uses_damage() {
            Some(sim.damage_window(start, dt)?)
        } else {
            None
        };
        let p = model.predict(&series[start..j], damage.as_ref())?;
        if !p.is_finite() {
            return Err(Error::NonFinite(format!("sim {}: prediction at step {}", sim.id, j + 1)));
        }
        trace.push(WindowTrace {
            output_step: j + 1,
            predicted_steps: (start.max(dt)..j).map(|i| i + 1).collect(),
            damage_steps: if damage.is_some() {
                (start..j).map(|i| i + 1).collect()
            } else {
                Vec::new()
            },
        });
        series.push(p);
    }
    let pred_norm = series[dt..].to_vec();
    finish(sim, model.channel(), dt, pred_norm, stats, started, trace)
}

fn finish(
    sim: &PreparedSim,
    channel: Channel,
    dt: usize,
    pred_norm: Vec<f64>,
    stats: &NormalizationStats,
    started: Instant,
    trace: Vec<WindowTrace>,
) -> Result<RolloutResult> {
    let pred_raw: Vec<f64> = pred_norm.iter().map(|&p| stats.denormalize(p)).collect();
    let truth_raw = sim.stress_raw[dt..].to_vec();
    let truth_norm: Vec<f64> = truth_raw.iter().map(|&x| stats.normalize(x)).collect();
    Ok(RolloutResult {
        sim_id: sim.id,
        channel,
        delta_t: dt,
        mape: losses::mape(&pred_raw, &truth_raw)?,
        mape_norm: mape_floored(&pred_norm, &truth_norm, NORMALIZED_MAPE_FLOOR)?,
        pred_norm,
        pred_raw,
        truth_raw,
        seconds: started.elapsed().as_secs_f64(),
        trace,
    })
}

/// Historical-average "rollout" over steps `first_step..=T`.
pub fn rollout_historical(
    ha: &HistoricalAverage,
    sim: &PreparedSim,
    channel: Channel,
    first_step: usize,
    stats: &NormalizationStats,
) -> Result<RolloutResult> {
    let started = Instant::now();
    if first_step < 1 || first_step > sim.len() || ha.len() < sim.len() {
        return Err(Error::Data(format!(
            "historical average of length {} cannot cover steps {first_step}..={}",
            ha.len(),
            sim.len()
        )));
    }
    let dt = first_step - 1;
    let pred_norm = (dt..sim.len()).map(|t| ha.predict(t)).collect::<Result<Vec<_>>>()?;
    finish(sim, channel, dt, pred_norm, stats, started, Vec::new())
}

/// A model to score on every test sim of one channel.
pub enum Predictor<'a> {
    Model(&'a (dyn Surrogate + 'a)),
    Historical {
        average: &'a HistoricalAverage,
        first_step: usize,
    },
}

pub struct Entry<'a> {
    pub name: String,
    pub channel: Channel,
    pub predictor: Predictor<'a>,
    pub stats: NormalizationStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub channel: Channel,
    /// Mean per-sim MAPE on raw stress.
    pub mape: f64,
    /// Mean per-sim MAPE on normalized stress.
    pub mape_norm: f64,
    pub rollouts: Vec<RolloutResult>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

/// Rolls every entry out over its channel's test sims. `test_sims` supplies
/// raw series per channel; each entry renormalizes with its own bounds.
pub fn evaluate(entries: &[Entry<'_>], test_sims: &[(Channel, Vec<PreparedSim>)]) -> Result<ResultsTable> {
    if entries.is_empty() {
        return Err(Error::InvalidArgument("no models to evaluate".into()));
    }
    let mut rows = Vec::with_capacity(entries.len());
    for e in entries {
        if let Predictor::Model(m) = &e.predictor {
            if m.channel() != e.channel {
                return Err(Error::InvalidArgument(format!(
                    "{}: model predicts {} but is listed under {}",
                    e.name,
                    m.channel(),
                    e.channel
                )));
            }
        }
        let sims = test_sims
            .iter()
            .find(|(c, _)| *c == e.channel)
            .map(|(_, s)| s)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Data(format!("no {} test sims for {}", e.channel, e.name)))?;
        let rollouts = sims
            .par_iter()
            .map(|sim| {
                let mut sim = sim.clone();
                sim.renormalize(&e.stats);
                match &e.predictor {
                    Predictor::Model(m) => rollout(*m, &sim, &e.stats),
                    Predictor::Historical {
                        average,
                        first_step,
                    } => rollout_historical(average, &sim, e.channel, *first_step, &e.stats),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let n = rollouts.len() as f64;
        rows.push(ResultRow {
            model: e.name.clone(),
            channel: e.channel,
            mape: rollouts.iter().map(|r| r.mape).sum::<f64>() / n,
            mape_norm: rollouts.iter().map(|r| r.mape_norm).sum::<f64>() / n,
            rollouts,
        });
    }
    Ok(ResultsTable { rows })
}

impl ResultsTable {
    pub fn get(&self, model: &str, channel: Channel) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.model == model && r.channel == channel)
    }

    /// `model,channel,mape` on raw stress.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,channel,mape\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.model, r.channel, r.mape);
        }
        s
    }

    /// Same layout with the normalized-scale figure.
    pub fn to_csv_normalized(&self) -> String {
        let mut s = String::from("model,channel,mape\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.model, r.channel, r.mape_norm);
        }
        s
    }

    /// One row per model, one column pair per channel.
    pub fn to_text(&self) -> String {
        let mut models: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
        }
        let width = models.iter().map(|m| m.len()).max().unwrap_or(5).max(5);
        let mut s = format!(
            "{:<width$}  {:>12}  {:>12}  {:>12}  {:>12}\n",
            "model", "mape_xx", "mape_yy", "norm_xx", "norm_yy"
        );
        let cell = |m: &str, c: Channel, raw: bool| {
            self.get(m, c)
                .map(|r| format!("{:.4}", if raw { r.mape } else { r.mape_norm }))
                .unwrap_or_else(|| "-".into())
        };
        for m in models {
            let _ = writeln!(
                s,
                "{:<width$}  {:>12}  {:>12}  {:>12}  {:>12}",
                m,
                cell(m, Channel::Xx, true),
                cell(m, Channel::Yy, true),
                cell(m, Channel::Xx, false),
                cell(m, Channel::Yy, false)
            );
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("results_table.csv", self.to_csv()),
            ("results_table_normalized.csv", self.to_csv_normalized()),
            ("results_table.txt", self.to_text()),
        ] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
