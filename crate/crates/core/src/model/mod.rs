//! Surrogate models and the parameter wiring they share.

mod any;
mod stressnet;

pub use any::AnyModel;
pub use stressnet::{ConvBlock, ForwardCache, StressNet, StressNetConfig};

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Activation, BiLstmGrads, BiLstmWeights, LstmGrads, LstmWeights};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Stress component a model instance predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Xx,
    Yy,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Xx, Channel::Yy];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Xx => "xx",
            Channel::Yy => "yy",
        }
    }

    pub fn code(self) -> u64 {
        match self {
            Channel::Xx => 0,
            Channel::Yy => 1,
        }
    }

    pub fn from_code(code: u64) -> Result<Self> {
        match code {
            0 => Ok(Channel::Xx),
            1 => Ok(Channel::Yy),
            _ => Err(Error::CorruptCheckpoint(format!("unknown channel code {code}"))),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xx" => Ok(Channel::Xx),
            "yy" => Ok(Channel::Yy),
            _ => Err(Error::InvalidArgument(format!("unknown channel {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    StressNet,
    Lstm,
    BiLstm,
}

impl Architecture {
    pub fn magic(self) -> &'static [u8; 8] {
        match self {
            Architecture::StressNet => b"SNCKPT01",
            Architecture::Lstm => b"SNCKPL01",
            Architecture::BiLstm => b"SNCKPB01",
        }
    }

    pub fn from_magic(magic: &[u8]) -> Option<Self> {
        [Architecture::StressNet, Architecture::Lstm, Architecture::BiLstm]
            .into_iter()
            .find(|a| a.magic().as_slice() == magic)
    }
}

/// Common surface of every trainable one-step predictor.
///
/// `stress` holds the `delta_t` most recent normalized stress values, oldest
/// first. `damage` is the matching `h x w x delta_t` stack and must be `None`
/// for stress-only models.
pub trait Surrogate: Send + Sync {
    fn architecture(&self) -> Architecture;
    fn channel(&self) -> Channel;
    fn delta_t(&self) -> usize;
    fn uses_damage(&self) -> bool;
    fn params(&self) -> &ParamStore;
    /// Mutable access invalidates any outstanding forward cache.
    fn params_mut(&mut self) -> &mut ParamStore;
    fn predict(&self, stress: &[f64], damage: Option<&Tensor>) -> Result<f64>;
    /// Forward, loss, and backward in one pass. `loss` maps the prediction to
    /// `(loss, d_loss / d_prediction)`. Returns `(prediction, loss, grads)`.
    fn predict_with_grad(
        &self,
        stress: &[f64],
        damage: Option<&Tensor>,
        loss: &dyn Fn(f64) -> Result<(f64, f64)>,
    ) -> Result<(f64, f64, Gradients)>;
}

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

/// Identity of a parameter state: the owning model plus a mutation counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ParamVersion {
    model: u64,
    version: u64,
}

impl ParamVersion {
    pub(crate) fn fresh() -> Self {
        ParamVersion {
            model: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        }
    }

    pub(crate) fn bump(&mut self) {
        self.version += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LstmIds {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BiLstmIds {
    pub fwd: LstmIds,
    pub bwd: LstmIds,
    pub head_fwd: ParamId,
    pub head_bwd: ParamId,
    pub head_b: ParamId,
}

pub(crate) const FORGET_BIAS: f64 = 1.0;

pub(crate) fn register_lstm(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    hidden: usize,
    rng: &mut SplitMix64,
) -> Result<LstmIds> {
    Ok(LstmIds {
        w_x: store.insert_glorot(
            format!("{prefix}.w_x"),
            &[4 * hidden, input],
            input,
            4 * hidden,
            rng,
        )?,
        w_h: store.insert_glorot(
            format!("{prefix}.w_h"),
            &[4 * hidden, hidden],
            hidden,
            4 * hidden,
            rng,
        )?,
        // Forget gate starts open.
        b: store.insert(
            format!("{prefix}.b"),
            Tensor::from_vec(
                &[4 * hidden],
                (0..4 * hidden)
                    .map(|i| if i / hidden == 1 { FORGET_BIAS } else { 0.0 })
                    .collect(),
            )?,
        )?,
    })
}

pub(crate) fn register_bilstm(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    hidden: usize,
    output: usize,
    rng: &mut SplitMix64,
) -> Result<BiLstmIds> {
    let fwd = register_lstm(store, &format!("{prefix}.fwd"), input, hidden, rng)?;
    let bwd = register_lstm(store, &format!("{prefix}.bwd"), input, hidden, rng)?;
    // Both head matrices feed the same outputs, so the fan-in is 2H.
    let head_fwd = store.insert_glorot(
        format!("{prefix}.head_fwd"),
        &[output, hidden],
        2 * hidden,
        output,
        rng,
    )?;
    let head_bwd = store.insert_glorot(
        format!("{prefix}.head_bwd"),
        &[output, hidden],
        2 * hidden,
        output,
        rng,
    )?;
    let head_b = store.insert_zeros(format!("{prefix}.head_b"), &[output])?;
    Ok(BiLstmIds {
        fwd,
        bwd,
        head_fwd,
        head_bwd,
        head_b,
    })
}

pub(crate) fn lstm_weights<'a>(store: &'a ParamStore, ids: &LstmIds) -> LstmWeights<'a> {
    LstmWeights {
        w_x: store.value(ids.w_x),
        w_h: store.value(ids.w_h),
        b: store.value(ids.b),
    }
}

pub(crate) fn bilstm_weights<'a>(
    store: &'a ParamStore,
    ids: &BiLstmIds,
    activation: Activation,
) -> BiLstmWeights<'a> {
    BiLstmWeights {
        fwd: lstm_weights(store, &ids.fwd),
        bwd: lstm_weights(store, &ids.bwd),
        head_fwd: store.value(ids.head_fwd),
        head_bwd: store.value(ids.head_bwd),
        head_b: store.value(ids.head_b),
        activation,
    }
}

pub(crate) fn accumulate_lstm(grads: &mut Gradients, ids: &LstmIds, g: &LstmGrads) -> Result<()> {
    grads.accumulate(ids.w_x, &g.w_x)?;
    grads.accumulate(ids.w_h, &g.w_h)?;
    grads.accumulate(ids.b, &g.b)
}

pub(crate) fn accumulate_bilstm(
    grads: &mut Gradients,
    ids: &BiLstmIds,
    g: &BiLstmGrads,
) -> Result<()> {
    accumulate_lstm(grads, &ids.fwd, &g.fwd)?;
    accumulate_lstm(grads, &ids.bwd, &g.bwd)?;
    grads.accumulate(ids.head_fwd, &g.head_fwd)?;
    grads.accumulate(ids.head_bwd, &g.head_bwd)?;
    grads.accumulate(ids.head_b, &g.head_b)
}

/// Shared sigmoid read-out: `sigmoid(w . f + b)` with `w: 1 x D`.
pub(crate) fn readout(w: &Tensor, b: &Tensor, features: &[f64]) -> f64 {
    let z: f64 = w.data().iter().zip(features).map(|(a, x)| a * x).sum::<f64>() + b.data()[0];
    crate::layers::sigmoid(z)
}

pub(crate) fn check_stress_window(stress: &[f64], delta_t: usize) -> Result<()> {
    if stress.len() != delta_t {
        return Err(Error::ShapeMismatch(format!(
            "stress window has {} values, model expects {delta_t}",
            stress.len()
        )));
    }
    if let Some(v) = stress.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("stress window value {v}")));
    }
    Ok(())
}
