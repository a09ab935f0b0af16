//! Reference predictors: per-step historical average, and stress-only LSTM /
//! Bi-LSTM forecasters built from the same cells as StressNet.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    bilstm_backward, bilstm_forward, lstm_sequence_backward, lstm_sequence_forward, Activation,
};
use crate::model::{
    accumulate_bilstm, accumulate_lstm, bilstm_weights, check_stress_window, lstm_weights,
    readout, register_bilstm, register_lstm, Architecture, BiLstmIds, Channel, LstmIds,
    ParamVersion, Surrogate,
};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Per-time-step mean of the training series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalAverage {
    mean: Vec<f64>,
}

impl HistoricalAverage {
    pub fn fit<S: AsRef<[f64]>>(series: &[S]) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| Error::Data("historical average needs at least one series".into()))?;
        let t = first.as_ref().len();
        if series.iter().any(|s| s.as_ref().len() != t) {
            return Err(Error::Data("training series differ in length".into()));
        }
        let n = series.len() as f64;
        let mean = (0..t)
            .map(|k| series.iter().map(|s| s.as_ref()[k]).sum::<f64>() / n)
            .collect();
        Ok(HistoricalAverage { mean })
    }

    /// Prediction for 0-based step `t`.
    pub fn predict(&self, t: usize) -> Result<f64> {
        self.mean.get(t).copied().ok_or_else(|| {
            Error::InvalidArgument(format!("step {t} beyond fitted length {}", self.mean.len()))
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn series(&self) -> &[f64] {
        &self.mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub delta_t: usize,
    pub hidden: usize,
    /// Bi-LSTM per-step output width; unused by the unidirectional LSTM.
    pub feature_dim: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            delta_t: 50,
            hidden: 32,
            feature_dim: 32,
        }
    }
}

impl BaselineConfig {
    pub fn desk() -> Self {
        BaselineConfig {
            hidden: 16,
            feature_dim: 16,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.delta_t == 0 || self.hidden == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidArgument(format!("invalid baseline config {self:?}")));
        }
        Ok(())
    }
}

fn reject_damage(damage: Option<&Tensor>) -> Result<()> {
    if damage.is_some() {
        return Err(Error::InvalidArgument(
            "stress-only baseline has no damage input".into(),
        ));
    }
    Ok(())
}

/// Unidirectional LSTM over the stress window; the last hidden state feeds a
/// sigmoid read-out.
#[derive(Debug, Clone)]
pub struct LstmBaseline {
    config: BaselineConfig,
    channel: Channel,
    params: ParamStore,
    lstm: LstmIds,
    head_w: ParamId,
    head_b: ParamId,
    version: ParamVersion,
}

impl LstmBaseline {
    pub fn new(config: BaselineConfig, channel: Channel, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::derived(seed, &format!("lstm-init-{channel}"));
        let mut p = ParamStore::new();
        let lstm = register_lstm(&mut p, "lstm", 1, config.hidden, &mut rng)?;
        let head_w = p.insert_glorot("head.w", &[1, config.hidden], config.hidden, 1, &mut rng)?;
        let head_b = p.insert_zeros("head.b", &[1])?;
        Ok(LstmBaseline {
            config,
            channel,
            params: p,
            lstm,
            head_w,
            head_b,
            version: ParamVersion::fresh(),
        })
    }

    pub fn from_params(config: BaselineConfig, channel: Channel, params: ParamStore) -> Result<Self> {
        let mut m = Self::new(config, channel, 0)?;
        m.params.assign(&params)?;
        Ok(m)
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    fn run(
        &self,
        stress: &[f64],
        loss: Option<&dyn Fn(f64) -> Result<(f64, f64)>>,
    ) -> Result<(f64, f64, Option<Gradients>)> {
        check_stress_window(stress, self.config.delta_t)?;
        let dt = self.config.delta_t;
        let w = lstm_weights(&self.params, &self.lstm);
        let xs = Tensor::from_vec(&[1, dt], stress.to_vec())?;
        let (hs, cache) = lstm_sequence_forward(&xs, &w, false)?;
        let last = &hs[dt - 1];
        let head_w = self.params.value(self.head_w);
        let pred = readout(head_w, self.params.value(self.head_b), last);
        let Some(loss) = loss else {
            return Ok((pred, 0.0, None));
        };
        let (value, d_pred) = loss(pred)?;
        let dz = d_pred * pred * (1.0 - pred);
        let mut grads = self.params.zero_grads();
        let gw = Tensor::from_vec(&[1, last.len()], last.iter().map(|h| dz * h).collect())?;
        grads.accumulate(self.head_w, &gw)?;
        grads.accumulate(self.head_b, &Tensor::scalar(dz))?;
        let mut dhs = vec![vec![0.0; self.config.hidden]; dt];
        dhs[dt - 1] = head_w.data().iter().map(|v| dz * v).collect();
        let mut lg = crate::layers::LstmGrads::zeros_like(&w);
        lstm_sequence_backward(cache, &w, &dhs, &mut lg)?;
        accumulate_lstm(&mut grads, &self.lstm, &lg)?;
        Ok((pred, value, Some(grads)))
    }
}

impl Surrogate for LstmBaseline {
    fn architecture(&self) -> Architecture {
        Architecture::Lstm
    }

    fn channel(&self) -> Channel {
        self.channel
    }

    fn delta_t(&self) -> usize {
        self.config.delta_t
    }

    fn uses_damage(&self) -> bool {
        false
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        self.version.bump();
        &mut self.params
    }

    fn predict(&self, stress: &[f64], damage: Option<&Tensor>) -> Result<f64> {
        reject_damage(damage)?;
        Ok(self.run(stress, None)?.0)
    }

    fn predict_with_grad(
        &self,
        stress: &[f64],
        damage: Option<&Tensor>,
        loss: &dyn Fn(f64) -> Result<(f64, f64)>,
    ) -> Result<(f64, f64, Gradients)> {
        reject_damage(damage)?;
        let (p, v, g) = self.run(stress, Some(loss))?;
        Ok((p, v, g.expect("gradients requested")))
    }
}

/// Stress-only Bi-LSTM; the last step's per-step output feeds a sigmoid
/// read-out.
#[derive(Debug, Clone)]
pub struct BiLstmBaseline {
    config: BaselineConfig,
    channel: Channel,
    params: ParamStore,
    bilstm: BiLstmIds,
    head_w: ParamId,
    head_b: ParamId,
    version: ParamVersion,
}

impl BiLstmBaseline {
    pub fn new(config: BaselineConfig, channel: Channel, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::derived(seed, &format!("bilstm-init-{channel}"));
        let mut p = ParamStore::new();
        let d = config.feature_dim;
        let bilstm = register_bilstm(&mut p, "bilstm", 1, config.hidden, d, &mut rng)?;
        let head_w = p.insert_glorot("head.w", &[1, d], d, 1, &mut rng)?;
        let head_b = p.insert_zeros("head.b", &[1])?;
        Ok(BiLstmBaseline {
            config,
            channel,
            params: p,
            bilstm,
            head_w,
            head_b,
            version: ParamVersion::fresh(),
        })
    }

    pub fn from_params(config: BaselineConfig, channel: Channel, params: ParamStore) -> Result<Self> {
        let mut m = Self::new(config, channel, 0)?;
        m.params.assign(&params)?;
        Ok(m)
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    fn run(
        &self,
        stress: &[f64],
        loss: Option<&dyn Fn(f64) -> Result<(f64, f64)>>,
    ) -> Result<(f64, f64, Option<Gradients>)> {
        check_stress_window(stress, self.config.delta_t)?;
        let dt = self.config.delta_t;
        let d = self.config.feature_dim;
        let w = bilstm_weights(&self.params, &self.bilstm, Activation::Identity);
        let xs = Tensor::from_vec(&[1, dt], stress.to_vec())?;
        let (out, cache) = bilstm_forward(&xs, &w)?;
        let last = out.slice_channel(1, dt - 1)?.into_data();
        let head_w = self.params.value(self.head_w);
        let pred = readout(head_w, self.params.value(self.head_b), &last);
        let Some(loss) = loss else {
            return Ok((pred, 0.0, None));
        };
        let (value, d_pred) = loss(pred)?;
        let dz = d_pred * pred * (1.0 - pred);
        let mut grads = self.params.zero_grads();
        let gw = Tensor::from_vec(&[1, d], last.iter().map(|f| dz * f).collect())?;
        grads.accumulate(self.head_w, &gw)?;
        grads.accumulate(self.head_b, &Tensor::scalar(dz))?;
        let mut g_out = vec![0.0; d * dt];
        for (r, wv) in head_w.data().iter().enumerate() {
            g_out[r * dt + dt - 1] = dz * wv;
        }
        let (_, bg) = bilstm_backward(cache, &w, &Tensor::from_vec(&[d, dt], g_out)?)?;
        accumulate_bilstm(&mut grads, &self.bilstm, &bg)?;
        Ok((pred, value, Some(grads)))
    }
}

impl Surrogate for BiLstmBaseline {
    fn architecture(&self) -> Architecture {
        Architecture::BiLstm
    }

    fn channel(&self) -> Channel {
        self.channel
    }

    fn delta_t(&self) -> usize {
        self.config.delta_t
    }

    fn uses_damage(&self) -> bool {
        false
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        self.version.bump();
        &mut self.params
    }

    fn predict(&self, stress: &[f64], damage: Option<&Tensor>) -> Result<f64> {
        reject_damage(damage)?;
        Ok(self.run(stress, None)?.0)
    }

    fn predict_with_grad(
        &self,
        stress: &[f64],
        damage: Option<&Tensor>,
        loss: &dyn Fn(f64) -> Result<(f64, f64)>,
    ) -> Result<(f64, f64, Gradients)> {
        reject_damage(damage)?;
        let (p, v, g) = self.run(stress, Some(loss))?;
        Ok((p, v, g.expect("gradients requested")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradient;

    #[test]
    fn historical_average_cases() {
        let one = HistoricalAverage::fit(&[vec![0.1, 0.5, 0.2]]).unwrap();
        assert_eq!(one.series(), &[0.1, 0.5, 0.2]);
        let two = HistoricalAverage::fit(&[vec![0.2, 0.4], vec![0.6, 0.0]]).unwrap();
        assert_eq!(two.predict(0).unwrap(), 0.4);
        assert_eq!(two.predict(1).unwrap(), 0.2);
        assert!(two.predict(2).is_err());
        assert!(HistoricalAverage::fit::<Vec<f64>>(&[]).is_err());
        assert!(HistoricalAverage::fit(&[vec![0.1], vec![0.1, 0.2]]).is_err());
    }

    #[test]
    fn baselines_have_no_damage_port() {
        let cfg = BaselineConfig {
            delta_t: 4,
            hidden: 3,
            feature_dim: 2,
        };
        let l = LstmBaseline::new(cfg, Channel::Xx, 1).unwrap();
        let b = BiLstmBaseline::new(cfg, Channel::Xx, 1).unwrap();
        assert!(!l.uses_damage() && !b.uses_damage());
        let dmg = Tensor::zeros(&[1, 1, 4]);
        assert!(l.predict(&[0.1; 4], Some(&dmg)).is_err());
        assert!(b.predict(&[0.1; 4], Some(&dmg)).is_err());
        assert!(l.params().iter().all(|(n, _)| !n.contains("conv") && !n.contains("damage")));
        assert!(b.params().iter().all(|(n, _)| !n.contains("conv") && !n.contains("damage")));
    }

    fn check_model<M: Surrogate + Clone>(model: &M, stress: &[f64]) {
        let target = 0.37;
        let loss = |p: f64| Ok(((p - target).powi(2), 2.0 * (p - target)));
        let (_, _, grads) = model.predict_with_grad(stress, None, &loss).unwrap();
        for id in model.params().ids() {
            let analytic = grads.get(id).data().to_vec();
            let x = model.params().value(id).data().to_vec();
            let r = check_gradient(&analytic, &x, 1e-5, |v| {
                let mut m = model.clone();
                m.params_mut().value_mut(id).data_mut().copy_from_slice(v);
                (m.predict(stress, None).unwrap() - target).powi(2)
            });
            assert!(r.max_rel_error < 1e-4, "{}: {r:?}", model.params().name(id));
        }
    }

    #[test]
    fn baseline_gradients_match_finite_differences() {
        let cfg = BaselineConfig {
            delta_t: 5,
            hidden: 3,
            feature_dim: 2,
        };
        let stress = [0.1, 0.4, 0.35, 0.8, 0.6];
        check_model(&LstmBaseline::new(cfg, Channel::Yy, 3).unwrap(), &stress);
        check_model(&BiLstmBaseline::new(cfg, Channel::Yy, 3).unwrap(), &stress);
    }
}
