//! The two-branch StressNet model.
//!
//! ```text
//! stress x_1..x_dt ──► Bi-LSTM ─────────────────────────┐ D x dt
//!                                                        ├─ concat 2D x dt ─► Bi-LSTM ─► last step ─► FC + sigmoid ─► x̂
//! damage I_1..I_dt ──► [TI-conv ─► max-pool]* ─► FC ─► Bi-LSTM ┘ D x dt
//! ```

use serde::{Deserialize, Serialize};

use super::{
    accumulate_bilstm, bilstm_weights, check_stress_window, readout, register_bilstm,
    Architecture, BiLstmIds, Channel, ParamVersion, Surrogate,
};
use crate::error::{Error, Result};
use crate::layers::{
    bilstm_backward, bilstm_forward, fc_backward, fc_forward, max_pool_backward, max_pool_forward,
    ti_conv_backward, ti_conv_forward, Activation, BiLstmCache, FcCache, MaxPoolCache,
    TiConvCache,
};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub kernel: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StressNetConfig {
    pub delta_t: usize,
    pub feature_dim: usize,
    pub conv_blocks: Vec<ConvBlock>,
    pub hidden: usize,
    pub frame_rows: usize,
    pub frame_cols: usize,
}

impl Default for StressNetConfig {
    /// 24x16 frames: conv3 -> 22x14, pool2 -> 11x7, conv2 -> 10x6, pool2 -> 5x3.
    fn default() -> Self {
        StressNetConfig {
            delta_t: 10,
            feature_dim: 32,
            conv_blocks: vec![
                ConvBlock { kernel: 3, pool: 2 },
                ConvBlock { kernel: 2, pool: 2 },
            ],
            hidden: 32,
            frame_rows: 24,
            frame_cols: 16,
        }
    }
}

impl StressNetConfig {
    /// Smaller model for single-core runs.
    pub fn desk() -> Self {
        StressNetConfig {
            feature_dim: 16,
            hidden: 16,
            ..Self::default()
        }
    }

    /// Spatial extent after every conv/pool block.
    pub fn feature_map_shape(&self) -> Result<(usize, usize)> {
        let (mut h, mut w) = (self.frame_rows, self.frame_cols);
        for (i, b) in self.conv_blocks.iter().enumerate() {
            if b.kernel == 0 || b.kernel > h || b.kernel > w {
                return Err(Error::InvalidArgument(format!(
                    "conv block {i}: kernel {} does not fit {h}x{w}",
                    b.kernel
                )));
            }
            h = h - b.kernel + 1;
            w = w - b.kernel + 1;
            if b.pool == 0 || h % b.pool != 0 || w % b.pool != 0 {
                return Err(Error::InvalidArgument(format!(
                    "conv block {i}: pool {} does not divide {h}x{w}",
                    b.pool
                )));
            }
            h /= b.pool;
            w /= b.pool;
        }
        Ok((h, w))
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_t == 0 || self.feature_dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument(format!(
                "delta_t, feature_dim and hidden must be positive: {self:?}"
            )));
        }
        self.feature_map_shape().map(|_| ())
    }
}

#[derive(Debug, Clone)]
struct StressNetIds {
    conv: Vec<ParamId>,
    damage_fc: ParamId,
    stress: BiLstmIds,
    damage: BiLstmIds,
    fusion: BiLstmIds,
    head_w: ParamId,
    head_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct StressNet {
    config: StressNetConfig,
    channel: Channel,
    params: ParamStore,
    ids: StressNetIds,
    version: ParamVersion,
}

/// Activations saved by [`StressNet::forward`] for one backward pass.
#[derive(Debug)]
pub struct ForwardCache {
    version: ParamVersion,
    conv: Vec<(TiConvCache, MaxPoolCache)>,
    fc: FcCache,
    damage_features: Tensor,
    stress_bilstm: BiLstmCache,
    stress_encoding: Tensor,
    damage_bilstm: BiLstmCache,
    damage_encoding: Tensor,
    fusion_bilstm: BiLstmCache,
    fusion_last: Vec<f64>,
    prediction: f64,
}

impl ForwardCache {
    /// TI-CNN + FC output for the damage window, `D x dt`.
    pub fn damage_features(&self) -> &Tensor {
        &self.damage_features
    }

    /// Stress-branch Bi-LSTM output, `D x dt`.
    pub fn stress_encoding(&self) -> &Tensor {
        &self.stress_encoding
    }

    /// Damage-branch Bi-LSTM output, `D x dt`.
    pub fn damage_encoding(&self) -> &Tensor {
        &self.damage_encoding
    }

    pub fn prediction(&self) -> f64 {
        self.prediction
    }
}

impl StressNet {
    pub fn new(config: StressNetConfig, channel: Channel, seed: u64) -> Result<Self> {
        config.validate()?;
        let (fh, fw) = config.feature_map_shape()?;
        let d = config.feature_dim;
        let hd = config.hidden;
        let mut rng = SplitMix64::derived(seed, &format!("stressnet-init-{channel}"));
        let mut p = ParamStore::new();
        let conv = config
            .conv_blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let area = b.kernel * b.kernel;
                p.insert_glorot(
                    format!("conv{i}.kernel"),
                    &[b.kernel, b.kernel, config.delta_t],
                    area,
                    area,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let damage_fc = p.insert_glorot("damage_fc.w", &[d, fh * fw], fh * fw, d, &mut rng)?;
        let stress = register_bilstm(&mut p, "stress_bilstm", 1, hd, d, &mut rng)?;
        let damage = register_bilstm(&mut p, "damage_bilstm", d, hd, d, &mut rng)?;
        let fusion = register_bilstm(&mut p, "fusion_bilstm", 2 * d, hd, d, &mut rng)?;
        let head_w = p.insert_glorot("head.w", &[1, d], d, 1, &mut rng)?;
        let head_b = p.insert_zeros("head.b", &[1])?;
        Ok(StressNet {
            config,
            channel,
            params: p,
            ids: StressNetIds {
                conv,
                damage_fc,
                stress,
                damage,
                fusion,
                head_w,
                head_b,
            },
            version: ParamVersion::fresh(),
        })
    }

    /// Rebuilds a model around loaded parameters, checking names and shapes.
    pub fn from_params(config: StressNetConfig, channel: Channel, params: ParamStore) -> Result<Self> {
        let mut model = Self::new(config, channel, 0)?;
        model.params.assign(&params)?;
        Ok(model)
    }

    pub fn config(&self) -> &StressNetConfig {
        &self.config
    }

    fn check_damage(&self, damage: &Tensor) -> Result<()> {
        let c = &self.config;
        if damage.shape() != [c.frame_rows, c.frame_cols, c.delta_t] {
            return Err(Error::ShapeMismatch(format!(
                "damage window {:?}, model expects [{}, {}, {}]",
                damage.shape(),
                c.frame_rows,
                c.frame_cols,
                c.delta_t
            )));
        }
        if let Some(v) = damage.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "damage values must be 0 or 1, found {v}"
            )));
        }
        Ok(())
    }

    pub fn forward(&self, stress: &[f64], damage: &Tensor) -> Result<ForwardCache> {
        let c = &self.config;
        check_stress_window(stress, c.delta_t)?;
        self.check_damage(damage)?;
        let p = &self.params;

        let mut x = damage.clone();
        let mut conv = Vec::with_capacity(c.conv_blocks.len());
        for (block, &kid) in c.conv_blocks.iter().zip(&self.ids.conv) {
            let (y, cc) = ti_conv_forward(&x, p.value(kid))?;
            let (z, pc) = max_pool_forward(&y, block.pool)?;
            conv.push((cc, pc));
            x = z;
        }
        let (damage_features, fc) = fc_forward(&x, p.value(self.ids.damage_fc))?;

        let stress_in = Tensor::from_vec(&[1, c.delta_t], stress.to_vec())?;
        let stress_w = bilstm_weights(p, &self.ids.stress, Activation::Identity);
        let (stress_encoding, stress_bilstm) = bilstm_forward(&stress_in, &stress_w)?;

        let damage_w = bilstm_weights(p, &self.ids.damage, Activation::Identity);
        let (damage_encoding, damage_bilstm) = bilstm_forward(&damage_features, &damage_w)?;

        // Row-major D x dt blocks stack into 2D x dt.
        let mut fused = stress_encoding.data().to_vec();
        fused.extend_from_slice(damage_encoding.data());
        let fused = Tensor::from_vec(&[2 * c.feature_dim, c.delta_t], fused)?;
        let fusion_w = bilstm_weights(p, &self.ids.fusion, Activation::Identity);
        let (fusion_out, fusion_bilstm) = bilstm_forward(&fused, &fusion_w)?;
        let fusion_last = fusion_out.slice_channel(1, c.delta_t - 1)?.into_data();

        let prediction = readout(
            p.value(self.ids.head_w),
            p.value(self.ids.head_b),
            &fusion_last,
        );
        if !prediction.is_finite() {
            return Err(Error::NonFinite("stressnet prediction".into()));
        }
        Ok(ForwardCache {
            version: self.version,
            conv,
            fc,
            damage_features,
            stress_bilstm,
            stress_encoding,
            damage_bilstm,
            damage_encoding,
            fusion_bilstm,
            fusion_last,
            prediction,
        })
    }

    /// Parameter gradients for an upstream `d_loss / d_prediction`.
    pub fn backward(&self, cache: ForwardCache, d_pred: f64) -> Result<Gradients> {
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        let c = &self.config;
        let p = &self.params;
        let d = c.feature_dim;
        let dt = c.delta_t;
        let mut grads = p.zero_grads();

        let y = cache.prediction;
        let dz = d_pred * y * (1.0 - y);
        let head_w = p.value(self.ids.head_w);
        let gw = Tensor::from_vec(&[1, d], cache.fusion_last.iter().map(|f| dz * f).collect())?;
        grads.accumulate(self.ids.head_w, &gw)?;
        grads.accumulate(self.ids.head_b, &Tensor::scalar(dz))?;

        let mut g_fusion = vec![0.0; d * dt];
        for (r, wv) in head_w.data().iter().enumerate() {
            g_fusion[r * dt + dt - 1] = dz * wv;
        }
        let g_fusion = Tensor::from_vec(&[d, dt], g_fusion)?;
        let fusion_w = bilstm_weights(p, &self.ids.fusion, Activation::Identity);
        let (g_fused, gb) = bilstm_backward(cache.fusion_bilstm, &fusion_w, &g_fusion)?;
        accumulate_bilstm(&mut grads, &self.ids.fusion, &gb)?;

        let (g_stress_enc, g_damage_enc) = g_fused.data().split_at(d * dt);
        let g_stress_enc = Tensor::from_vec(&[d, dt], g_stress_enc.to_vec())?;
        let g_damage_enc = Tensor::from_vec(&[d, dt], g_damage_enc.to_vec())?;

        let stress_w = bilstm_weights(p, &self.ids.stress, Activation::Identity);
        let (_, gb) = bilstm_backward(cache.stress_bilstm, &stress_w, &g_stress_enc)?;
        accumulate_bilstm(&mut grads, &self.ids.stress, &gb)?;

        let damage_w = bilstm_weights(p, &self.ids.damage, Activation::Identity);
        let (g_feat, gb) = bilstm_backward(cache.damage_bilstm, &damage_w, &g_damage_enc)?;
        accumulate_bilstm(&mut grads, &self.ids.damage, &gb)?;

        let (g_map, g_fc) = fc_backward(cache.fc, &g_feat)?;
        grads.accumulate(self.ids.damage_fc, &g_fc)?;
        let (fh, fw) = c.feature_map_shape()?;
        let mut g = g_map.reshape(&[fh, fw, dt])?;
        for ((cc, pc), &kid) in cache.conv.into_iter().zip(&self.ids.conv).rev() {
            let g_conv = max_pool_backward(pc, &g)?;
            let (gx, gk) = ti_conv_backward(cc, &g_conv)?;
            grads.accumulate(kid, &gk)?;
            g = gx;
        }
        Ok(grads)
    }
}

impl Surrogate for StressNet {
    fn architecture(&self) -> Architecture {
        Architecture::StressNet
    }

    fn channel(&self) -> Channel {
        self.channel
    }

    fn delta_t(&self) -> usize {
        self.config.delta_t
    }

    fn uses_damage(&self) -> bool {
        true
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        self.version.bump();
        &mut self.params
    }

    fn predict(&self, stress: &[f64], damage: Option<&Tensor>) -> Result<f64> {
        let damage = damage.ok_or_else(|| {
            Error::InvalidArgument("StressNet needs a damage window".into())
        })?;
        Ok(self.forward(stress, damage)?.prediction)
    }

    fn predict_with_grad(
        &self,
        stress: &[f64],
        damage: Option<&Tensor>,
        loss: &dyn Fn(f64) -> Result<(f64, f64)>,
    ) -> Result<(f64, f64, Gradients)> {
        let damage = damage.ok_or_else(|| {
            Error::InvalidArgument("StressNet needs a damage window".into())
        })?;
        let cache = self.forward(stress, damage)?;
        let pred = cache.prediction;
        let (value, d_pred) = loss(pred)?;
        let grads = self.backward(cache, d_pred)?;
        Ok((pred, value, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> StressNetConfig {
        StressNetConfig {
            delta_t: 3,
            feature_dim: 4,
            conv_blocks: vec![ConvBlock { kernel: 3, pool: 2 }],
            hidden: 3,
            frame_rows: 6,
            frame_cols: 4,
        }
    }

    #[test]
    fn default_blocks_fit_downsampled_frames() {
        assert_eq!(StressNetConfig::default().feature_map_shape().unwrap(), (5, 3));
        let bad = StressNetConfig {
            conv_blocks: vec![ConvBlock { kernel: 3, pool: 2 }; 2],
            ..StressNetConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_params_give_sigmoid_of_bias() {
        let mut m = StressNet::new(toy_config(), Channel::Yy, 1).unwrap();
        let ids: Vec<_> = m.params().ids().collect();
        for id in ids {
            m.params_mut().value_mut(id).fill(0.0);
        }
        let hb = m.params().find("head.b").unwrap();
        m.params_mut().value_mut(hb).data_mut()[0] = 0.3;
        let y = m
            .predict(&[0.0; 3], Some(&Tensor::zeros(&[6, 4, 3])))
            .unwrap();
        assert_eq!(y, crate::layers::sigmoid(0.3));
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = StressNet::new(toy_config(), Channel::Xx, 1).unwrap();
        let dmg = Tensor::zeros(&[6, 4, 3]);
        assert!(m.forward(&[0.1, 0.2], &dmg).is_err());
        let mut bad = dmg.clone();
        bad.data_mut()[0] = 0.5;
        assert!(m.forward(&[0.1, 0.2, 0.3], &bad).is_err());
        assert!(m.predict(&[0.1, 0.2, 0.3], None).is_err());
    }

    #[test]
    fn stale_cache_rejected() {
        let mut m = StressNet::new(toy_config(), Channel::Xx, 1).unwrap();
        let cache = m.forward(&[0.1, 0.2, 0.3], &Tensor::zeros(&[6, 4, 3])).unwrap();
        let id = m.params().find("head.b").unwrap();
        m.params_mut().value_mut(id).data_mut()[0] += 1.0;
        assert!(matches!(m.backward(cache, 1.0), Err(Error::StaleCache)));

        let other = StressNet::new(toy_config(), Channel::Xx, 1).unwrap();
        let cache = other.forward(&[0.1, 0.2, 0.3], &Tensor::zeros(&[6, 4, 3])).unwrap();
        assert!(matches!(m.backward(cache, 1.0), Err(Error::StaleCache)));
    }

    #[test]
    fn zero_upstream_zero_grads_and_determinism() {
        let m = StressNet::new(toy_config(), Channel::Xx, 9).unwrap();
        let mut dmg = Tensor::zeros(&[6, 4, 3]);
        dmg.data_mut()[5] = 1.0;
        let s = [0.2, 0.4, 0.3];
        let g = m.backward(m.forward(&s, &dmg).unwrap(), 0.0).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        let a = m.backward(m.forward(&s, &dmg).unwrap(), 1.0).unwrap();
        let b = m.backward(m.forward(&s, &dmg).unwrap(), 1.0).unwrap();
        assert_eq!(a, b);
        assert!(a.max_abs() > 0.0);
    }

    #[test]
    fn different_channels_initialize_differently() {
        let a = StressNet::new(toy_config(), Channel::Xx, 4).unwrap();
        let b = StressNet::new(toy_config(), Channel::Yy, 4).unwrap();
        assert_ne!(a.params(), b.params());
    }
}
