//! Preprocessing: damage downsampling, min-max normalization, sliding
//! windows, and the train / validation / test partition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Channel;
use crate::rng::SplitMix64;
use crate::sim::{DamageFrame, SimulationRecord};
use crate::tensor::Tensor;

pub const RAW_ROWS: usize = 192;
pub const RAW_COLS: usize = 128;
pub const DOWNSAMPLE: usize = 8;
pub const FRAME_ROWS: usize = RAW_ROWS / DOWNSAMPLE;
pub const FRAME_COLS: usize = RAW_COLS / DOWNSAMPLE;

/// 8x8 block max of a 192x128 frame, giving 24x16.
pub fn downsample_frame(frame: &DamageFrame) -> Result<DamageFrame> {
    if frame.rows() != RAW_ROWS || frame.cols() != RAW_COLS {
        return Err(Error::ShapeMismatch(format!(
            "expected a {RAW_ROWS}x{RAW_COLS} frame, got {}x{}",
            frame.rows(),
            frame.cols()
        )));
    }
    let mut out = DamageFrame::new(FRAME_ROWS, FRAME_COLS);
    for r in 0..RAW_ROWS {
        for c in 0..RAW_COLS {
            if frame.get(r, c) {
                out.set(r / DOWNSAMPLE, c / DOWNSAMPLE);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub x_min: f64,
    pub x_max: f64,
}

impl NormalizationStats {
    pub fn new(x_min: f64, x_max: f64) -> Result<Self> {
        let s = NormalizationStats { x_min, x_max };
        s.validate()?;
        Ok(s)
    }

    pub fn fit<S: AsRef<[f64]>>(series: &[S]) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in series.iter().flat_map(|s| s.as_ref().iter()) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        Self::new(lo, hi)
    }

    fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_max > self.x_min) {
            return Err(Error::Data(format!(
                "degenerate normalization bounds [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.x_min) / (self.x_max - self.x_min)
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        x * (self.x_max - self.x_min) + self.x_min
    }
}

/// Per-channel normalization bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub xx: NormalizationStats,
    pub yy: NormalizationStats,
}

impl ChannelStats {
    pub fn fit(records: &[&SimulationRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Data("no records to fit normalization".into()));
        }
        let xx: Vec<&[f64]> = records.iter().map(|r| r.stress_xx.as_slice()).collect();
        let yy: Vec<&[f64]> = records.iter().map(|r| r.stress_yy.as_slice()).collect();
        Ok(ChannelStats {
            xx: NormalizationStats::fit(&xx)?,
            yy: NormalizationStats::fit(&yy)?,
        })
    }

    pub fn get(&self, channel: Channel) -> NormalizationStats {
        match channel {
            Channel::Xx => self.xx,
            Channel::Yy => self.yy,
        }
    }
}

/// One simulation reduced to what the models consume: downsampled frames and
/// a single stress channel, raw and normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSim {
    pub id: usize,
    pub seed: u64,
    pub frames: Vec<DamageFrame>,
    pub stress_raw: Vec<f64>,
    pub stress_norm: Vec<f64>,
}

impl PreparedSim {
    pub fn new(
        id: usize,
        seed: u64,
        frames: Vec<DamageFrame>,
        stress_raw: Vec<f64>,
        stats: &NormalizationStats,
    ) -> Result<Self> {
        if frames.len() != stress_raw.len() {
            return Err(Error::Data(format!(
                "sim {id}: {} frames but {} stress values",
                frames.len(),
                stress_raw.len()
            )));
        }
        if let Some(first) = frames.first() {
            if let Some(f) = frames
                .iter()
                .find(|f| f.rows() != first.rows() || f.cols() != first.cols())
            {
                return Err(Error::Data(format!(
                    "sim {id}: frames mix {}x{} and {}x{}",
                    first.rows(),
                    first.cols(),
                    f.rows(),
                    f.cols()
                )));
            }
        }
        let stress_norm = stress_raw.iter().map(|&x| stats.normalize(x)).collect();
        Ok(PreparedSim {
            id,
            seed,
            frames,
            stress_raw,
            stress_norm,
        })
    }

    pub fn from_record(
        id: usize,
        record: &SimulationRecord,
        channel: Channel,
        stats: &NormalizationStats,
    ) -> Result<Self> {
        let frames = record
            .frames
            .iter()
            .map(downsample_frame)
            .collect::<Result<Vec<_>>>()?;
        Self::new(id, record.seed, frames, record.stress(channel).to_vec(), stats)
    }

    pub fn len(&self) -> usize {
        self.stress_norm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stress_norm.is_empty()
    }

    pub fn renormalize(&mut self, stats: &NormalizationStats) {
        self.stress_norm = self.stress_raw.iter().map(|&x| stats.normalize(x)).collect();
    }

    /// `h x w x delta_t` stack of frames `start .. start + delta_t`.
    pub fn damage_window(&self, start: usize, delta_t: usize) -> Result<Tensor> {
        if delta_t == 0 || start + delta_t > self.frames.len() {
            return Err(Error::Data(format!(
                "sim {}: frames {start}..{} requested, {} available",
                self.id,
                start + delta_t,
                self.frames.len()
            )));
        }
        let (h, w) = (self.frames[0].rows(), self.frames[0].cols());
        let mut data = vec![0.0; h * w * delta_t];
        for (t, f) in self.frames[start..start + delta_t].iter().enumerate() {
            for r in 0..h {
                for c in 0..w {
                    if f.get(r, c) {
                        data[(r * w + c) * delta_t + t] = 1.0;
                    }
                }
            }
        }
        Tensor::from_vec(&[h, w, delta_t], data)
    }

    /// Number of teacher-forced windows.
    pub fn window_count(&self, delta_t: usize) -> usize {
        self.len().saturating_sub(delta_t)
    }

    /// Window `k`: inputs at steps `k .. k + delta_t`, target at `k + delta_t`
    /// (all 0-based).
    pub fn window(&self, k: usize, delta_t: usize, with_damage: bool) -> Result<WindowSample> {
        if k + delta_t >= self.len() {
            return Err(Error::Data(format!(
                "sim {}: window {k} needs step {}, series has {}",
                self.id,
                k + delta_t,
                self.len()
            )));
        }
        Ok(WindowSample {
            stress: self.stress_norm[k..k + delta_t]
                .iter()
                .map(|v| v.clamp(0.0, 1.0))
                .collect(),
            damage: if with_damage {
                Some(self.damage_window(k, delta_t)?)
            } else {
                None
            },
            target: self.stress_norm[k + delta_t],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub stress: Vec<f64>,
    pub damage: Option<Tensor>,
    pub target: f64,
}

/// All `T - delta_t` teacher-forced windows of a simulation, with damage.
pub fn make_training_windows(sim: &PreparedSim, delta_t: usize) -> Result<Vec<WindowSample>> {
    if delta_t == 0 || sim.len() < delta_t + 1 {
        return Err(Error::Data(format!(
            "sim {}: length {} too short for delta_t {delta_t}",
            sim.id,
            sim.len()
        )));
    }
    (0..sim.window_count(delta_t))
        .map(|k| sim.window(k, delta_t, true))
        .collect()
}

/// Fixed partition of record indices into a training pool and a test set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_pool: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_dataset(n_records: usize, n_train: usize, seed: u64) -> Result<DatasetSplit> {
    if n_train == 0 || n_train > n_records {
        return Err(Error::Data(format!(
            "cannot take {n_train} training records from {n_records}"
        )));
    }
    let mut idx: Vec<usize> = (0..n_records).collect();
    SplitMix64::derived(seed, "dataset-split").shuffle(&mut idx);
    let mut train_pool = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train_pool.sort_unstable();
    test.sort_unstable();
    Ok(DatasetSplit { train_pool, test })
}

/// Draws `n_val` validation members from `pool`; the rest train this epoch.
/// Returns `(train, validation)` with `train` in pool order.
pub fn resample_validation(
    pool: &[usize],
    n_val: usize,
    rng: &mut SplitMix64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_val >= pool.len() && n_val > 0 {
        return Err(Error::Data(format!(
            "{n_val} validation sims leave nothing to train on from a pool of {}",
            pool.len()
        )));
    }
    let mut picks: Vec<usize> = (0..pool.len()).collect();
    rng.shuffle(&mut picks);
    let mut chosen = vec![false; pool.len()];
    for &i in &picks[..n_val] {
        chosen[i] = true;
    }
    let train = pool
        .iter()
        .zip(&chosen)
        .filter(|(_, &c)| !c)
        .map(|(&p, _)| p)
        .collect();
    let mut val: Vec<usize> = pool
        .iter()
        .zip(&chosen)
        .filter(|(_, &c)| c)
        .map(|(&p, _)| p)
        .collect();
    val.sort_unstable();
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sim_with(len: usize) -> PreparedSim {
        let stats = NormalizationStats::new(0.0, len as f64).unwrap();
        PreparedSim::new(
            0,
            0,
            vec![DamageFrame::new(FRAME_ROWS, FRAME_COLS); len],
            (1..=len).map(|v| v as f64).collect(),
            &stats,
        )
        .unwrap()
    }

    #[test]
    fn downsample_cases() {
        let z = downsample_frame(&DamageFrame::new(192, 128)).unwrap();
        assert_eq!((z.rows(), z.cols(), z.count()), (24, 16, 0));
        let mut one = DamageFrame::new(192, 128);
        one.set(77, 101);
        let d = downsample_frame(&one).unwrap();
        assert_eq!(d.count(), 1);
        assert!(d.get(9, 12));
        assert!(downsample_frame(&DamageFrame::new(190, 128)).is_err());
    }

    #[test]
    fn normalize_cases() {
        let s = NormalizationStats::new(0.0, 10.0).unwrap();
        assert_eq!(s.normalize(5.0), 0.5);
        assert_eq!(s.normalize(0.0), 0.0);
        assert_eq!(s.normalize(10.0), 1.0);
        let s = NormalizationStats::new(-3.0, 7.5).unwrap();
        assert_eq!(s.normalize(-3.0), 0.0);
        assert_eq!(s.normalize(7.5), 1.0);
        assert!(NormalizationStats::new(2.0, 2.0).is_err());
        assert!(NormalizationStats::fit(&[vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn window_arithmetic() {
        let sim = sim_with(228);
        let w = make_training_windows(&sim, 10).unwrap();
        assert_eq!(w.len(), 218);
        assert_eq!(w[0].target, sim.stress_norm[10]);
        assert_eq!(w[0].stress, sim.stress_norm[..10].to_vec());
        assert_eq!(w[0].damage.as_ref().unwrap().shape(), &[24, 16, 10]);
        assert_eq!(make_training_windows(&sim_with(11), 10).unwrap().len(), 1);
        assert!(make_training_windows(&sim_with(10), 10).is_err());
    }

    #[test]
    fn damage_window_layout() {
        let mut sim = sim_with(5);
        sim.frames[3].set(2, 7);
        let t = sim.damage_window(1, 3).unwrap();
        assert_eq!(t.get(&[2, 7, 2]).unwrap(), 1.0);
        assert_eq!(t.sum(), 1.0);
        assert!(sim.damage_window(3, 3).is_err());
    }

    #[test]
    fn split_sizes() {
        let s = split_dataset(61, 55, 7).unwrap();
        assert_eq!((s.train_pool.len(), s.test.len()), (55, 6));
        assert!(s.test.iter().all(|t| !s.train_pool.contains(t)));
        assert_eq!(s, split_dataset(61, 55, 7).unwrap());
        assert!(split_dataset(50, 55, 7).is_err());

        let mut rng = SplitMix64::new(3);
        let (train, val) = resample_validation(&s.train_pool, 6, &mut rng).unwrap();
        assert_eq!((train.len(), val.len()), (49, 6));
        assert!(val.iter().all(|v| !train.contains(v)));
        assert!(resample_validation(&[1, 2], 2, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn normalization_round_trip(lo in -1e7f64..1e7, span in 1.0f64..1e8, u in -0.5f64..1.5) {
            let s = NormalizationStats::new(lo, lo + span).unwrap();
            let x = lo + u * span;
            let back = s.denormalize(s.normalize(x));
            prop_assert!((back - x).abs() <= 1e-9 * s.x_max.abs().max(s.x_min.abs()));
        }

        #[test]
        fn normalize_is_monotone(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let s = NormalizationStats::new(-2e6, 3e6).unwrap();
            if a < b {
                prop_assert!(s.normalize(a) < s.normalize(b));
            }
        }
    }
}
