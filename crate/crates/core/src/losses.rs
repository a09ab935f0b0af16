//! Training and evaluation losses.
//!
//! The dynamic loss blends squared error with squared relative error:
//! `L = mean( lambda*(p - x)^2 + (1 - lambda)*(p - x)^2 / x^2 )`, where
//! `lambda` drops from `lambda_high` to `lambda_low` after `switch_epoch`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominator floor in the relative term.
pub const RELATIVE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSchedule {
    pub lambda_high: f64,
    pub lambda_low: f64,
    /// Last epoch (1-based, inclusive) that uses `lambda_high`.
    pub switch_epoch: usize,
    pub total_epochs: usize,
    /// Floor applied to `|x|` in the relative term.
    #[serde(default = "default_floor")]
    pub relative_floor: f64,
}

fn default_floor() -> f64 {
    RELATIVE_FLOOR
}

impl LossSchedule {
    pub fn new(
        lambda_high: f64,
        lambda_low: f64,
        switch_epoch: usize,
        total_epochs: usize,
    ) -> Result<Self> {
        let s = LossSchedule {
            lambda_high,
            lambda_low,
            switch_epoch,
            total_epochs,
            relative_floor: RELATIVE_FLOOR,
        };
        s.validate()?;
        Ok(s)
    }

    /// 0.9 through epoch 600, then 0.1, over 1800 epochs.
    pub fn paper() -> Self {
        LossSchedule {
            lambda_high: 0.9,
            lambda_low: 0.1,
            switch_epoch: 600,
            total_epochs: 1800,
            relative_floor: RELATIVE_FLOOR,
        }
    }

    /// A constant-lambda schedule.
    pub fn constant(lambda: f64, total_epochs: usize) -> Result<Self> {
        Self::new(lambda, lambda, total_epochs, total_epochs)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.lambda_low)
            && (0.0..=1.0).contains(&self.lambda_high)
            && self.lambda_low <= self.lambda_high
            && self.switch_epoch >= 1
            && self.switch_epoch <= self.total_epochs
            && self.relative_floor > 0.0;
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid loss schedule {self:?}")));
        }
        Ok(())
    }
}

pub fn lambda_at(epoch: usize, schedule: &LossSchedule) -> Result<f64> {
    if epoch < 1 || epoch > schedule.total_epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} outside 1..={}",
            schedule.total_epochs
        )));
    }
    Ok(if epoch <= schedule.switch_epoch {
        schedule.lambda_high
    } else {
        schedule.lambda_low
    })
}

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "series lengths {} and {} (must be equal and non-empty)",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

pub fn mape(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if let Some(bad) = truth.iter().find(|&&x| x <= 0.0 || x.is_nan()) {
        return Err(Error::Domain(format!(
            "MAPE needs strictly positive truth, found {bad}"
        )));
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, x)| (p - x).abs() / x)
        .sum::<f64>()
        / n)
}

/// MAPE and its subgradient (`sign(p - x) / (n x)`, zero at equality).
pub fn mape_with_grad(pred: &[f64], truth: &[f64]) -> Result<(f64, Vec<f64>)> {
    let value = mape(pred, truth)?;
    let n = pred.len() as f64;
    let grad = pred
        .iter()
        .zip(truth)
        .map(|(p, x)| {
            let d = p - x;
            if d == 0.0 {
                0.0
            } else {
                d.signum() / (n * x)
            }
        })
        .collect();
    Ok((value, grad))
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let n = pred.len() as f64;
    Ok(pred.iter().zip(truth).map(|(p, x)| (p - x).powi(2)).sum::<f64>() / n)
}

pub fn mse_with_grad(pred: &[f64], truth: &[f64]) -> Result<(f64, Vec<f64>)> {
    let value = mse(pred, truth)?;
    let n = pred.len() as f64;
    let grad = pred.iter().zip(truth).map(|(p, x)| 2.0 * (p - x) / n).collect();
    Ok((value, grad))
}

/// Mean squared relative error, `mean(((p - x) / x)^2)`, with the same
/// denominator floor as the dynamic loss.
pub fn msre(pred: &[f64], truth: &[f64], floor: f64) -> Result<f64> {
    check_lengths(pred, truth)?;
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, x)| (p - x).powi(2) / x.max(floor).powi(2))
        .sum::<f64>()
        / n)
}

/// Dynamic loss for a fixed `lambda`, returning the value and its gradient
/// with respect to `pred`.
pub fn dynamic_loss_with_lambda(
    pred: &[f64],
    truth: &[f64],
    lambda: f64,
    floor: f64,
) -> Result<(f64, Vec<f64>)> {
    check_lengths(pred, truth)?;
    if let Some(bad) = truth.iter().find(|&&x| x < 0.0 || x.is_nan()) {
        return Err(Error::Domain(format!(
            "dynamic loss needs non-negative truth, found {bad}"
        )));
    }
    let n = pred.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &x) in pred.iter().zip(truth) {
        let d = p - x;
        let den = x.max(floor).powi(2);
        value += lambda * d.powi(2) + (1.0 - lambda) * (d.powi(2) / den);
        grad.push(2.0 / n * (lambda + (1.0 - lambda) / den) * d);
    }
    Ok((value / n, grad))
}

pub fn dynamic_loss(
    pred: &[f64],
    truth: &[f64],
    epoch: usize,
    schedule: &LossSchedule,
) -> Result<(f64, Vec<f64>)> {
    let lambda = lambda_at(epoch, schedule)?;
    dynamic_loss_with_lambda(pred, truth, lambda, schedule.relative_floor)
}

/// The training objective used for one model variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Mape,
    Dynamic(LossSchedule),
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Mape => "mape",
            LossKind::Dynamic(_) => "dynamic",
        }
    }

    /// The lambda in force at `epoch`; `None` for losses without a schedule.
    pub fn lambda(&self, epoch: usize) -> Result<Option<f64>> {
        match self {
            LossKind::Dynamic(s) => lambda_at(epoch, s).map(Some),
            _ => Ok(None),
        }
    }

    pub fn evaluate(&self, pred: &[f64], truth: &[f64], epoch: usize) -> Result<(f64, Vec<f64>)> {
        match self {
            LossKind::Mse => mse_with_grad(pred, truth),
            LossKind::Mape => {
                // Truth may touch 0 after normalization; floor it like the relative term.
                let floored: Vec<f64> = truth.iter().map(|x| x.max(RELATIVE_FLOOR)).collect();
                mape_with_grad(pred, &floored)
            }
            LossKind::Dynamic(s) => dynamic_loss(pred, truth, epoch, s),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradient;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((mape(&[1.1], &[1.0]).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(mape(&[1.0], &[0.0]), Err(Error::Domain(_))));
        assert!(matches!(mape(&[1.0], &[-1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[3.0], &[3.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5);
        let (p, x) = ([0.3, 1.7, -2.0], [0.1, 1.0, 4.0]);
        let c = 3.0;
        let scaled = mse(&p.map(|v| v * c), &x.map(|v| v * c)).unwrap();
        assert!((scaled - c * c * mse(&p, &x).unwrap()).abs() < 1e-12);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dynamic_loss_limits() {
        let p = [0.31, 0.52, 0.9];
        let x = [0.3, 0.6, 0.85];
        let (v1, _) = dynamic_loss_with_lambda(&p, &x, 1.0, RELATIVE_FLOOR).unwrap();
        assert_eq!(v1, mse(&p, &x).unwrap());
        let (v0, _) = dynamic_loss_with_lambda(&p, &x, 0.0, RELATIVE_FLOOR).unwrap();
        assert_eq!(v0, msre(&p, &x, RELATIVE_FLOOR).unwrap());
        let (z, g) = dynamic_loss_with_lambda(&x, &x, 0.4, RELATIVE_FLOOR).unwrap();
        assert_eq!(z, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn schedule_boundaries() {
        let s = LossSchedule::paper();
        assert_eq!(lambda_at(1, &s).unwrap(), 0.9);
        assert_eq!(lambda_at(600, &s).unwrap(), 0.9);
        assert_eq!(lambda_at(601, &s).unwrap(), 0.1);
        assert_eq!(lambda_at(1800, &s).unwrap(), 0.1);
        assert!(lambda_at(0, &s).is_err());
        assert!(lambda_at(1801, &s).is_err());
        assert!(LossSchedule::new(0.1, 0.9, 10, 20).is_err());
        assert!(LossSchedule::new(0.9, 0.1, 30, 20).is_err());
    }

    #[test]
    fn dynamic_gradient_matches_finite_differences() {
        let mut rng = SplitMix64::new(17);
        for _ in 0..20 {
            let n = 1 + rng.below(8);
            let x: Vec<f64> = (0..n).map(|_| rng.uniform(0.05, 1.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 1.0)).collect();
            let lambda = rng.next_f64();
            let (_, g) = dynamic_loss_with_lambda(&p, &x, lambda, RELATIVE_FLOOR).unwrap();
            let r = check_gradient(&g, &p, 1e-5, |q| {
                dynamic_loss_with_lambda(q, &x, lambda, RELATIVE_FLOOR).unwrap().0
            });
            assert!(r.max_rel_error < 1e-6, "{r:?}");
        }
    }

    proptest! {
        #[test]
        fn dynamic_is_convex_combination(
            pairs in proptest::collection::vec((0.0f64..1.0, 0.01f64..1.0), 1..20),
            lambda in 0.0f64..=1.0,
        ) {
            let (p, x): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = mse(&p, &x).unwrap();
            let b = msre(&p, &x, RELATIVE_FLOOR).unwrap();
            let (v, _) = dynamic_loss_with_lambda(&p, &x, lambda, RELATIVE_FLOOR).unwrap();
            let tol = 1e-12 * a.max(b).max(1.0);
            prop_assert!(v >= a.min(b) - tol && v <= a.max(b) + tol);
        }

        #[test]
        fn losses_non_negative_zero_iff_equal(
            pairs in proptest::collection::vec((0.0f64..2.0, 0.01f64..2.0), 1..20),
        ) {
            let (p, x): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = mape(&p, &x).unwrap();
            let s = mse(&p, &x).unwrap();
            prop_assert!(m >= 0.0 && s >= 0.0);
            prop_assert_eq!(s == 0.0, p == x);
            prop_assert_eq!(m == 0.0, p == x);
            prop_assert_eq!(mape(&x, &x).unwrap(), 0.0);
        }
    }
}
