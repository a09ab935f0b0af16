//! Standard LSTM cell and unidirectional sequence runner.
//!
//! Gate pre-activations are stacked as `[i; f; g; o]` in a `4H` vector:
//! `z = W_x x + W_h h_prev + b`, with sigmoid on `i, f, o` and tanh on `g`.
//! `c = f*c_prev + i*g`, `h = o*tanh(c)`.

use super::sigmoid;
use crate::error::{Error, Result};
use crate::tensor::{matvec, matvec_acc, matvec_t_acc, outer_acc, Tensor};

/// Borrowed view of one cell's parameters.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    /// `4H x I`
    pub w_x: &'a Tensor,
    /// `4H x H`
    pub w_h: &'a Tensor,
    /// `4H`
    pub b: &'a Tensor,
}

impl LstmWeights<'_> {
    pub fn hidden(&self) -> usize {
        self.w_h.shape()[1]
    }

    pub fn input(&self) -> usize {
        self.w_x.shape()[1]
    }

    fn validate(&self) -> Result<()> {
        let h = self.w_h.shape().get(1).copied().unwrap_or(0);
        let ok = self.w_x.rank() == 2
            && self.w_h.rank() == 2
            && self.w_h.shape() == [4 * h, h]
            && self.w_x.shape()[0] == 4 * h
            && self.b.shape() == [4 * h];
        if !ok {
            return Err(Error::ShapeMismatch(format!(
                "lstm weights w_x {:?}, w_h {:?}, b {:?}",
                self.w_x.shape(),
                self.w_h.shape(),
                self.b.shape()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub b: Tensor,
}

impl LstmGrads {
    pub fn zeros_like(p: &LstmWeights<'_>) -> Self {
        LstmGrads {
            w_x: Tensor::zeros(p.w_x.shape()),
            w_h: Tensor::zeros(p.w_h.shape()),
            b: Tensor::zeros(p.b.shape()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LstmCellCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Post-activation gates `[i; f; g; o]`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// One cell step, returning `(h_t, c_t)`.
pub fn lstm_cell_step(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmWeights<'_>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (h, c, _) = lstm_cell_step_cached(x, h_prev, c_prev, p)?;
    Ok((h, c))
}

pub fn lstm_cell_step_cached(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmWeights<'_>,
) -> Result<(Vec<f64>, Vec<f64>, LstmCellCache)> {
    p.validate()?;
    let hd = p.hidden();
    if x.len() != p.input() || h_prev.len() != hd || c_prev.len() != hd {
        return Err(Error::ShapeMismatch(format!(
            "lstm step: x {}, h {}, c {} for input {} hidden {hd}",
            x.len(),
            h_prev.len(),
            c_prev.len(),
            p.input()
        )));
    }
    let mut z = p.b.data().to_vec();
    matvec_acc(p.w_x.data(), 4 * hd, x.len(), x, &mut z);
    matvec_acc(p.w_h.data(), 4 * hd, hd, h_prev, &mut z);
    for (k, v) in z.iter_mut().enumerate() {
        *v = if (2 * hd..3 * hd).contains(&k) {
            v.tanh()
        } else {
            sigmoid(*v)
        };
    }
    let mut c = vec![0.0; hd];
    let mut tanh_c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    for j in 0..hd {
        let (i, f, g, o) = (z[j], z[hd + j], z[2 * hd + j], z[3 * hd + j]);
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h[j] = o * tanh_c[j];
    }
    let cache = LstmCellCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates: z,
        tanh_c,
    };
    Ok((h, c, cache))
}

/// Back-propagates `dh`, `dc` (gradients w.r.t. this step's `h_t`, `c_t`)
/// through one step. Accumulates parameter gradients into `grads` and returns
/// `(dx, dh_prev, dc_prev)`.
pub fn lstm_cell_backward(
    cache: LstmCellCache,
    p: &LstmWeights<'_>,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmGrads,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let hd = p.hidden();
    if dh.len() != hd || dc.len() != hd {
        return Err(Error::ShapeMismatch("lstm backward: state gradient size".into()));
    }
    let zg = &cache.gates;
    let mut dz = vec![0.0; 4 * hd];
    let mut dc_prev = vec![0.0; hd];
    for j in 0..hd {
        let (i, f, g, o) = (zg[j], zg[hd + j], zg[2 * hd + j], zg[3 * hd + j]);
        let tc = cache.tanh_c[j];
        let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
        dz[j] = dct * g * i * (1.0 - i);
        dz[hd + j] = dct * cache.c_prev[j] * f * (1.0 - f);
        dz[2 * hd + j] = dct * i * (1.0 - g * g);
        dz[3 * hd + j] = dh[j] * tc * o * (1.0 - o);
        dc_prev[j] = dct * f;
    }
    let ni = cache.x.len();
    outer_acc(grads.w_x.data_mut(), 4 * hd, ni, &dz, &cache.x);
    outer_acc(grads.w_h.data_mut(), 4 * hd, hd, &dz, &cache.h_prev);
    for (b, d) in grads.b.data_mut().iter_mut().zip(&dz) {
        *b += d;
    }
    let mut dx = vec![0.0; ni];
    matvec_t_acc(p.w_x.data(), 4 * hd, ni, &dz, &mut dx);
    let mut dh_prev = vec![0.0; hd];
    matvec_t_acc(p.w_h.data(), 4 * hd, hd, &dz, &mut dh_prev);
    Ok((dx, dh_prev, dc_prev))
}

/// Per-step caches of a sequence run, in processing order.
#[derive(Debug, Clone)]
pub struct LstmSequenceCache {
    steps: Vec<LstmCellCache>,
    reverse: bool,
}

/// Runs the cell over the columns of `xs` (`I x T`) from zero state.
/// With `reverse` the scan goes from `T-1` down to `0`; hidden states are
/// always returned indexed by input position.
pub fn lstm_sequence_forward(
    xs: &Tensor,
    p: &LstmWeights<'_>,
    reverse: bool,
) -> Result<(Vec<Vec<f64>>, LstmSequenceCache)> {
    if xs.rank() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "sequence input must be I x T, got {:?}",
            xs.shape()
        )));
    }
    let (ni, t) = (xs.shape()[0], xs.shape()[1]);
    let hd = p.hidden();
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    let mut hs = vec![Vec::new(); t];
    let mut steps = Vec::with_capacity(t);
    let mut x = vec![0.0; ni];
    for k in 0..t {
        let pos = if reverse { t - 1 - k } else { k };
        for (r, xv) in x.iter_mut().enumerate() {
            *xv = xs.data()[r * t + pos];
        }
        let (hn, cn, cache) = lstm_cell_step_cached(&x, &h, &c, p)?;
        hs[pos] = hn.clone();
        steps.push(cache);
        h = hn;
        c = cn;
    }
    Ok((hs, LstmSequenceCache { steps, reverse }))
}

/// `dhs[pos]` is the loss gradient w.r.t. the hidden state at input position
/// `pos`. Returns the input gradient (`I x T`).
pub fn lstm_sequence_backward(
    cache: LstmSequenceCache,
    p: &LstmWeights<'_>,
    dhs: &[Vec<f64>],
    grads: &mut LstmGrads,
) -> Result<Tensor> {
    let t = cache.steps.len();
    if dhs.len() != t {
        return Err(Error::ShapeMismatch(format!(
            "{} hidden-state gradients for a length-{t} sequence",
            dhs.len()
        )));
    }
    let hd = p.hidden();
    let ni = p.input();
    let mut gx = vec![0.0; ni * t];
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let reverse = cache.reverse;
    for (k, step) in cache.steps.into_iter().enumerate().rev() {
        let pos = if reverse { t - 1 - k } else { k };
        let dh: Vec<f64> = dhs[pos].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let (dx, dhp, dcp) = lstm_cell_backward(step, p, &dh, &dc_next, grads)?;
        for (r, v) in dx.into_iter().enumerate() {
            gx[r * t + pos] = v;
        }
        dh_next = dhp;
        dc_next = dcp;
    }
    Tensor::from_vec(&[ni, t], gx)
}

/// `y = W x` helper shared with the Bi-LSTM head.
pub(crate) fn project(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let (r, c) = (w.shape()[0], w.shape()[1]);
    let mut y = vec![0.0; r];
    matvec(w.data(), r, c, x, &mut y);
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_give_zero_hidden() {
        let (w_x, w_h, b) = (
            Tensor::zeros(&[8, 3]),
            Tensor::zeros(&[8, 2]),
            Tensor::zeros(&[8]),
        );
        let p = LstmWeights {
            w_x: &w_x,
            w_h: &w_h,
            b: &b,
        };
        let (h, _) = lstm_cell_step(&[1.0, -2.0, 3.0], &[0.5, 0.5], &[0.0, 0.0], &p).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let hd = 2;
        let w_x = Tensor::zeros(&[8, 1]);
        let w_h = Tensor::zeros(&[8, hd]);
        let mut b = Tensor::zeros(&[8]);
        b.data_mut()[hd..2 * hd].iter_mut().for_each(|v| *v = 50.0);
        let p = LstmWeights {
            w_x: &w_x,
            w_h: &w_h,
            b: &b,
        };
        let c_prev = [0.7, -1.3];
        let (_, c) = lstm_cell_step(&[4.0], &[0.2, 0.1], &c_prev, &p).unwrap();
        for (a, b) in c.iter().zip(&c_prev) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let (w_x, w_h, b) = (
            Tensor::zeros(&[8, 3]),
            Tensor::zeros(&[8, 2]),
            Tensor::zeros(&[8]),
        );
        let p = LstmWeights {
            w_x: &w_x,
            w_h: &w_h,
            b: &b,
        };
        assert!(lstm_cell_step(&[1.0], &[0.0, 0.0], &[0.0, 0.0], &p).is_err());
        let bad_b = Tensor::zeros(&[7]);
        let q = LstmWeights { b: &bad_b, ..p };
        assert!(lstm_cell_step(&[1.0, 2.0, 3.0], &[0.0, 0.0], &[0.0, 0.0], &q).is_err());
    }
}
