//! Bidirectional LSTM with a per-step output head.
//!
//! A forward LSTM scans the sequence left to right and a second LSTM scans it
//! right to left. At every position the two hidden states are combined as
//! `y_t = act(W_f h_fwd_t + W_b h_bwd_t + b)`.

use super::lstm::{
    lstm_sequence_backward, lstm_sequence_forward, project, LstmGrads, LstmSequenceCache,
    LstmWeights,
};
use super::Activation;
use crate::error::{Error, Result};
use crate::tensor::{matvec_t_acc, outer_acc, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct BiLstmWeights<'a> {
    pub fwd: LstmWeights<'a>,
    pub bwd: LstmWeights<'a>,
    /// `O x H`
    pub head_fwd: &'a Tensor,
    /// `O x H`
    pub head_bwd: &'a Tensor,
    /// `O`
    pub head_b: &'a Tensor,
    pub activation: Activation,
}

impl BiLstmWeights<'_> {
    pub fn output_dim(&self) -> usize {
        self.head_b.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmGrads {
    pub fwd: LstmGrads,
    pub bwd: LstmGrads,
    pub head_fwd: Tensor,
    pub head_bwd: Tensor,
    pub head_b: Tensor,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: LstmSequenceCache,
    bwd: LstmSequenceCache,
    h_fwd: Vec<Vec<f64>>,
    h_bwd: Vec<Vec<f64>>,
    /// Post-activation outputs, `O x T` row-major.
    out: Vec<f64>,
    steps: usize,
}

/// `xs` is `I x T`; the result is `O x T`.
pub fn bilstm_forward(xs: &Tensor, p: &BiLstmWeights<'_>) -> Result<(Tensor, BiLstmCache)> {
    if xs.rank() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "bilstm input must be I x T, got {:?}",
            xs.shape()
        )));
    }
    let t = xs.shape()[1];
    if t == 0 {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    let o = p.output_dim();
    let hd = p.fwd.hidden();
    if p.head_fwd.shape() != [o, hd] || p.head_bwd.shape() != [o, p.bwd.hidden()] {
        return Err(Error::ShapeMismatch(format!(
            "bilstm head {:?}/{:?} for output {o}, hidden {hd}",
            p.head_fwd.shape(),
            p.head_bwd.shape()
        )));
    }
    let (h_fwd, fwd) = lstm_sequence_forward(xs, &p.fwd, false)?;
    let (h_bwd, bwd) = lstm_sequence_forward(xs, &p.bwd, true)?;
    let mut out = vec![0.0; o * t];
    for s in 0..t {
        let a = project(p.head_fwd, &h_fwd[s]);
        let b = project(p.head_bwd, &h_bwd[s]);
        for r in 0..o {
            out[r * t + s] = p.activation.apply(a[r] + b[r] + p.head_b.data()[r]);
        }
    }
    let y = Tensor::from_vec(&[o, t], out.clone())?;
    Ok((
        y,
        BiLstmCache {
            fwd,
            bwd,
            h_fwd,
            h_bwd,
            out,
            steps: t,
        },
    ))
}

/// Returns `(grad_input, grads)` for an upstream gradient `O x T`.
pub fn bilstm_backward(
    cache: BiLstmCache,
    p: &BiLstmWeights<'_>,
    grad_out: &Tensor,
) -> Result<(Tensor, BiLstmGrads)> {
    let t = cache.steps;
    let o = p.output_dim();
    if grad_out.shape() != [o, t] {
        return Err(Error::ShapeMismatch(format!(
            "grad_out {:?}, expected [{o}, {t}]",
            grad_out.shape()
        )));
    }
    let hf = p.fwd.hidden();
    let hb = p.bwd.hidden();
    let mut head_fwd = Tensor::zeros(p.head_fwd.shape());
    let mut head_bwd = Tensor::zeros(p.head_bwd.shape());
    let mut head_b = Tensor::zeros(p.head_b.shape());
    let mut dh_fwd = vec![vec![0.0; hf]; t];
    let mut dh_bwd = vec![vec![0.0; hb]; t];
    let g = grad_out.data();
    let mut dz = vec![0.0; o];
    for s in 0..t {
        for r in 0..o {
            dz[r] = g[r * t + s] * p.activation.derivative_from_output(cache.out[r * t + s]);
        }
        outer_acc(head_fwd.data_mut(), o, hf, &dz, &cache.h_fwd[s]);
        outer_acc(head_bwd.data_mut(), o, hb, &dz, &cache.h_bwd[s]);
        for (b, d) in head_b.data_mut().iter_mut().zip(&dz) {
            *b += d;
        }
        matvec_t_acc(p.head_fwd.data(), o, hf, &dz, &mut dh_fwd[s]);
        matvec_t_acc(p.head_bwd.data(), o, hb, &dz, &mut dh_bwd[s]);
    }
    let mut gf = LstmGrads::zeros_like(&p.fwd);
    let mut gb = LstmGrads::zeros_like(&p.bwd);
    let gx_f = lstm_sequence_backward(cache.fwd, &p.fwd, &dh_fwd, &mut gf)?;
    let gx_b = lstm_sequence_backward(cache.bwd, &p.bwd, &dh_bwd, &mut gb)?;
    let gx = gx_f.add(&gx_b)?;
    Ok((
        gx,
        BiLstmGrads {
            fwd: gf,
            bwd: gb,
            head_fwd,
            head_bwd,
            head_b,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    struct Owned {
        tensors: Vec<Tensor>,
    }

    impl Owned {
        fn random(ni: usize, hd: usize, o: usize, rng: &mut SplitMix64) -> Self {
            let mut r = |s: &[usize]| {
                let n = s.iter().product();
                Tensor::from_vec(s, (0..n).map(|_| rng.uniform(-0.5, 0.5)).collect()).unwrap()
            };
            Owned {
                tensors: vec![
                    r(&[4 * hd, ni]),
                    r(&[4 * hd, hd]),
                    r(&[4 * hd]),
                    r(&[4 * hd, ni]),
                    r(&[4 * hd, hd]),
                    r(&[4 * hd]),
                    r(&[o, hd]),
                    r(&[o, hd]),
                    r(&[o]),
                ],
            }
        }

        fn weights(&self, swap: bool, activation: Activation) -> BiLstmWeights<'_> {
            let t = &self.tensors;
            let a = LstmWeights {
                w_x: &t[0],
                w_h: &t[1],
                b: &t[2],
            };
            let b = LstmWeights {
                w_x: &t[3],
                w_h: &t[4],
                b: &t[5],
            };
            let (fwd, bwd, hf, hb) = if swap {
                (b, a, &t[7], &t[6])
            } else {
                (a, b, &t[6], &t[7])
            };
            BiLstmWeights {
                fwd,
                bwd,
                head_fwd: hf,
                head_bwd: hb,
                head_b: &t[8],
                activation,
            }
        }
    }

    #[test]
    fn single_step_is_well_defined() {
        let mut rng = SplitMix64::new(11);
        let w = Owned::random(3, 4, 2, &mut rng);
        let x = Tensor::from_vec(&[3, 1], vec![0.1, -0.2, 0.3]).unwrap();
        let (y, _) = bilstm_forward(&x, &w.weights(false, Activation::Sigmoid)).unwrap();
        assert_eq!(y.shape(), &[2, 1]);
        assert!(y.all_finite());
    }

    #[test]
    fn zero_everything_yields_activation_of_bias() {
        let mut w = Owned::random(2, 3, 2, &mut SplitMix64::new(1));
        for t in &mut w.tensors {
            t.fill(0.0);
        }
        w.tensors[8] = Tensor::from_vec(&[2], vec![0.4, -1.0]).unwrap();
        let (y, _) =
            bilstm_forward(&Tensor::zeros(&[2, 5]), &w.weights(false, Activation::Sigmoid)).unwrap();
        for s in 0..5 {
            assert_eq!(y.get(&[0, s]).unwrap(), super::super::sigmoid(0.4));
            assert_eq!(y.get(&[1, s]).unwrap(), super::super::sigmoid(-1.0));
        }
    }

    #[test]
    fn time_reversal_symmetry() {
        let mut rng = SplitMix64::new(21);
        let w = Owned::random(3, 4, 2, &mut rng);
        let t = 6;
        let x = Tensor::from_vec(&[3, t], (0..3 * t).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .unwrap();
        let mut xr = Tensor::zeros(&[3, t]);
        for r in 0..3 {
            for s in 0..t {
                xr.set(&[r, s], x.get(&[r, t - 1 - s]).unwrap()).unwrap();
            }
        }
        let (y, _) = bilstm_forward(&x, &w.weights(false, Activation::Identity)).unwrap();
        let (yr, _) = bilstm_forward(&xr, &w.weights(true, Activation::Identity)).unwrap();
        for r in 0..2 {
            for s in 0..t {
                let a = y.get(&[r, s]).unwrap();
                let b = yr.get(&[r, t - 1 - s]).unwrap();
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn empty_sequence_rejected() {
        let w = Owned::random(1, 2, 1, &mut SplitMix64::new(2));
        let x = Tensor::from_vec(&[1, 1], vec![0.0]).unwrap();
        assert!(bilstm_forward(&x, &w.weights(false, Activation::Identity)).is_ok());
        // A rank-1 input has no time axis.
        assert!(bilstm_forward(&Tensor::zeros(&[1]), &w.weights(false, Activation::Identity)).is_err());
    }
}
