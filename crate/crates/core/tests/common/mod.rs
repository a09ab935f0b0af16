//! Finite-difference checks shared by the gradient tests and the acceptance
//! suite. Each check draws random inputs, contracts the output with a random
//! upstream tensor to get a scalar, and returns the worst relative error
//! between the analytic and central-difference gradients.

#![allow(dead_code)]

pub mod oracles;

use stressnet::gradcheck::{check_gradient, GradCheckReport};
use stressnet::layers::*;
use stressnet::model::{Channel, ConvBlock, StressNet, StressNetConfig, Surrogate};
use stressnet::rng::SplitMix64;
use stressnet::Tensor;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const SEEDS: std::ops::Range<u64> = 0..10;

pub fn random(rng: &mut SplitMix64, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.uniform(-scale, scale)).collect()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn worst(reports: impl IntoIterator<Item = GradCheckReport>) -> f64 {
    reports
        .into_iter()
        .map(|r| r.max_rel_error)
        .fold(0.0, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) })
}

pub fn ti_conv(seed: u64) -> f64 {
    let mut rng = SplitMix64::derived(seed, "check-ti-conv");
    let x = random(&mut rng, &[5, 5, 3], 1.0);
    let k = random(&mut rng, &[2, 2, 3], 1.0);
    let r = random(&mut rng, &[4, 4, 3], 1.0);
    let (_, cache) = ti_conv_forward(&x, &k).unwrap();
    let (gx, gk) = ti_conv_backward(cache, &r).unwrap();
    let fx = |v: &[f64]| {
        let xt = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
        dot(ti_conv_forward(&xt, &k).unwrap().0.data(), r.data())
    };
    let fk = |v: &[f64]| {
        let kt = Tensor::from_vec(k.shape(), v.to_vec()).unwrap();
        dot(ti_conv_forward(&x, &kt).unwrap().0.data(), r.data())
    };
    worst([
        check_gradient(gx.data(), x.data(), STEP, fx),
        check_gradient(gk.data(), k.data(), STEP, fk),
    ])
}

pub fn max_pool(seed: u64) -> f64 {
    let mut rng = SplitMix64::derived(seed, "check-max-pool");
    let x = random(&mut rng, &[6, 4, 3], 1.0);
    let r = random(&mut rng, &[3, 2, 3], 1.0);
    let (_, cache) = max_pool_forward(&x, 2).unwrap();
    let gx = max_pool_backward(cache, &r).unwrap();
    let f = |v: &[f64]| {
        let xt = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
        dot(max_pool_forward(&xt, 2).unwrap().0.data(), r.data())
    };
    worst([check_gradient(gx.data(), x.data(), STEP, f)])
}

pub fn avg_pool(seed: u64) -> f64 {
    let mut rng = SplitMix64::derived(seed, "check-avg-pool");
    let x = random(&mut rng, &[6, 4, 3], 1.0);
    let r = random(&mut rng, &[3, 2, 3], 1.0);
    let (_, cache) = avg_pool_forward(&x, 2).unwrap();
    let gx = avg_pool_backward(cache, &r).unwrap();
    let f = |v: &[f64]| {
        let xt = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
        dot(avg_pool_forward(&xt, 2).unwrap().0.data(), r.data())
    };
    worst([check_gradient(gx.data(), x.data(), STEP, f)])
}

pub fn fc(seed: u64) -> f64 {
    let mut rng = SplitMix64::derived(seed, "check-fc");
    let x = random(&mut rng, &[3, 2, 4], 1.0);
    let w = random(&mut rng, &[5, 6], 1.0);
    let r = random(&mut rng, &[5, 4], 1.0);
    let (_, cache) = fc_forward(&x, &w).unwrap();
    let (gx, gw) = fc_backward(cache, &r).unwrap();
    let fx = |v: &[f64]| {
        let xt = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
        dot(fc_forward(&xt, &w).unwrap().0.data(), r.data())
    };
    let fw = |v: &[f64]| {
        let wt = Tensor::from_vec(w.shape(), v.to_vec()).unwrap();
        dot(fc_forward(&x, &wt).unwrap().0.data(), r.data())
    };
    worst([
        check_gradient(gx.data(), x.data(), STEP, fx),
        check_gradient(gw.data(), w.data(), STEP, fw),
    ])
}

struct CellParams {
    w_x: Tensor,
    w_h: Tensor,
    b: Tensor,
}

impl CellParams {
    fn random(rng: &mut SplitMix64, input: usize, hidden: usize) -> Self {
        CellParams {
            w_x: random(rng, &[4 * hidden, input], 0.8),
            w_h: random(rng, &[4 * hidden, hidden], 0.8),
            b: random(rng, &[4 * hidden], 0.5),
        }
    }

    fn weights(&self) -> LstmWeights<'_> {
        LstmWeights {
            w_x: &self.w_x,
            w_h: &self.w_h,
            b: &self.b,
        }
    }
}

pub fn lstm_cell(seed: u64) -> f64 {
    let (ni, hd) = (3, 4);
    let mut rng = SplitMix64::derived(seed, "check-lstm-cell");
    let p = CellParams::random(&mut rng, ni, hd);
    let x = random(&mut rng, &[ni], 1.0);
    let h0 = random(&mut rng, &[hd], 1.0);
    let c0 = random(&mut rng, &[hd], 1.0);
    let rh = random(&mut rng, &[hd], 1.0);
    let rc = random(&mut rng, &[hd], 1.0);
    let scalar = |x: &[f64], h: &[f64], c: &[f64], p: &LstmWeights<'_>| {
        let (hn, cn) = lstm_cell_step(x, h, c, p).unwrap();
        dot(&hn, rh.data()) + dot(&cn, rc.data())
    };
    let (_, _, cache) = lstm_cell_step_cached(x.data(), h0.data(), c0.data(), &p.weights()).unwrap();
    let mut grads = LstmGrads::zeros_like(&p.weights());
    let (dx, dh, dc) =
        lstm_cell_backward(cache, &p.weights(), rh.data(), rc.data(), &mut grads).unwrap();
    let w = p.weights();
    let mut reports = vec![
        check_gradient(&dx, x.data(), STEP, |v| scalar(v, h0.data(), c0.data(), &w)),
        check_gradient(&dh, h0.data(), STEP, |v| scalar(x.data(), v, c0.data(), &w)),
        check_gradient(&dc, c0.data(), STEP, |v| scalar(x.data(), h0.data(), v, &w)),
    ];
    reports.push(check_gradient(grads.w_x.data(), p.w_x.data(), STEP, |v| {
        let t = Tensor::from_vec(p.w_x.shape(), v.to_vec()).unwrap();
        scalar(x.data(), h0.data(), c0.data(), &LstmWeights { w_x: &t, ..w })
    }));
    reports.push(check_gradient(grads.w_h.data(), p.w_h.data(), STEP, |v| {
        let t = Tensor::from_vec(p.w_h.shape(), v.to_vec()).unwrap();
        scalar(x.data(), h0.data(), c0.data(), &LstmWeights { w_h: &t, ..w })
    }));
    reports.push(check_gradient(grads.b.data(), p.b.data(), STEP, |v| {
        let t = Tensor::from_vec(p.b.shape(), v.to_vec()).unwrap();
        scalar(x.data(), h0.data(), c0.data(), &LstmWeights { b: &t, ..w })
    }));
    worst(reports)
}

pub fn bilstm(seed: u64) -> f64 {
    let (ni, hd, o, t) = (2, 3, 4, 5);
    let mut rng = SplitMix64::derived(seed, "check-bilstm");
    let fwd = CellParams::random(&mut rng, ni, hd);
    let bwd = CellParams::random(&mut rng, ni, hd);
    let head_fwd = random(&mut rng, &[o, hd], 0.8);
    let head_bwd = random(&mut rng, &[o, hd], 0.8);
    let head_b = random(&mut rng, &[o], 0.5);
    let xs = random(&mut rng, &[ni, t], 1.0);
    let r = random(&mut rng, &[o, t], 1.0);
    let mut reports = Vec::new();
    for activation in [Activation::Identity, Activation::Sigmoid] {
        // Flattened parameter vector: every tensor in a fixed order.
        let tensors = [
            &xs, &fwd.w_x, &fwd.w_h, &fwd.b, &bwd.w_x, &bwd.w_h, &bwd.b, &head_fwd, &head_bwd,
            &head_b,
        ];
        let flat: Vec<f64> = tensors.iter().flat_map(|t| t.data().to_vec()).collect();
        let unflatten = |v: &[f64]| -> Vec<Tensor> {
            let mut off = 0;
            tensors
                .iter()
                .map(|t| {
                    let n = t.len();
                    off += n;
                    Tensor::from_vec(t.shape(), v[off - n..off].to_vec()).unwrap()
                })
                .collect()
        };
        let run = |ts: &[Tensor]| {
            let p = BiLstmWeights {
                fwd: LstmWeights { w_x: &ts[1], w_h: &ts[2], b: &ts[3] },
                bwd: LstmWeights { w_x: &ts[4], w_h: &ts[5], b: &ts[6] },
                head_fwd: &ts[7],
                head_bwd: &ts[8],
                head_b: &ts[9],
                activation,
            };
            let (y, cache) = bilstm_forward(&ts[0], &p).unwrap();
            (dot(y.data(), r.data()), cache)
        };
        let ts = unflatten(&flat);
        let (_, cache) = run(&ts);
        let p = BiLstmWeights {
            fwd: LstmWeights { w_x: &ts[1], w_h: &ts[2], b: &ts[3] },
            bwd: LstmWeights { w_x: &ts[4], w_h: &ts[5], b: &ts[6] },
            head_fwd: &ts[7],
            head_bwd: &ts[8],
            head_b: &ts[9],
            activation,
        };
        let (gx, g) = bilstm_backward(cache, &p, &r).unwrap();
        let analytic: Vec<f64> = [
            &gx, &g.fwd.w_x, &g.fwd.w_h, &g.fwd.b, &g.bwd.w_x, &g.bwd.w_h, &g.bwd.b, &g.head_fwd,
            &g.head_bwd, &g.head_b,
        ]
        .iter()
        .flat_map(|t| t.data().to_vec())
        .collect();
        reports.push(check_gradient(&analytic, &flat, STEP, |v| run(&unflatten(v)).0));
    }
    worst(reports)
}

pub fn toy_config() -> StressNetConfig {
    StressNetConfig {
        delta_t: 3,
        feature_dim: 4,
        conv_blocks: vec![ConvBlock { kernel: 3, pool: 2 }],
        hidden: 3,
        frame_rows: 6,
        frame_cols: 4,
    }
}

/// Whole-model check on a 6x4-frame, delta_t = 3, D = 4 configuration, with
/// a squared-error loss against a random target.
pub fn stressnet(seed: u64) -> f64 {
    let cfg = toy_config();
    let mut rng = SplitMix64::derived(seed, "check-stressnet");
    let mut model = StressNet::new(cfg.clone(), Channel::Yy, seed).unwrap();
    // Random biases too, so no gate sits at its symmetric zero point.
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        for v in model.params_mut().value_mut(id).data_mut() {
            *v += rng.uniform(-0.3, 0.3);
        }
    }
    let stress: Vec<f64> = (0..cfg.delta_t).map(|_| rng.next_f64()).collect();
    let damage = Tensor::from_vec(
        &[cfg.frame_rows, cfg.frame_cols, cfg.delta_t],
        (0..cfg.frame_rows * cfg.frame_cols * cfg.delta_t)
            .map(|_| if rng.bernoulli(0.4) { 1.0 } else { 0.0 })
            .collect(),
    )
    .unwrap();
    let target = rng.next_f64();

    let cache = model.forward(&stress, &damage).unwrap();
    let d_pred = 2.0 * (cache.prediction() - target);
    let grads = model.backward(cache, d_pred).unwrap();

    let ids: Vec<_> = model.params().ids().collect();
    let mut reports = Vec::new();
    for id in ids {
        let base = model.params().value(id).data().to_vec();
        let mut probe = model.clone();
        reports.push(check_gradient(grads.get(id).data(), &base, STEP, |v| {
            probe.params_mut().value_mut(id).data_mut().copy_from_slice(v);
            let p = probe.predict(&stress, Some(&damage)).unwrap();
            (p - target).powi(2)
        }));
    }
    worst(reports)
}

/// Perturbs one input time slice of a random 8x8x4 volume and reports whether
/// any other output slice changed at all.
pub fn ti_conv_leaks(trial: u64) -> bool {
    let mut rng = SplitMix64::derived(trial, "ti-independence");
    let x = random(&mut rng, &[8, 8, 4], 1.0);
    let k = random(&mut rng, &[3, 3, 4], 1.0);
    let t = rng.below(4);
    let mut x2 = x.clone();
    for i in 0..8 {
        for j in 0..8 {
            let v = x2.get(&[i, j, t]).unwrap() + rng.uniform(-1.0, 1.0);
            x2.set(&[i, j, t], v).unwrap();
        }
    }
    let (a, _) = ti_conv_forward(&x, &k).unwrap();
    let (b, _) = ti_conv_forward(&x2, &k).unwrap();
    let mut changed_target = false;
    for i in 0..6 {
        for j in 0..6 {
            for s in 0..4 {
                let (u, v) = (a.get(&[i, j, s]).unwrap(), b.get(&[i, j, s]).unwrap());
                if s == t {
                    changed_target |= u != v;
                } else if u.to_bits() != v.to_bits() {
                    return true;
                }
            }
        }
    }
    !changed_target
}
