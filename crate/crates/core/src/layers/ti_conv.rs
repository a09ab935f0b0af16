//! Temporal-independent convolution.
//!
//! Input `H x W x T` and kernel `d x d x T`: time slice `t` of the output is a
//! valid (unpadded) correlation of input slice `t` with kernel slice `t`
//! only, so time steps never mix.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct TiConvCache {
    input: Tensor,
    kernel: Tensor,
}

fn dims(x: &Tensor, k: &Tensor) -> Result<(usize, usize, usize, usize)> {
    if x.rank() != 3 || k.rank() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "ti_conv expects rank-3 input and kernel, got {:?} and {:?}",
            x.shape(),
            k.shape()
        )));
    }
    let (h, w, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let d = k.shape()[0];
    if k.shape()[1] != d {
        return Err(Error::ShapeMismatch(format!(
            "kernel must be square, got {:?}",
            k.shape()
        )));
    }
    if k.shape()[2] != t {
        return Err(Error::ShapeMismatch(format!(
            "kernel depth {} != input time extent {t}",
            k.shape()[2]
        )));
    }
    if d > h || d > w {
        return Err(Error::ShapeMismatch(format!(
            "kernel {d}x{d} larger than input {h}x{w}"
        )));
    }
    Ok((h, w, t, d))
}

pub fn ti_conv_forward(x: &Tensor, k: &Tensor) -> Result<(Tensor, TiConvCache)> {
    let (h, w, t, d) = dims(x, k)?;
    let (ho, wo) = (h - d + 1, w - d + 1);
    let xin = x.data();
    let kd = k.data();
    let mut out = vec![0.0; ho * wo * t];
    for oy in 0..ho {
        for ox in 0..wo {
            let o = &mut out[(oy * wo + ox) * t..(oy * wo + ox + 1) * t];
            for a in 0..d {
                for b in 0..d {
                    let kk = &kd[(a * d + b) * t..(a * d + b + 1) * t];
                    let base = ((oy + a) * w + ox + b) * t;
                    let xi = &xin[base..base + t];
                    for ((ov, &kv), &xv) in o.iter_mut().zip(kk).zip(xi) {
                        *ov += kv * xv;
                    }
                }
            }
        }
    }
    let out = Tensor::from_vec(&[ho, wo, t], out)?;
    Ok((
        out,
        TiConvCache {
            input: x.clone(),
            kernel: k.clone(),
        },
    ))
}

/// Returns `(grad_input, grad_kernel)`.
pub fn ti_conv_backward(cache: TiConvCache, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
    let (h, w, t, d) = dims(&cache.input, &cache.kernel)?;
    let (ho, wo) = (h - d + 1, w - d + 1);
    if grad_out.shape() != [ho, wo, t] {
        return Err(Error::ShapeMismatch(format!(
            "grad_out {:?}, expected [{ho}, {wo}, {t}]",
            grad_out.shape()
        )));
    }
    let xin = cache.input.data();
    let kd = cache.kernel.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; h * w * t];
    let mut gk = vec![0.0; d * d * t];
    for oy in 0..ho {
        for ox in 0..wo {
            let go = &g[(oy * wo + ox) * t..(oy * wo + ox + 1) * t];
            if go.iter().all(|&v| v == 0.0) {
                continue;
            }
            for a in 0..d {
                for b in 0..d {
                    let koff = (a * d + b) * t;
                    let base = ((oy + a) * w + ox + b) * t;
                    for s in 0..t {
                        gk[koff + s] += go[s] * xin[base + s];
                        gx[base + s] += go[s] * kd[koff + s];
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(&[h, w, t], gx)?,
        Tensor::from_vec(&[d, d, t], gk)?,
    ))
}
