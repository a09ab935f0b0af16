//! Non-overlapping `d x d` pooling over `H x W x T` tensors, per time slice.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    in_shape: [usize; 3],
    /// Flat input offset of the winning element for each output cell.
    argmax: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct AvgPoolCache {
    in_shape: [usize; 3],
    d: usize,
}

fn dims(x: &Tensor, d: usize) -> Result<[usize; 3]> {
    if x.rank() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "pooling expects rank 3, got {:?}",
            x.shape()
        )));
    }
    let (h, w) = (x.shape()[0], x.shape()[1]);
    if d == 0 || h % d != 0 || w % d != 0 {
        return Err(Error::ShapeMismatch(format!(
            "pool size {d} does not divide {h}x{w}"
        )));
    }
    Ok([h, w, x.shape()[2]])
}

/// Ties resolve to the first maximum in row-major block order.
pub fn max_pool_forward(x: &Tensor, d: usize) -> Result<(Tensor, MaxPoolCache)> {
    let [h, w, t] = dims(x, d)?;
    let (ho, wo) = (h / d, w / d);
    let xin = x.data();
    let mut out = vec![f64::NEG_INFINITY; ho * wo * t];
    let mut argmax = vec![0usize; ho * wo * t];
    for oy in 0..ho {
        for ox in 0..wo {
            let obase = (oy * wo + ox) * t;
            for a in 0..d {
                for b in 0..d {
                    let ibase = ((oy * d + a) * w + ox * d + b) * t;
                    for s in 0..t {
                        let v = xin[ibase + s];
                        if v > out[obase + s] {
                            out[obase + s] = v;
                            argmax[obase + s] = ibase + s;
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(&[ho, wo, t], out)?,
        MaxPoolCache {
            in_shape: [h, w, t],
            argmax,
        },
    ))
}

pub fn max_pool_backward(cache: MaxPoolCache, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != cache.argmax.len() {
        return Err(Error::ShapeMismatch(format!(
            "grad_out {:?} does not match pooled output",
            grad_out.shape()
        )));
    }
    let mut gx = Tensor::zeros(&cache.in_shape);
    let g = gx.data_mut();
    for (&idx, &gv) in cache.argmax.iter().zip(grad_out.data()) {
        g[idx] += gv;
    }
    Ok(gx)
}

pub fn avg_pool_forward(x: &Tensor, d: usize) -> Result<(Tensor, AvgPoolCache)> {
    let [h, w, t] = dims(x, d)?;
    let (ho, wo) = (h / d, w / d);
    let xin = x.data();
    let inv = 1.0 / (d * d) as f64;
    let mut out = vec![0.0; ho * wo * t];
    for oy in 0..ho {
        for ox in 0..wo {
            let obase = (oy * wo + ox) * t;
            for a in 0..d {
                for b in 0..d {
                    let ibase = ((oy * d + a) * w + ox * d + b) * t;
                    for s in 0..t {
                        out[obase + s] += xin[ibase + s];
                    }
                }
            }
            out[obase..obase + t].iter_mut().for_each(|v| *v *= inv);
        }
    }
    Ok((
        Tensor::from_vec(&[ho, wo, t], out)?,
        AvgPoolCache {
            in_shape: [h, w, t],
            d,
        },
    ))
}

pub fn avg_pool_backward(cache: AvgPoolCache, grad_out: &Tensor) -> Result<Tensor> {
    let [h, w, t] = cache.in_shape;
    let d = cache.d;
    let (ho, wo) = (h / d, w / d);
    if grad_out.shape() != [ho, wo, t] {
        return Err(Error::ShapeMismatch(format!(
            "grad_out {:?}, expected [{ho}, {wo}, {t}]",
            grad_out.shape()
        )));
    }
    let inv = 1.0 / (d * d) as f64;
    let g = grad_out.data();
    let mut gx = vec![0.0; h * w * t];
    for y in 0..h {
        for x in 0..w {
            let obase = ((y / d) * wo + x / d) * t;
            let ibase = (y * w + x) * t;
            for s in 0..t {
                gx[ibase + s] = g[obase + s] * inv;
            }
        }
    }
    Tensor::from_vec(&[h, w, t], gx)
}
