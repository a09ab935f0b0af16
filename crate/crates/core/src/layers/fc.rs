//! Fully-connected projection of each time slice: `H x W x T` is flattened to
//! `(H*W) x T` and multiplied by `W: D x (H*W)`, giving `D x T`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct FcCache {
    input: Tensor,
    weight: Tensor,
}

fn flatten(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "fc expects rank-3 input, got {:?}",
            x.shape()
        )));
    }
    let s = x.shape();
    x.reshape(&[s[0] * s[1], s[2]])
}

pub fn fc_forward(x: &Tensor, w: &Tensor) -> Result<(Tensor, FcCache)> {
    let flat = flatten(x)?;
    if w.rank() != 2 || w.shape()[1] != flat.shape()[0] {
        return Err(Error::ShapeMismatch(format!(
            "fc weight {:?} against flattened input {:?}",
            w.shape(),
            flat.shape()
        )));
    }
    let out = w.matmul(&flat)?;
    Ok((
        out,
        FcCache {
            input: flat,
            weight: w.clone(),
        },
    ))
}

/// Returns `(grad_input, grad_weight)`; `grad_input` has the flattened
/// `(H*W) x T` layout, which is bit-identical in memory to `H x W x T`.
pub fn fc_backward(cache: FcCache, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
    let gw = grad_out.matmul(&cache.input.transpose()?)?;
    let gx = cache.weight.transpose()?.matmul(grad_out)?;
    Ok((gx, gw))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight_flattens() {
        let x = Tensor::from_vec(&[2, 2, 3], (0..12).map(f64::from).collect()).unwrap();
        let (y, _) = fc_forward(&x, &Tensor::identity(4)).unwrap();
        assert_eq!(y.shape(), &[4, 3]);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_input_and_sum() {
        let (y, _) = fc_forward(&Tensor::zeros(&[2, 2, 2]), &Tensor::filled(&[3, 4], 1.0)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));

        let x = Tensor::from_vec(&[2, 1, 1], vec![2.0, 5.0]).unwrap();
        let w = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        assert_eq!(fc_forward(&x, &w).unwrap().0.data(), &[7.0]);
    }

    #[test]
    fn mismatch() {
        assert!(fc_forward(&Tensor::zeros(&[2, 2, 1]), &Tensor::zeros(&[3, 5])).is_err());
    }
}
