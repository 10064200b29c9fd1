use crate::error::{Error, Result};
use crate::numeric::tensor::{Scalar, Tensor};

/// Adam moments for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState<F: Scalar = f32> {
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &[Tensor<F>]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. Non-finite gradients are rejected before
/// anything is modified.
pub fn adam_step<F: Scalar>(
    params: &mut [&mut Tensor<F>],
    grads: &[Tensor<F>],
    state: &mut AdamState<F>,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::InvalidArgument(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[k].shape() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter {k}")));
        }
    }

    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (k, p) in params.iter_mut().enumerate() {
        let g = grads[k].data();
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        let data = p.data_mut();
        for i in 0..data.len() {
            let gi = g[i].f64();
            let mi = b1 * m[i].f64() + (1.0 - b1) * gi;
            let vi = b2 * v[i].f64() + (1.0 - b2) * gi * gi;
            m[i] = F::of(mi);
            v[i] = F::of(vi);
            let step = lr * (mi / c1) / ((vi / c2).sqrt() + state.eps);
            data[i] = F::of(data[i].f64() - step);
        }
    }
    Ok(())
}
