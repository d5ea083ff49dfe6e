use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::ModelParams;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.eps > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2);
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Matrix<T>,
    pub v: Matrix<T>,
    pub t: u64,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(rows: usize, cols: usize, config: AdamConfig) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update of the embeddings. A non-finite gradient
/// leaves both parameters and state untouched.
pub fn adam_step<T: Scalar>(state: &mut AdamState<T>, params: &mut ModelParams<T>, grad: &Matrix<T>) -> Result<()> {
    if !grad.same_shape(params.embeddings()) || !grad.same_shape(&state.m) {
        return Err(Error::ShapeMismatch("gradient, moments and parameters differ in shape".into()));
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let e = params.embeddings_mut().as_mut_slice();
    let (m, v) = (state.m.as_mut_slice(), state.v.as_mut_slice());
    for (x, &g) in grad.as_slice().iter().enumerate() {
        let g = g.to_f64_lossless();
        let mx = beta1 * m[x].to_f64_lossless() + (1.0 - beta1) * g;
        let vx = beta2 * v[x].to_f64_lossless() + (1.0 - beta2) * g * g;
        m[x] = T::from_f64_round(mx);
        v[x] = T::from_f64_round(vx);
        let step = lr * (mx / c1) / ((vx / c2).sqrt() + eps);
        e[x] = T::from_f64_round(e[x].to_f64_lossless() - step);
    }
    Ok(())
}
