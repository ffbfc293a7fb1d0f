//! Adam, global-norm clipping and the cosine learning-rate schedule.

use crate::error::{KitsError, Result};
use crate::tensor::Tensor;

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(shapes: &[Tensor]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|t| vec![0.0; t.numel()]).collect(),
            v: shapes.iter().map(|t| vec![0.0; t.numel()]).collect(),
        }
    }

    pub fn first_moment(&self, k: usize) -> &[f64] {
        &self.m[k]
    }

    pub fn second_moment(&self, k: usize) -> &[f64] {
        &self.v[k]
    }
}

/// Global L2 norm over all gradient tensors.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
}

/// Rescales `grads` in place so their global norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}

/// One bias-corrected Adam update.
///
/// Gradients are expected to be clipped already. Non-finite gradients leave
/// both parameters and state untouched and return a training error.
pub fn adam_step<'a, I>(params: I, grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()>
where
    I: IntoIterator<Item = &'a mut Tensor>,
{
    if !grads.iter().all(Tensor::is_finite) {
        return Err(KitsError::Training("non-finite gradient".into()));
    }
    let params: Vec<&mut Tensor> = params.into_iter().collect();
    if params.len() != grads.len() || grads.len() != state.m.len() {
        return Err(KitsError::Dimension(format!(
            "{} parameters, {} gradients, {} optimizer slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[k].len() != g.numel() {
            return Err(KitsError::Dimension(format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape())));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (i, (x, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            *x -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + state.eps);
        }
    }
    Ok(())
}

/// `lr0·(1 + cos(π·step/total))/2`; a zero horizon keeps `lr0`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let frac = step.min(total_steps) as f64 / total_steps as f64;
    lr0 * (1.0 + (std::f64::consts::PI * frac).cos()) / 2.0
}
