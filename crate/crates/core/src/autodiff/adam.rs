use super::tensor::ParamStore;
use crate::error::{Error, Result};

/// Adam moments and hyperparameters for every trainable tensor of a store.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Indexed like the store; empty for frozen tensors.
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore, learning_rate: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .iter()
            .map(|(_, _, t)| {
                if t.requires_grad() {
                    vec![0.0; t.len()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        AdamState {
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }
}

/// One bias-corrected Adam update of every trainable tensor from its
/// gradient slot. Gradients are left in place; clearing them is up to the
/// caller.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    if state.first_moment.len() != params.len() || state.second_moment.len() != params.len() {
        return Err(Error::shape("adam_step", &[state.first_moment.len()], &[params.len()]));
    }
    for id in params.ids() {
        let t = params.get(id);
        let expected = if t.requires_grad() { t.len() } else { 0 };
        let i = id.index();
        if state.first_moment[i].len() != expected || state.second_moment[i].len() != expected {
            return Err(Error::shape("adam_step", &[state.first_moment[i].len()], t.shape()));
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let tensor = params.get_mut(id);
        if !tensor.requires_grad() {
            continue;
        }
        let grad = tensor.grad().expect("trainable").to_vec();
        let m = &mut state.first_moment[id.index()];
        let v = &mut state.second_moment[id.index()];
        for (((w, g), m), v) in tensor
            .values_mut()
            .iter_mut()
            .zip(&grad)
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *w -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
pub fn clip_grad_norm(params: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            if let Some(g) = params.get_mut(id).grad_mut() {
                g.iter_mut().for_each(|x| *x *= scale);
            }
        }
    }
    norm
}
