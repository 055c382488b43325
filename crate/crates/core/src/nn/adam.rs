use super::error::NnError;
use super::params::{GradStore, ParamId, ParamSet};
use super::real::Real;

/// Adam optimizer state over a chosen subset of a [`ParamSet`].
///
/// Moment buffers mirror the trainable parameters' shapes; the step counter
/// increases by exactly one per update.
#[derive(Debug, Clone)]
pub struct AdamState<R: Real> {
    lr: R,
    beta1: R,
    beta2: R,
    eps: R,
    step: u64,
    trainable: Vec<ParamId>,
    m: Vec<Vec<R>>,
    v: Vec<Vec<R>>,
}

impl<R: Real> AdamState<R> {
    /// Default optimizer constants; the learning rate defaults to 1e-3.
    pub fn new(params: &ParamSet<R>, trainable: Vec<ParamId>) -> Self {
        Self::with_lr(params, trainable, 1e-3)
    }

    pub fn with_lr(params: &ParamSet<R>, trainable: Vec<ParamId>, lr: f64) -> Self {
        let m = trainable
            .iter()
            .map(|&id| vec![R::ZERO; params.get(id).numel()])
            .collect::<Vec<_>>();
        let v = m.clone();
        AdamState {
            lr: R::from_f64(lr),
            beta1: R::from_f64(0.9),
            beta2: R::from_f64(0.999),
            eps: R::from_f64(1e-8),
            step: 0,
            trainable,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn trainable(&self) -> &[ParamId] {
        &self.trainable
    }

    /// Moment buffers and step counter, for serializing training state.
    pub fn state(&self) -> (&[Vec<R>], &[Vec<R>], u64) {
        (&self.m, &self.v, self.step)
    }

    /// Rebuilds optimizer state saved by [`Self::state`]. Buffer shapes must
    /// match the trainable parameters.
    pub fn restore(
        params: &ParamSet<R>,
        trainable: Vec<ParamId>,
        lr: f64,
        m: Vec<Vec<R>>,
        v: Vec<Vec<R>>,
        step: u64,
    ) -> Result<Self, NnError> {
        if m.len() != trainable.len() || v.len() != trainable.len() {
            return Err(NnError::Format("optimizer state length mismatch".into()));
        }
        for (i, &id) in trainable.iter().enumerate() {
            if m[i].len() != params.get(id).numel() || v[i].len() != params.get(id).numel() {
                return Err(NnError::Format(format!(
                    "optimizer buffers for `{}` have the wrong size",
                    params.name(id)
                )));
            }
        }
        let mut adam = AdamState::with_lr(params, trainable, lr);
        adam.m = m;
        adam.v = v;
        adam.step = step;
        Ok(adam)
    }

    /// One bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut ParamSet<R>, grads: &GradStore<R>) -> Result<(), NnError> {
        if grads.len() != params.len() {
            return Err(NnError::MissingGrad(format!(
                "gradient store covers {} of {} parameters",
                grads.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = R::ONE - self.beta1.powi(t);
        let bc2 = R::ONE - self.beta2.powi(t);
        for (slot, &id) in self.trainable.iter().enumerate() {
            let g = grads.get(id);
            if g.len() != params.get(id).numel() {
                return Err(NnError::MissingGrad(params.name(id).to_string()));
            }
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            let p = params.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (R::ONE - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (R::ONE - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Variant that reads gradients from the parameters' own grad buffers.
    pub fn step_from_param_grads(&mut self, params: &mut ParamSet<R>) -> Result<(), NnError> {
        for &id in &self.trainable {
            if params.get(id).grad().is_none() {
                return Err(NnError::MissingGrad(params.name(id).to_string()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = R::ONE - self.beta1.powi(t);
        let bc2 = R::ONE - self.beta2.powi(t);
        for (slot, &id) in self.trainable.iter().enumerate() {
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            let tensor = params.get_mut(id);
            let g = tensor.grad().unwrap().to_vec();
            let p = tensor.data_mut();
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (R::ONE - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (R::ONE - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
