//! Finite-difference gradient checking support.
//!
//! The checker only ever runs forward passes, so it stays independent of the
//! reverse-mode implementation it is used to validate.

use super::params::{ParamId, ParamSet};
use super::real::Real;

/// Central-difference gradient of `loss` with respect to one parameter
/// tensor, perturbing every entry. `loss` must be a pure function of the
/// parameter set.
pub fn finite_diff_grad<R: Real>(
    params: &mut ParamSet<R>,
    id: ParamId,
    step: f64,
    mut loss: impl FnMut(&ParamSet<R>) -> f64,
) -> Vec<f64> {
    let numel = params.get(id).numel();
    let mut out = Vec::with_capacity(numel);
    for i in 0..numel {
        let orig = params.get(id).data()[i];
        params.get_mut(id).data_mut()[i] = orig + R::from_f64(step);
        let up = loss(params);
        params.get_mut(id).data_mut()[i] = orig - R::from_f64(step);
        let down = loss(params);
        params.get_mut(id).data_mut()[i] = orig;
        out.push((up - down) / (2.0 * step));
    }
    out
}

/// Largest relative error between an analytic gradient and a reference,
/// with an absolute floor so near-zero entries compare sanely.
pub fn max_rel_err<R: Real>(analytic: &[R], reference: &[f64]) -> f64 {
    assert_eq!(analytic.len(), reference.len());
    let mut worst = 0.0f64;
    for (a, &r) in analytic.iter().zip(reference) {
        let a = a.to_f64();
        let denom = a.abs().max(r.abs()).max(1e-6);
        worst = worst.max((a - r).abs() / denom);
    }
    worst
}
