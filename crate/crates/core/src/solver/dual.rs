use crate::error::{Error, Result};
use crate::losses::{evaluate_batch, ForgetLossKind, Objective, TokenReduction};
use crate::model::{ParamSet, Policy, TokenExample};
use crate::tensor::Scalar;

/// Projected dual ascent: `max(0, lambda + eta * (retain_loss - epsilon))`.
pub fn dual_step<T: Scalar>(lambda: T, retain_loss: T, epsilon: T, eta_lambda: T) -> T {
    (lambda + eta_lambda * (retain_loss - epsilon)).max(T::zero())
}

/// `forget + lambda * (retain - epsilon)`.
pub fn lagrangian_value<T: Scalar>(forget_loss: T, retain_loss: T, lambda: T, epsilon: T) -> T {
    forget_loss + lambda * (retain_loss - epsilon)
}

pub fn lagrangian<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    lambda: T,
    forget_batch: &[TokenExample],
    retain_batch: &[TokenExample],
    epsilon: T,
    kind: ForgetLossKind,
) -> Result<T> {
    if lambda < T::zero() {
        return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
    }
    let lf = evaluate_batch(policy, params, forget_batch, Objective::forget(kind), false)?.value;
    let lr = evaluate_batch(policy, params, retain_batch, Objective::retain(), false)?.value;
    Ok(lagrangian_value(lf, lr, lambda, epsilon))
}

/// Retention budget `(1 + alpha) * L_rtn(reference, retain_set)`.
pub fn epsilon_from_alpha<T: Scalar, P: Policy<T>>(
    policy: &P,
    reference: &ParamSet<T>,
    retain_set: &[TokenExample],
    alpha: f64,
    reduction: TokenReduction,
) -> Result<T> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be >= 0, got {alpha}"
        )));
    }
    if retain_set.is_empty() {
        return Err(Error::InvalidArgument("retain set is empty".into()));
    }
    let base = evaluate_batch(
        policy,
        reference,
        retain_set,
        Objective::Retain(reduction),
        false,
    )?;
    Ok(budget_from_reference(base.value, alpha))
}

pub fn budget_from_reference<T: Scalar>(reference_loss: T, alpha: f64) -> T {
    (T::one() + T::lit(alpha)) * reference_loss
}

/// Multiplier and its history.
#[derive(Clone, Debug, PartialEq)]
pub struct DualState<T> {
    pub lambda: T,
    /// `(epoch, step, lambda, violation)` after each recorded step.
    pub trajectory: Vec<(usize, usize, T, T)>,
}

impl<T: Scalar> DualState<T> {
    pub fn new(lambda0: T) -> Self {
        Self {
            lambda: lambda0,
            trajectory: Vec::new(),
        }
    }

    pub fn ascend(&mut self, signal: T, epsilon: T, eta_lambda: T) {
        self.lambda = dual_step(self.lambda, signal, epsilon, eta_lambda);
    }

    pub fn record(&mut self, epoch: usize, step: usize, violation: T) {
        self.trajectory.push((epoch, step, self.lambda, violation));
    }
}
