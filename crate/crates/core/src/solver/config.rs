use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{ForgetLossKind, TokenReduction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMode {
    /// Warm-started primal-dual updates on the constrained problem.
    ConstrainedPdu,
    /// Fixed-weight sum `forget + w * retain`.
    Scalarized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivedBudget {
    FromAlpha,
}

/// Retention budget: `"from-alpha"` for `(1 + alpha) * L_rtn(reference)`, or
/// an explicit value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Budget {
    Explicit(f64),
    Derived(DerivedBudget),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualSchedule {
    /// One dual step after every primal step.
    PerBatch,
    /// One dual step per epoch using the epoch-mean signal.
    PerEpoch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualSignal {
    /// Retain loss of the current minibatch, before the primal step.
    Minibatch,
    /// Full retain-split loss, refreshed every `full_set_refresh` steps.
    FullSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    GradientDescent,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: SolverMode,
    pub forget_loss: ForgetLossKind,
    pub alpha: f64,
    pub epsilon: Budget,
    pub eta_theta: f64,
    pub eta_lambda: f64,
    pub lambda0: f64,
    /// Retain weight in scalarized mode.
    pub scalar_weight: f64,
    pub warmup_epochs: usize,
    pub primal_dual_epochs: usize,
    pub forget_batch: usize,
    pub retain_batch: usize,
    pub dual_schedule: DualSchedule,
    pub dual_signal: DualSignal,
    pub full_set_refresh: usize,
    pub optimizer: Optimizer,
    /// Maximum gradient norm; `0` disables clipping.
    pub clip_norm: f64,
    pub token_reduction: TokenReduction,
    /// Batch-sampling seed. Not serialized: configuration files carry a
    /// single master seed from which this is derived.
    #[serde(skip)]
    pub seed: u64,
}

impl SolverConfig {
    pub fn desk_default() -> Self {
        Self {
            mode: SolverMode::ConstrainedPdu,
            forget_loss: ForgetLossKind::LogitMargin,
            alpha: 0.05,
            epsilon: Budget::Derived(DerivedBudget::FromAlpha),
            eta_theta: 0.01,
            eta_lambda: 0.5,
            lambda0: 1.0,
            scalar_weight: 1.0,
            warmup_epochs: 2,
            primal_dual_epochs: 8,
            forget_batch: 1,
            retain_batch: 32,
            dual_schedule: DualSchedule::PerBatch,
            dual_signal: DualSignal::Minibatch,
            full_set_refresh: 5,
            optimizer: Optimizer::GradientDescent,
            clip_norm: 0.0,
            token_reduction: TokenReduction::Mean,
            seed: 0,
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.warmup_epochs + self.primal_dual_epochs
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.eta_theta >= 0.0 && self.eta_theta.is_finite()) {
            return bad(format!(
                "eta_theta must be finite and >= 0, got {}",
                self.eta_theta
            ));
        }
        if !(self.eta_lambda > 0.0 && self.eta_lambda.is_finite()) {
            return bad(format!(
                "eta_lambda must be positive, got {}",
                self.eta_lambda
            ));
        }
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return bad(format!("lambda0 must be >= 0, got {}", self.lambda0));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if let Budget::Explicit(eps) = self.epsilon {
            if !(eps >= 0.0 && eps.is_finite()) {
                return bad(format!("epsilon must be >= 0, got {eps}"));
            }
        }
        if !(self.scalar_weight >= 0.0 && self.scalar_weight.is_finite()) {
            return bad(format!(
                "scalar_weight must be >= 0, got {}",
                self.scalar_weight
            ));
        }
        if self.total_epochs() == 0 {
            return bad("warmup_epochs + primal_dual_epochs must be at least 1".into());
        }
        if self.forget_batch == 0 || self.retain_batch == 0 {
            return bad("batch sizes must be at least 1".into());
        }
        if self.dual_signal == DualSignal::FullSet && self.full_set_refresh == 0 {
            return bad("full_set_refresh must be at least 1".into());
        }
        if !(self.clip_norm >= 0.0 && self.clip_norm.is_finite()) {
            return bad(format!("clip_norm must be >= 0, got {}", self.clip_norm));
        }
        Ok(())
    }
}
