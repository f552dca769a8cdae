//! Forgetting and retention objectives over batches of examples.
//!
//! Every batch loss is the mean of per-example losses, each example weighted
//! equally regardless of its response length.

mod logits;

use serde::{Deserialize, Serialize};

pub use logits::{
    cross_entropy_row, logit_margin_row_grad, logit_margin_row_loss, margin, margin_stats,
    max_prob_bound, row_mean, uniform_cross_entropy_row, LogitMatrix, MarginStats,
};

use crate::error::{Error, Result};
use crate::model::{ParamSet, Policy, TokenExample};
use crate::tensor::{Axis, Graph, NodeId, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForgetLossKind {
    /// Negated retain cross-entropy on the forget batch (gradient ascent).
    NegativeCe,
    /// Cross-entropy against the uniform distribution.
    UniformCe,
    /// Mean squared gap between the largest and the mean logit.
    LogitMargin,
}

impl ForgetLossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ForgetLossKind::NegativeCe => "negative-ce",
            ForgetLossKind::UniformCe => "uniform-ce",
            ForgetLossKind::LogitMargin => "logit-margin",
        }
    }
}

impl std::str::FromStr for ForgetLossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negative-ce" => Ok(ForgetLossKind::NegativeCe),
            "uniform-ce" => Ok(ForgetLossKind::UniformCe),
            "logit-margin" => Ok(ForgetLossKind::LogitMargin),
            other => Err(Error::InvalidArgument(format!(
                "unknown forget loss `{other}`"
            ))),
        }
    }
}

/// How the cross-entropy of one response is aggregated over its tokens.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenReduction {
    #[default]
    Mean,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    Retain(TokenReduction),
    Forget(ForgetLossKind, TokenReduction),
}

impl Objective {
    pub fn forget(kind: ForgetLossKind) -> Self {
        Objective::Forget(kind, TokenReduction::Mean)
    }

    pub fn retain() -> Self {
        Objective::Retain(TokenReduction::Mean)
    }
}

#[derive(Clone, Debug)]
pub struct BatchLoss<T> {
    pub value: T,
    pub grad: Option<ParamSet<T>>,
    /// Response logits of every example, in batch order.
    pub logits: Vec<LogitMatrix<T>>,
}

/// Appends the per-example loss for `objective` on top of `logits`.
pub fn example_loss_node<T: Scalar>(
    g: &mut Graph<T>,
    logits: NodeId,
    example: &TokenExample,
    objective: Objective,
) -> NodeId {
    let cross_entropy = |g: &mut Graph<T>, reduction: TokenReduction| {
        let lse = g.logsumexp(logits);
        let targets = example.response.iter().map(|&y| y as usize).collect();
        let picked = g.gather(logits, targets);
        let nll = g.sub(lse, picked);
        match reduction {
            TokenReduction::Mean => g.mean(nll, Axis::All),
            TokenReduction::Sum => g.sum(nll, Axis::All),
        }
    };
    match objective {
        Objective::Retain(reduction) => cross_entropy(g, reduction),
        Objective::Forget(ForgetLossKind::NegativeCe, reduction) => {
            let ce = cross_entropy(g, reduction);
            g.scale(ce, -T::one())
        }
        Objective::Forget(ForgetLossKind::UniformCe, _) => {
            let lse = g.logsumexp(logits);
            let mean = g.mean(logits, Axis::Rows);
            let per_row = g.sub(lse, mean);
            g.mean(per_row, Axis::All)
        }
        Objective::Forget(ForgetLossKind::LogitMargin, _) => {
            let max = g.max(logits, Axis::Rows);
            let mean = g.mean(logits, Axis::Rows);
            let gap = g.sub(max, mean);
            let sq = g.square(gap);
            g.mean(sq, Axis::All)
        }
    }
}

/// Mean per-example loss over `batch`, optionally with its parameter gradient.
///
/// Examples are evaluated and reduced in batch order, so the result is
/// bitwise reproducible.
pub fn evaluate_batch<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    batch: &[TokenExample],
    objective: Objective,
    want_grad: bool,
) -> Result<BatchLoss<T>> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let names = params.names();
    let inv_n = T::one() / T::lit(batch.len() as f64);
    let mut total = T::zero();
    let mut grad = want_grad.then(|| params.zeros_like());
    let mut all_logits = Vec::with_capacity(batch.len());

    for example in batch {
        let mut g = Graph::new();
        let z = policy.build_logits(&mut g, example)?;
        let loss = example_loss_node(&mut g, z, example, objective);
        let value = g.forward(params, loss)?;
        total = total + value.item();
        if let Some(acc) = grad.as_mut() {
            let per_leaf = g.backward(loss, &names)?;
            for name in &names {
                let target = acc.get_mut(name).expect("same layout");
                target.axpy(inv_n, &per_leaf[*name]);
            }
        }
        all_logits.push(LogitMatrix::new(g.value(z).expect("evaluated").clone())?);
    }

    Ok(BatchLoss {
        value: total * inv_n,
        grad,
        logits: all_logits,
    })
}

/// Mean over examples of the per-token mean negative log-likelihood.
pub fn retain_loss<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    batch: &[TokenExample],
) -> Result<T> {
    Ok(evaluate_batch(policy, params, batch, Objective::retain(), false)?.value)
}

pub fn forget_loss<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    batch: &[TokenExample],
    kind: ForgetLossKind,
) -> Result<T> {
    Ok(evaluate_batch(policy, params, batch, Objective::forget(kind), false)?.value)
}

pub fn forget_loss_negative_ce<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    batch: &[TokenExample],
) -> Result<T> {
    forget_loss(policy, params, batch, ForgetLossKind::NegativeCe)
}

pub fn forget_loss_uniform_ce<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    batch: &[TokenExample],
) -> Result<T> {
    forget_loss(policy, params, batch, ForgetLossKind::UniformCe)
}

pub fn forget_loss_logit_margin<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    batch: &[TokenExample],
) -> Result<T> {
    forget_loss(policy, params, batch, ForgetLossKind::LogitMargin)
}
