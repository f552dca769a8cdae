//! Forgetting and retention metrics.

mod report;

pub use report::{OracleSummary, UnlearningReport};

use crate::error::{Error, Result};
use crate::losses::{margin, max_prob_bound, retain_loss};
use crate::model::{
    greedy_decode, logits, pretrain, softmax, ParamSet, Policy, PretrainSchedule, TokenExample,
};
use crate::tensor::{log_sum_exp, Scalar};

/// Slack allowed when comparing a measured probability with its bound.
pub const BOUND_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct UniformityReport {
    pub positions: usize,
    pub mean_max_prob: f64,
    pub max_max_prob: f64,
    pub mean_kl_to_uniform: f64,
    pub mean_margin: f64,
    pub max_margin: f64,
    /// Fraction of positions whose max probability respects the margin bound.
    pub bound_compliance: f64,
}

/// Per-position statistics of one logit row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowStats {
    pub max_prob: f64,
    pub kl_to_uniform: f64,
    pub margin: f64,
}

pub fn row_stats<T: Scalar>(row: &[T]) -> RowStats {
    let probs = softmax(row);
    let v = row.len() as f64;
    let max_prob = probs.iter().map(|p| p.as_f64()).fold(0.0, f64::max);
    let kl: f64 = probs
        .iter()
        .map(|p| p.as_f64())
        .filter(|&p| p > 0.0)
        .map(|p| p * (p * v).ln())
        .sum();
    RowStats {
        max_prob,
        kl_to_uniform: kl.max(0.0),
        margin: margin(row).as_f64(),
    }
}

fn require_nonempty(set: &[TokenExample], what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} is empty")));
    }
    Ok(())
}

pub fn uniformity_report<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    examples: &[TokenExample],
) -> Result<UniformityReport> {
    require_nonempty(examples, "evaluation set")?;
    let mut rows = Vec::new();
    for ex in examples {
        let z = logits(policy, params, ex)?;
        rows.extend((0..z.rows()).map(|t| row_stats(z.row(t))));
    }
    let n = rows.len() as f64;
    let vocab = policy.vocab_size();
    let compliant = rows
        .iter()
        .filter(|r| {
            let bound = max_prob_bound(r.margin, vocab).expect("margin is nonnegative");
            r.max_prob <= bound + BOUND_TOLERANCE
        })
        .count();
    Ok(UniformityReport {
        positions: rows.len(),
        mean_max_prob: rows.iter().map(|r| r.max_prob).sum::<f64>() / n,
        max_max_prob: rows.iter().map(|r| r.max_prob).fold(0.0, f64::max),
        mean_kl_to_uniform: rows.iter().map(|r| r.kl_to_uniform).sum::<f64>() / n,
        mean_margin: rows.iter().map(|r| r.margin).sum::<f64>() / n,
        max_margin: rows.iter().map(|r| r.margin).fold(0.0, f64::max),
        bound_compliance: compliant as f64 / n,
    })
}

/// `2ab / (a + b)`, zero when either term is zero.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Mean over examples of the geometric mean of the true-token probabilities.
pub fn normalized_likelihood<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    examples: &[TokenExample],
) -> Result<f64> {
    require_nonempty(examples, "evaluation set")?;
    let mut total = 0.0;
    for ex in examples {
        let z = logits(policy, params, ex)?;
        let mean_log: f64 = ex
            .response
            .iter()
            .enumerate()
            .map(|(t, &y)| {
                let row = z.row(t);
                (row[y as usize] - log_sum_exp(row)).as_f64()
            })
            .sum::<f64>()
            / ex.response.len() as f64;
        total += mean_log.exp();
    }
    Ok(total / examples.len() as f64)
}

/// Fraction of response tokens reproduced by greedy decoding from the prompt.
pub fn greedy_match_rate<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    examples: &[TokenExample],
) -> Result<f64> {
    require_nonempty(examples, "evaluation set")?;
    let mut matched = 0usize;
    let mut total = 0usize;
    for ex in examples {
        let decoded = greedy_decode(policy, params, &ex.prompt, ex.response.len())?;
        matched += decoded
            .iter()
            .zip(&ex.response)
            .filter(|(a, b)| a == b)
            .count();
        total += ex.response.len();
    }
    Ok(matched as f64 / total as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForgetSuccess {
    pub normalized_likelihood: f64,
    pub greedy_match_rate: f64,
    pub proxy: f64,
}

/// Harmonic mean of `1 - normalized likelihood` and `1 - greedy match rate`.
pub fn forget_success<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    forget_set: &[TokenExample],
) -> Result<ForgetSuccess> {
    let normalized_likelihood = normalized_likelihood(policy, params, forget_set)?;
    let greedy_match_rate = greedy_match_rate(policy, params, forget_set)?;
    Ok(ForgetSuccess {
        normalized_likelihood,
        greedy_match_rate,
        proxy: harmonic_mean(1.0 - normalized_likelihood, 1.0 - greedy_match_rate),
    })
}

pub fn forget_success_proxy<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    forget_set: &[TokenExample],
) -> Result<f64> {
    Ok(forget_success(policy, params, forget_set)?.proxy)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetainDrift {
    pub reference_ce: f64,
    pub current_ce: f64,
    pub epsilon: f64,
    /// The constraint is closed: equality counts as satisfied.
    pub satisfied: bool,
}

pub fn retain_drift<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    reference: &ParamSet<T>,
    retain_set: &[TokenExample],
    epsilon: T,
) -> Result<RetainDrift> {
    require_nonempty(retain_set, "retain set")?;
    let current = retain_loss(policy, params, retain_set)?;
    let before = retain_loss(policy, reference, retain_set)?;
    Ok(RetainDrift {
        reference_ce: before.as_f64(),
        current_ce: current.as_f64(),
        epsilon: epsilon.as_f64(),
        satisfied: current <= epsilon,
    })
}

#[derive(Clone, Debug)]
pub struct RetrainedOracle<T> {
    pub params: ParamSet<T>,
    pub step_losses: Vec<T>,
    pub final_loss: T,
}

/// Trains a fresh model on the retain split only.
pub fn retrain_oracle<T: Scalar, P: Policy<T>>(
    policy: &P,
    retain_set: &[TokenExample],
    schedule: &PretrainSchedule,
    seed: u64,
) -> Result<RetrainedOracle<T>> {
    require_nonempty(retain_set, "retain set")?;
    let out = pretrain(policy, retain_set, schedule, seed)?;
    Ok(RetrainedOracle {
        params: out.params,
        step_losses: out.step_losses,
        final_loss: out.final_loss,
    })
}
