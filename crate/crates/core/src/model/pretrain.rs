use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{evaluate_batch, Objective};
use crate::tensor::Scalar;

use super::{ParamSet, Policy, TokenExample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainSchedule {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome<T> {
    pub params: ParamSet<T>,
    /// Minibatch loss before each step.
    pub step_losses: Vec<T>,
    /// Mean per-token cross-entropy over the whole dataset after training.
    pub final_loss: T,
}

/// Offset between the initialization stream and the minibatch stream.
const BATCH_STREAM_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Fits a freshly initialized model to `dataset` by minibatch gradient
/// descent on the mean per-token cross-entropy.
pub fn pretrain<T: Scalar, P: Policy<T>>(
    policy: &P,
    dataset: &[TokenExample],
    schedule: &PretrainSchedule,
    seed: u64,
) -> Result<PretrainOutcome<T>> {
    pretrain_observed(policy, dataset, schedule, seed, |_, _| {})
}

/// As [`pretrain`], calling `observe(step, loss)` after every step so callers
/// can persist progress before a possible divergence.
pub fn pretrain_observed<T: Scalar, P: Policy<T>>(
    policy: &P,
    dataset: &[TokenExample],
    schedule: &PretrainSchedule,
    seed: u64,
    mut observe: impl FnMut(usize, T),
) -> Result<PretrainOutcome<T>> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument(
            "pretraining dataset is empty".into(),
        ));
    }
    if schedule.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    if !(schedule.learning_rate >= 0.0 && schedule.learning_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be finite and nonnegative, got {}",
            schedule.learning_rate
        )));
    }
    for ex in dataset {
        ex.validate(policy.vocab_size(), policy.context_window())?;
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(BATCH_STREAM_OFFSET));
    let mut params = policy.init_params(&mut init_rng);
    let lr = T::lit(schedule.learning_rate);
    let batch_size = schedule.batch_size.min(dataset.len());

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = order.len();
    let mut step_losses = Vec::with_capacity(schedule.steps);
    for step in 0..schedule.steps {
        let mut batch = Vec::with_capacity(batch_size);
        while batch.len() < batch_size {
            if cursor == order.len() {
                order.shuffle(&mut batch_rng);
                cursor = 0;
            }
            batch.push(dataset[order[cursor]].clone());
            cursor += 1;
        }
        let eval = evaluate_batch(policy, &params, &batch, Objective::retain(), true)
            .map_err(|e| divergence_or(e, step))?;
        let grad = eval.grad.expect("gradient requested");
        if !eval.value.is_finite() || !grad.all_finite() {
            return Err(Error::Divergence {
                what: "pretraining loss".into(),
                step,
            });
        }
        params.axpy(-lr, &grad);
        step_losses.push(eval.value);
        observe(step, eval.value);
    }

    let final_loss = evaluate_batch(policy, &params, dataset, Objective::retain(), false)
        .map_err(|e| divergence_or(e, schedule.steps))?
        .value;
    Ok(PretrainOutcome {
        params,
        step_losses,
        final_loss,
    })
}

fn divergence_or(e: Error, step: usize) -> Error {
    match e {
        Error::NonFiniteNode { .. } => Error::Divergence {
            what: format!("pretraining forward pass ({e})"),
            step,
        },
        other => other,
    }
}
