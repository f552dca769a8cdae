use std::fmt;

use crate::data::{BatchPair, BatchSampler, Corpus};
use crate::error::{Error, Result};
use crate::losses::{evaluate_batch, ForgetLossKind, MarginStats, Objective, TokenReduction};
use crate::model::{ParamSet, Policy};
use crate::tensor::Scalar;

use super::config::{Budget, DualSchedule, DualSignal, Optimizer, SolverConfig};
use super::dual::{budget_from_reference, DualState};
use super::trace::{TraceRecord, TrainTrace};

/// Batch losses and gradients at the current parameters.
#[derive(Clone, Debug)]
pub struct StepEval<T> {
    pub forget_loss: T,
    pub retain_loss: T,
    pub margin_mean: T,
    pub forget_grad: ParamSet<T>,
    pub retain_grad: ParamSet<T>,
}

impl<T: Scalar> StepEval<T> {
    /// `grad forget + lambda * grad retain`; independent of epsilon.
    pub fn lagrangian_grad(&self, lambda: T) -> ParamSet<T> {
        let mut g = self.forget_grad.clone();
        g.axpy(lambda, &self.retain_grad);
        g
    }
}

pub fn evaluate_pair<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    pair: &BatchPair,
    kind: ForgetLossKind,
    reduction: TokenReduction,
) -> Result<StepEval<T>> {
    let forget = evaluate_batch(
        policy,
        params,
        &pair.forget,
        Objective::Forget(kind, reduction),
        true,
    )?;
    let retain = evaluate_batch(
        policy,
        params,
        &pair.retain,
        Objective::Retain(reduction),
        true,
    )?;
    let forget_grad = forget.grad.expect("gradient requested");
    let retain_grad = retain.grad.expect("gradient requested");
    if !forget.value.is_finite() || !forget_grad.all_finite() {
        return Err(Error::NonFiniteGradient {
            term: "forget loss",
        });
    }
    if !retain.value.is_finite() || !retain_grad.all_finite() {
        return Err(Error::NonFiniteGradient {
            term: "retain loss",
        });
    }
    Ok(StepEval {
        forget_loss: forget.value,
        retain_loss: retain.value,
        margin_mean: MarginStats::of_batch(&forget.logits).mean,
        forget_grad,
        retain_grad,
    })
}

/// One gradient-descent step on the Lagrangian:
/// `theta - eta * (grad forget + lambda * grad retain)`.
pub fn primal_step<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    lambda: T,
    pair: &BatchPair,
    eta_theta: T,
    kind: ForgetLossKind,
) -> Result<ParamSet<T>> {
    if lambda < T::zero() {
        return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
    }
    let eval = evaluate_pair(policy, params, pair, kind, TokenReduction::Mean)?;
    let mut next = params.clone();
    next.axpy(-eta_theta, &eval.lagrangian_grad(lambda));
    Ok(next)
}

#[derive(Clone, Debug)]
pub struct RunOutcome<T> {
    pub params: ParamSet<T>,
    pub lambda: T,
    pub dual: DualState<T>,
    pub epsilon: T,
    pub trace: TrainTrace<T>,
}

/// A run that stopped early, with every record up to the failing step.
#[derive(Debug)]
pub struct RunFailure<T> {
    pub error: Error,
    pub trace: TrainTrace<T>,
}

impl<T: fmt::Debug> fmt::Display for RunFailure<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (after {} recorded steps)",
            self.error,
            self.trace.records.len()
        )
    }
}

impl<T: fmt::Debug> std::error::Error for RunFailure<T> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl<T: Scalar> From<Error> for RunFailure<T> {
    fn from(error: Error) -> Self {
        Self {
            error,
            trace: TrainTrace::default(),
        }
    }
}

/// Budget for this run, computed once from the reference parameters.
pub fn resolve_epsilon<T: Scalar, P: Policy<T>>(
    policy: &P,
    reference: &ParamSet<T>,
    corpus: &Corpus,
    config: &SolverConfig,
) -> Result<T> {
    match config.epsilon {
        Budget::Explicit(eps) => Ok(T::lit(eps)),
        Budget::Derived(_) => {
            let base = evaluate_batch(
                policy,
                reference,
                corpus.retain(),
                Objective::Retain(config.token_reduction),
                false,
            )?;
            Ok(budget_from_reference(base.value, config.alpha))
        }
    }
}

/// Warm-started primal-dual solver.
///
/// Starts from the reference parameters and `lambda0`. Every batch pair gets
/// one primal step on the Lagrangian; the multiplier is held at `lambda0`
/// through the first `warmup_epochs` epochs and updated by projected ascent
/// afterwards.
pub fn run_pdu<T: Scalar, P: Policy<T>>(
    policy: &P,
    reference: &ParamSet<T>,
    corpus: &Corpus,
    config: &SolverConfig,
) -> std::result::Result<RunOutcome<T>, RunFailure<T>> {
    run(policy, reference, corpus, config, Weighting::Dual)
}

/// Fixed-weight baseline minimizing `forget + scalar_weight * retain` with the
/// same batching and step rule as [`run_pdu`].
pub fn run_scalarized<T: Scalar, P: Policy<T>>(
    policy: &P,
    reference: &ParamSet<T>,
    corpus: &Corpus,
    config: &SolverConfig,
) -> std::result::Result<RunOutcome<T>, RunFailure<T>> {
    run(policy, reference, corpus, config, Weighting::Fixed)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Weighting {
    Dual,
    Fixed,
}

struct Adam<T> {
    m: ParamSet<T>,
    v: ParamSet<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(like: &ParamSet<T>) -> Self {
        Self {
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }

    fn direction(&mut self, grad: &ParamSet<T>) -> ParamSet<T> {
        self.t += 1;
        let (b1, b2) = (T::lit(Self::BETA1), T::lit(Self::BETA2));
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        let mut m = self.m.to_flat();
        let mut v = self.v.to_flat();
        let g = grad.to_flat();
        let mut dir = Vec::with_capacity(g.len());
        for i in 0..g.len() {
            m[i] = b1 * m[i] + (T::one() - b1) * g[i];
            v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
            dir.push((m[i] / c1) / ((v[i] / c2).sqrt() + T::lit(Self::EPS)));
        }
        self.m = self.m.with_flat(&m).expect("layout");
        self.v = self.v.with_flat(&v).expect("layout");
        grad.with_flat(&dir).expect("layout")
    }
}

fn run<T: Scalar, P: Policy<T>>(
    policy: &P,
    reference: &ParamSet<T>,
    corpus: &Corpus,
    config: &SolverConfig,
    weighting: Weighting,
) -> std::result::Result<RunOutcome<T>, RunFailure<T>> {
    config.validate()?;
    if corpus.vocab_size() != policy.vocab_size() {
        return Err(Error::InvalidArgument(format!(
            "corpus vocabulary {} differs from model vocabulary {}",
            corpus.vocab_size(),
            policy.vocab_size()
        ))
        .into());
    }
    let epsilon: T = resolve_epsilon(policy, reference, corpus, config)?;
    let eta_theta = T::lit(config.eta_theta);
    let eta_lambda = T::lit(config.eta_lambda);
    let clip = (config.clip_norm > 0.0).then(|| T::lit(config.clip_norm));
    let mut dual = DualState::new(match weighting {
        Weighting::Dual => T::lit(config.lambda0),
        Weighting::Fixed => T::lit(config.scalar_weight),
    });

    let mut params = reference.clone();
    let mut adam = (config.optimizer == Optimizer::Adam).then(|| Adam::new(&params));
    let mut sampler = BatchSampler::new(
        corpus,
        config.forget_batch,
        config.retain_batch,
        config.seed,
    )?;
    let mut trace = TrainTrace::default();
    let mut full_set_signal = None;
    let mut step = 0usize;

    let fail = |error: Error, trace: &TrainTrace<T>| RunFailure {
        error,
        trace: trace.clone(),
    };

    for epoch in 1..=config.total_epochs() {
        let dual_active = weighting == Weighting::Dual && epoch > config.warmup_epochs;
        let mut epoch_signals = Vec::new();
        for pair in sampler.epoch() {
            step += 1;
            let eval = match evaluate_pair(
                policy,
                &params,
                &pair,
                config.forget_loss,
                config.token_reduction,
            ) {
                Ok(e) => e,
                Err(Error::NonFiniteNode { node, op }) => {
                    return Err(fail(
                        Error::Divergence {
                            what: format!("loss (node {node}, {op})"),
                            step,
                        },
                        &trace,
                    ))
                }
                Err(e) => return Err(fail(e, &trace)),
            };

            let signal = match config.dual_signal {
                DualSignal::Minibatch => eval.retain_loss,
                DualSignal::FullSet => {
                    if (step - 1).is_multiple_of(config.full_set_refresh) || full_set_signal.is_none() {
                        let full = evaluate_batch(
                            policy,
                            &params,
                            corpus.retain(),
                            Objective::Retain(config.token_reduction),
                            false,
                        )
                        .map_err(|e| fail(e, &trace))?;
                        full_set_signal = Some(full.value);
                    }
                    full_set_signal.expect("refreshed")
                }
            };

            let mut grad = eval.lagrangian_grad(dual.lambda);
            if let Some(max_norm) = clip {
                let norm = grad.norm();
                if norm > max_norm {
                    grad.scale(max_norm / norm);
                }
            }
            let direction = match adam.as_mut() {
                Some(opt) => opt.direction(&grad),
                None => grad,
            };
            params.axpy(-eta_theta, &direction);
            if !params.all_finite() {
                return Err(fail(
                    Error::Divergence {
                        what: "parameters".into(),
                        step,
                    },
                    &trace,
                ));
            }

            let mut fired = None;
            if dual_active {
                match config.dual_schedule {
                    DualSchedule::PerBatch => {
                        dual.ascend(signal, epsilon, eta_lambda);
                        fired = Some(signal);
                    }
                    DualSchedule::PerEpoch => epoch_signals.push(signal),
                }
            }
            let violation = eval.retain_loss - epsilon;
            dual.record(epoch, step, violation);
            trace.records.push(TraceRecord {
                epoch,
                step,
                forget_loss: eval.forget_loss,
                retain_loss: eval.retain_loss,
                lambda: dual.lambda,
                epsilon,
                violation,
                margin_mean: eval.margin_mean,
                dual_signal: fired,
            });
        }

        if dual_active
            && config.dual_schedule == DualSchedule::PerEpoch
            && !epoch_signals.is_empty()
        {
            let mean =
                epoch_signals.iter().copied().sum::<T>() / T::lit(epoch_signals.len() as f64);
            dual.ascend(mean, epsilon, eta_lambda);
            let last = trace.records.last_mut().expect("epoch has steps");
            last.lambda = dual.lambda;
            last.dual_signal = Some(mean);
            if let Some(entry) = dual.trajectory.last_mut() {
                entry.2 = dual.lambda;
            }
        }
    }

    Ok(RunOutcome {
        params,
        lambda: dual.lambda,
        dual,
        epsilon,
        trace,
    })
}
