//! Evaluation report and its `key = value` text form.
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing
//! a written report reproduces it exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::losses::retain_loss;
use crate::model::{ParamSet, Policy};
use crate::tensor::Scalar;

use super::{forget_success, greedy_match_rate, retain_drift, uniformity_report};

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSummary {
    pub retain_ce: f64,
    pub forget_success_proxy: f64,
    pub forget_mean_max_prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnlearningReport {
    pub vocab_size: usize,
    pub forget_positions: usize,
    pub forget_mean_max_prob: f64,
    pub forget_max_max_prob: f64,
    pub forget_mean_kl_to_uniform: f64,
    pub forget_mean_margin: f64,
    pub forget_max_margin: f64,
    pub forget_normalized_likelihood: f64,
    pub forget_greedy_match_rate: f64,
    pub forget_success_proxy: f64,
    pub reference_forget_success_proxy: f64,
    pub retain_greedy_match_rate: f64,
    pub retain_reference_ce: f64,
    pub retain_ce: f64,
    pub epsilon: f64,
    pub retain_satisfied: bool,
    pub bound_compliance: f64,
    pub oracle: Option<OracleSummary>,
}

impl UnlearningReport {
    /// Evaluates `params` against the reference model and, if given, a
    /// retain-only oracle.
    pub fn evaluate<T: Scalar, P: Policy<T>>(
        policy: &P,
        params: &ParamSet<T>,
        reference: &ParamSet<T>,
        oracle: Option<&ParamSet<T>>,
        corpus: &Corpus,
        epsilon: T,
    ) -> Result<Self> {
        let uni = uniformity_report(policy, params, corpus.forget())?;
        let fs = forget_success(policy, params, corpus.forget())?;
        let ref_fs = forget_success(policy, reference, corpus.forget())?;
        let drift = retain_drift(policy, params, reference, corpus.retain(), epsilon)?;
        let oracle = match oracle {
            Some(o) => Some(OracleSummary {
                retain_ce: retain_loss(policy, o, corpus.retain())?.as_f64(),
                forget_success_proxy: forget_success(policy, o, corpus.forget())?.proxy,
                forget_mean_max_prob: uniformity_report(policy, o, corpus.forget())?.mean_max_prob,
            }),
            None => None,
        };
        Ok(Self {
            vocab_size: policy.vocab_size(),
            forget_positions: uni.positions,
            forget_mean_max_prob: uni.mean_max_prob,
            forget_max_max_prob: uni.max_max_prob,
            forget_mean_kl_to_uniform: uni.mean_kl_to_uniform,
            forget_mean_margin: uni.mean_margin,
            forget_max_margin: uni.max_margin,
            forget_normalized_likelihood: fs.normalized_likelihood,
            forget_greedy_match_rate: fs.greedy_match_rate,
            forget_success_proxy: fs.proxy,
            reference_forget_success_proxy: ref_fs.proxy,
            retain_greedy_match_rate: greedy_match_rate(policy, params, corpus.retain())?,
            retain_reference_ce: drift.reference_ce,
            retain_ce: drift.current_ce,
            epsilon: drift.epsilon,
            retain_satisfied: drift.satisfied,
            bound_compliance: uni.bound_compliance,
            oracle,
        })
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("vocab_size", self.vocab_size.to_string());
        put("forget.positions", self.forget_positions.to_string());
        put(
            "forget.max_prob.mean",
            self.forget_mean_max_prob.to_string(),
        );
        put("forget.max_prob.max", self.forget_max_max_prob.to_string());
        put(
            "forget.kl_to_uniform.mean",
            self.forget_mean_kl_to_uniform.to_string(),
        );
        put("forget.margin.mean", self.forget_mean_margin.to_string());
        put("forget.margin.max", self.forget_max_margin.to_string());
        put(
            "forget.normalized_likelihood",
            self.forget_normalized_likelihood.to_string(),
        );
        put(
            "forget.greedy_match_rate",
            self.forget_greedy_match_rate.to_string(),
        );
        put(
            "forget.success_proxy",
            self.forget_success_proxy.to_string(),
        );
        put(
            "reference.forget.success_proxy",
            self.reference_forget_success_proxy.to_string(),
        );
        put(
            "retain.greedy_match_rate",
            self.retain_greedy_match_rate.to_string(),
        );
        put("retain.ce.reference", self.retain_reference_ce.to_string());
        put("retain.ce", self.retain_ce.to_string());
        put("retain.epsilon", self.epsilon.to_string());
        put("retain.satisfied", self.retain_satisfied.to_string());
        put("bound_compliance", self.bound_compliance.to_string());
        if let Some(o) = &self.oracle {
            put("oracle.retain.ce", o.retain_ce.to_string());
            put(
                "oracle.forget.success_proxy",
                o.forget_success_proxy.to_string(),
            );
            put(
                "oracle.forget.max_prob.mean",
                o.forget_mean_max_prob.to_string(),
            );
        }
        out
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once(" = ").ok_or_else(|| {
                Error::InvalidArgument(format!("report line {}: expected `key = value`", i + 1))
            })?;
            map.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| -> Result<&str> {
            map.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::InvalidArgument(format!("report lacks `{k}`")))
        };
        let f = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("report `{k}` is not a number")))
        };
        let n = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("report `{k}` is not an integer")))
        };
        let oracle = if map.contains_key("oracle.retain.ce") {
            Some(OracleSummary {
                retain_ce: f("oracle.retain.ce")?,
                forget_success_proxy: f("oracle.forget.success_proxy")?,
                forget_mean_max_prob: f("oracle.forget.max_prob.mean")?,
            })
        } else {
            None
        };
        Ok(Self {
            vocab_size: n("vocab_size")?,
            forget_positions: n("forget.positions")?,
            forget_mean_max_prob: f("forget.max_prob.mean")?,
            forget_max_max_prob: f("forget.max_prob.max")?,
            forget_mean_kl_to_uniform: f("forget.kl_to_uniform.mean")?,
            forget_mean_margin: f("forget.margin.mean")?,
            forget_max_margin: f("forget.margin.max")?,
            forget_normalized_likelihood: f("forget.normalized_likelihood")?,
            forget_greedy_match_rate: f("forget.greedy_match_rate")?,
            forget_success_proxy: f("forget.success_proxy")?,
            reference_forget_success_proxy: f("reference.forget.success_proxy")?,
            retain_greedy_match_rate: f("retain.greedy_match_rate")?,
            retain_reference_ce: f("retain.ce.reference")?,
            retain_ce: f("retain.ce")?,
            epsilon: f("retain.epsilon")?,
            retain_satisfied: match get("retain.satisfied")? {
                "true" => true,
                "false" => false,
                _ => {
                    return Err(Error::InvalidArgument(
                        "report `retain.satisfied` is not a boolean".into(),
                    ))
                }
            },
            bound_compliance: f("bound_compliance")?,
            oracle,
        })
    }
}
