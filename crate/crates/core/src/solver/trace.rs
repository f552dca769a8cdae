use crate::tensor::Scalar;

use super::dual::dual_step;

pub const TRACE_HEADER: &str =
    "epoch,step,forget_loss,retain_loss,lambda,epsilon,violation,margin_mean";

/// One processed batch pair. Losses are measured before the primal step;
/// `lambda` is the multiplier after any dual update at this step.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord<T> {
    /// 1-based epoch.
    pub epoch: usize,
    /// 1-based step counted across the whole run.
    pub step: usize,
    pub forget_loss: T,
    pub retain_loss: T,
    pub lambda: T,
    pub epsilon: T,
    pub violation: T,
    pub margin_mean: T,
    /// Value fed to the dual update at this step, if one fired.
    pub dual_signal: Option<T>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace<T> {
    pub records: Vec<TraceRecord<T>>,
}

impl<T: Scalar> TrainTrace<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lambdas(&self) -> Vec<T> {
        self.records.iter().map(|r| r.lambda).collect()
    }

    /// Comma-separated export, values with 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let cols = [
                r.forget_loss,
                r.retain_loss,
                r.lambda,
                r.epsilon,
                r.violation,
                r.margin_mean,
            ]
            .map(|v| format_significant(v.as_f64(), 12));
            out.push_str(&format!("{},{},{}\n", r.epoch, r.step, cols.join(",")));
        }
        out
    }
}

/// Replays the multiplier from the recorded dual signals.
pub fn replay_lambdas<T: Scalar>(records: &[TraceRecord<T>], lambda0: T, eta_lambda: T) -> Vec<T> {
    let mut lambda = lambda0;
    records
        .iter()
        .map(|r| {
            if let Some(signal) = r.dual_signal {
                lambda = dual_step(lambda, signal, r.epsilon, eta_lambda);
            }
            lambda
        })
        .collect()
}

/// `%.{digits}g`-style formatting.
pub fn format_significant(x: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
