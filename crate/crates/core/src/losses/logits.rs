use crate::error::{Error, Result};
use crate::tensor::{argmax, log_sum_exp, DenseArray, Scalar};

/// Per-position pre-softmax scores, shape `[|y|, V]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitMatrix<T>(DenseArray<T>);

impl<T: Scalar> LogitMatrix<T> {
    pub fn new(array: DenseArray<T>) -> Result<Self> {
        match array.shape() {
            [rows, cols] if *rows >= 1 && *cols >= 2 => {}
            s => {
                return Err(Error::InvalidArray(format!(
                    "logit matrix needs shape [rows >= 1, V >= 2], got {s:?}"
                )))
            }
        }
        if !array.all_finite() {
            return Err(Error::InvalidArray("non-finite logits".into()));
        }
        Ok(Self(array))
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(DenseArray::from_rows(rows)?)
    }

    pub fn rows(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn vocab_size(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn row(&self, t: usize) -> &[T] {
        self.0.row(t)
    }

    pub fn as_array(&self) -> &DenseArray<T> {
        &self.0
    }

    pub fn into_array(self) -> DenseArray<T> {
        self.0
    }
}

/// Logit margins `delta_t = max_k z_tk - mean_k z_tk` of one or more matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginStats<T> {
    pub per_position: Vec<T>,
    pub max: T,
    pub mean: T,
}

impl<T: Scalar> MarginStats<T> {
    pub fn of(logits: &LogitMatrix<T>) -> Self {
        Self::from_margins((0..logits.rows()).map(|t| margin(logits.row(t))).collect())
    }

    /// Pools every position of every matrix.
    pub fn of_batch(batch: &[LogitMatrix<T>]) -> Self {
        Self::from_margins(
            batch
                .iter()
                .flat_map(|z| (0..z.rows()).map(move |t| margin(z.row(t))))
                .collect(),
        )
    }

    fn from_margins(per_position: Vec<T>) -> Self {
        let max = per_position.iter().copied().fold(T::zero(), T::max);
        let mean = if per_position.is_empty() {
            T::zero()
        } else {
            per_position.iter().copied().sum::<T>() / T::lit(per_position.len() as f64)
        };
        Self {
            per_position,
            max,
            mean,
        }
    }
}

pub fn margin_stats<T: Scalar>(logits: &LogitMatrix<T>) -> MarginStats<T> {
    MarginStats::of(logits)
}

pub fn row_mean<T: Scalar>(row: &[T]) -> T {
    row.iter().copied().sum::<T>() / T::lit(row.len() as f64)
}

/// `max(z) - mean(z)`, clamped at zero against rounding.
pub fn margin<T: Scalar>(row: &[T]) -> T {
    (row[argmax(row)] - row_mean(row)).max(T::zero())
}

/// Squared logit margin of one row.
pub fn logit_margin_row_loss<T: Scalar>(row: &[T]) -> T {
    let d = margin(row);
    d * d
}

/// `2 delta (e_{k*} - 1/V)`, with `k*` the lowest maximizing index.
pub fn logit_margin_row_grad<T: Scalar>(row: &[T]) -> Vec<T> {
    let v = T::lit(row.len() as f64);
    let two_delta = T::lit(2.0) * (row[argmax(row)] - row_mean(row));
    let k = argmax(row);
    row.iter()
        .enumerate()
        .map(|(i, _)| {
            let indicator = if i == k { T::one() } else { T::zero() };
            two_delta * (indicator - T::one() / v)
        })
        .collect()
}

/// Cross-entropy against a one-hot target.
pub fn cross_entropy_row<T: Scalar>(row: &[T], target: usize) -> T {
    log_sum_exp(row) - row[target]
}

/// Cross-entropy against the uniform target: `lse(z) - mean(z)`.
pub fn uniform_cross_entropy_row<T: Scalar>(row: &[T]) -> T {
    log_sum_exp(row) - row_mean(row)
}

/// Upper bound on the largest softmax probability of a row whose logit
/// margin is at most `delta`:
/// `1 / (1 + (V - 1) exp(-V delta / (V - 1)))`.
///
/// Equality holds when one logit exceeds the other `V - 1` (equal) logits by
/// `V delta / (V - 1)`.
pub fn max_prob_bound(delta: f64, vocab_size: usize) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "margin must be nonnegative, got {delta}"
        )));
    }
    if vocab_size < 2 {
        return Err(Error::InvalidArgument(
            "vocabulary must have at least 2 entries".into(),
        ));
    }
    let v = vocab_size as f64;
    Ok(1.0 / (1.0 + (v - 1.0) * (-v * delta / (v - 1.0)).exp()))
}
