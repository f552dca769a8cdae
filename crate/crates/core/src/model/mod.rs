//! Autoregressive models producing per-position logits over the vocabulary.

mod checkpoint;
mod config;
mod example;
mod linear;
mod params;
mod pretrain;
pub mod tiny_lm;

use rand::Rng;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
};
pub use config::{BlockKind, ModelConfig};
pub use example::{TokenExample, TokenId};
pub use linear::LinearLogitModel;
pub use params::ParamSet;
pub use pretrain::{pretrain, pretrain_observed, PretrainOutcome, PretrainSchedule};
pub use tiny_lm::TinyLm;

use crate::error::Result;
use crate::losses::LogitMatrix;
use crate::tensor::{log_sum_exp, DenseArray, Graph, NodeId, Scalar};

/// A parameterized model that maps an example to its response logits.
pub trait Policy<T: Scalar> {
    fn vocab_size(&self) -> usize;

    fn context_window(&self) -> usize;

    fn zero_params(&self) -> ParamSet<T>;

    fn init_params<R: Rng>(&self, rng: &mut R) -> ParamSet<T>;

    /// Appends the forward pass for `example` to `g`, reading parameters from
    /// leaves named after the entries of the parameter set. The returned node
    /// has shape `[|y|, V]`.
    fn build_logits(&self, g: &mut Graph<T>, example: &TokenExample) -> Result<NodeId>;
}

/// Response logits: row `t` scores `y_t` given `x` and `y_{<t}`.
pub fn logits<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    example: &TokenExample,
) -> Result<LogitMatrix<T>> {
    let mut g = Graph::new();
    let root = policy.build_logits(&mut g, example)?;
    LogitMatrix::new(g.forward(params, root)?)
}

/// Row-wise softmax with max subtraction.
pub fn token_probabilities<T: Scalar>(logits: &LogitMatrix<T>) -> DenseArray<T> {
    let z = logits.as_array();
    let (rows, cols) = (logits.rows(), logits.vocab_size());
    let mut out = Vec::with_capacity(rows * cols);
    for t in 0..rows {
        out.extend(softmax(z.row(t)));
    }
    DenseArray::matrix(rows, cols, out).expect("same shape as logits")
}

pub fn softmax<T: Scalar>(row: &[T]) -> Vec<T> {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Teacher-forced `sum_t log p(y_t | x, y_<t)`.
pub fn sequence_log_likelihood<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    example: &TokenExample,
) -> Result<T> {
    let z = logits(policy, params, example)?;
    Ok(example
        .response
        .iter()
        .enumerate()
        .map(|(t, &y)| {
            let row = z.row(t);
            row[y as usize] - log_sum_exp(row)
        })
        .sum())
}

/// Greedy continuation of `prompt` for `len` tokens; ties go to the lowest id.
pub fn greedy_decode<T: Scalar, P: Policy<T>>(
    policy: &P,
    params: &ParamSet<T>,
    prompt: &[TokenId],
    len: usize,
) -> Result<Vec<TokenId>> {
    let mut generated: Vec<TokenId> = Vec::with_capacity(len);
    for _ in 0..len {
        // The final response token is never fed back in, so its value is irrelevant.
        let mut response = generated.clone();
        response.push(0);
        let probe = TokenExample::new(prompt.to_vec(), response);
        let z = logits(policy, params, &probe)?;
        let last = z.row(z.rows() - 1);
        generated.push(crate::tensor::argmax(last) as TokenId);
    }
    Ok(generated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> TinyLm {
        TinyLm::new(ModelConfig {
            vocab_size: 8,
            embed_dim: 4,
            context_window: 6,
            block: BlockKind::SingleAttentionPlusMlp,
            hidden_dim: 5,
        })
        .unwrap()
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let m = small();
        let p: ParamSet<f64> = m.zero_params();
        let z = logits(&m, &p, &TokenExample::new(vec![1, 2], vec![3, 4, 5])).unwrap();
        assert_eq!(z.rows(), 3);
        assert!(z.as_array().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_log_likelihood() {
        let m = TinyLm::new(ModelConfig {
            vocab_size: 4,
            ..ModelConfig::desk_default()
        })
        .unwrap();
        let p: ParamSet<f64> = m.zero_params();
        let ll =
            sequence_log_likelihood(&m, &p, &TokenExample::new(vec![0], vec![1, 2, 3])).unwrap();
        assert!((ll - 3.0 * 0.25f64.ln()).abs() < 1e-12);
        assert!((ll + 4.158883).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_token_fails() {
        let m = small();
        let p: ParamSet<f64> = m.zero_params();
        assert!(logits(&m, &p, &TokenExample::new(vec![8], vec![1])).is_err());
    }

    #[test]
    fn empty_prompt_is_supported() {
        let m = small();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: ParamSet<f64> = m.init_params(&mut rng);
        let z = logits(&m, &p, &TokenExample::new(vec![], vec![1])).unwrap();
        assert_eq!(z.rows(), 1);
    }

    #[test]
    fn softmax_of_one_hot_row() {
        let p = softmax(&[1.0f64, 0.0, 0.0, 0.0]);
        let e = 1f64.exp();
        assert!((p[0] - e / (e + 3.0)).abs() < 1e-15);
        assert!((p[0] - 0.475367).abs() < 1e-6);
    }

    #[test]
    fn softmax_shift_invariance() {
        let a = softmax(&[0.3f64, -1.2, 2.2, 0.0]);
        let b = softmax(&[100.3f64, 98.8, 102.2, 100.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mlp_only_block_has_no_attention_params() {
        let m = TinyLm::new(ModelConfig {
            block: BlockKind::MlpOnly,
            ..ModelConfig::desk_default()
        })
        .unwrap();
        let p: ParamSet<f64> = m.zero_params();
        assert!(p.get(tiny_lm::ATTN_QUERY).is_none());
        let z = logits(&m, &p, &TokenExample::new(vec![1], vec![2, 3])).unwrap();
        assert_eq!(z.rows(), 2);
    }
}
