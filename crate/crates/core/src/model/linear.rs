use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{DenseArray, Graph, NodeId, Scalar};

use super::{ParamSet, Policy, TokenExample};

/// Bigram model whose logits are affine in the parameters:
/// `z_t = W[s_{t-1}] + b`. Any loss that is convex in the logits is convex in
/// `(W, b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLogitModel {
    vocab_size: usize,
    context_window: usize,
}

pub const WEIGHT: &str = "weight";
pub const BIAS: &str = "bias";

impl LinearLogitModel {
    pub fn new(vocab_size: usize, context_window: usize) -> Result<Self> {
        if vocab_size < 2 || context_window < 2 {
            return Err(Error::InvalidArgument(
                "linear model needs V >= 2 and context >= 2".into(),
            ));
        }
        Ok(Self {
            vocab_size,
            context_window,
        })
    }
}

impl<T: Scalar> Policy<T> for LinearLogitModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn context_window(&self) -> usize {
        self.context_window
    }

    fn zero_params(&self) -> ParamSet<T> {
        let v = self.vocab_size;
        let mut p = ParamSet::new();
        p.push(WEIGHT, DenseArray::zeros(&[v, v]));
        p.push(BIAS, DenseArray::zeros(&[v]));
        p
    }

    fn init_params<R: Rng>(&self, rng: &mut R) -> ParamSet<T> {
        let normal = Normal::new(0.0, super::tiny_lm::INIT_STD).expect("valid std");
        let mut p = Policy::<T>::zero_params(self);
        for v in p.get_mut(WEIGHT).expect("weight").data_mut() {
            *v = T::lit(normal.sample(rng));
        }
        p
    }

    fn build_logits(&self, g: &mut Graph<T>, example: &TokenExample) -> Result<NodeId> {
        example.validate(self.vocab_size, self.context_window)?;
        if example.prompt.is_empty() {
            return Err(Error::InvalidExample(
                "linear model needs a nonempty prompt".into(),
            ));
        }
        let seq = example.full_sequence();
        let start = example.prompt.len();
        let prev = (start..seq.len()).map(|i| seq[i - 1] as usize).collect();
        let w = g.leaf(WEIGHT);
        let b = g.leaf(BIAS);
        let rows = g.embed(w, prev);
        Ok(g.add_row(rows, b))
    }
}
