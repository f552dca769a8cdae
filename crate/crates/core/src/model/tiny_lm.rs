//! One-block causal language model.
//!
//! ```text
//! h0 = [bos; tok_emb[s_0 .. s_{L-2}]] + pos_emb[0 .. L-1]
//! h1 = h0 + softmax_causal(q k^T / sqrt(d)) v W_o      (attention block only)
//! h2 = h1 + tanh(h1 W_in + b_in) W_out + b_out
//! z  = h2 W_u + b_u
//! ```
//!
//! where `s = x ++ y` and `L = |s|`. Row `i` of `z` scores token `s_i`, so the
//! response logits are rows `|x| .. L-1`. The learned `bos` row lets the
//! first position predict with an empty prompt.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::tensor::{DenseArray, Graph, NodeId, Scalar};

use super::{BlockKind, ModelConfig, ParamSet, Policy, TokenExample};

pub const INIT_STD: f64 = 0.02;

pub const TOKEN_EMBEDDING: &str = "tok_emb";
pub const POSITION_EMBEDDING: &str = "pos_emb";
pub const BOS: &str = "bos";
pub const ATTN_QUERY: &str = "attn_q";
pub const ATTN_KEY: &str = "attn_k";
pub const ATTN_VALUE: &str = "attn_v";
pub const ATTN_OUTPUT: &str = "attn_o";
pub const MLP_IN: &str = "mlp_in";
pub const MLP_IN_BIAS: &str = "mlp_in_bias";
pub const MLP_OUT: &str = "mlp_out";
pub const MLP_OUT_BIAS: &str = "mlp_out_bias";
pub const UNEMBED: &str = "unembed";
pub const UNEMBED_BIAS: &str = "unembed_bias";

#[derive(Clone, Debug, PartialEq)]
pub struct TinyLm {
    config: ModelConfig,
}

impl TinyLm {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Parameter names and shapes in checkpoint order.
    pub fn layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        let ModelConfig {
            vocab_size: v,
            embed_dim: d,
            context_window: c,
            hidden_dim: h,
            block,
        } = self.config;
        let mut out = vec![
            (TOKEN_EMBEDDING, vec![v, d]),
            (POSITION_EMBEDDING, vec![c, d]),
            (BOS, vec![1, d]),
        ];
        if block == BlockKind::SingleAttentionPlusMlp {
            out.extend([
                (ATTN_QUERY, vec![d, d]),
                (ATTN_KEY, vec![d, d]),
                (ATTN_VALUE, vec![d, d]),
                (ATTN_OUTPUT, vec![d, d]),
            ]);
        }
        out.extend([
            (MLP_IN, vec![d, h]),
            (MLP_IN_BIAS, vec![h]),
            (MLP_OUT, vec![h, d]),
            (MLP_OUT_BIAS, vec![d]),
            (UNEMBED, vec![d, v]),
            (UNEMBED_BIAS, vec![v]),
        ]);
        out
    }

    fn is_bias(name: &str) -> bool {
        name.ends_with("_bias")
    }
}

impl<T: Scalar> Policy<T> for TinyLm {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn context_window(&self) -> usize {
        self.config.context_window
    }

    fn zero_params(&self) -> ParamSet<T> {
        let mut p = ParamSet::new();
        for (name, shape) in self.layout() {
            p.push(name, DenseArray::zeros(&shape));
        }
        p
    }

    /// Weights from N(0, INIT_STD^2); biases start at zero.
    fn init_params<R: Rng>(&self, rng: &mut R) -> ParamSet<T> {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut p = ParamSet::new();
        for (name, shape) in self.layout() {
            let n: usize = shape.iter().product();
            let data = if Self::is_bias(name) {
                vec![T::zero(); n]
            } else {
                (0..n).map(|_| T::lit(normal.sample(rng))).collect()
            };
            p.push(name, DenseArray::new(shape, data).expect("layout shape"));
        }
        p
    }

    fn build_logits(&self, g: &mut Graph<T>, example: &TokenExample) -> Result<NodeId> {
        example.validate(self.config.vocab_size, self.config.context_window)?;
        let seq = example.full_sequence();
        let len = seq.len();

        let bos = g.leaf(BOS);
        let tokens = if len > 1 {
            let emb = g.leaf(TOKEN_EMBEDDING);
            let ids = seq[..len - 1].iter().map(|&t| t as usize).collect();
            let looked_up = g.embed(emb, ids);
            g.concat(vec![bos, looked_up])
        } else {
            bos
        };
        let pos_table = g.leaf(POSITION_EMBEDDING);
        let pos = g.embed(pos_table, (0..len).collect());
        let mut h = g.add(tokens, pos);

        if self.config.block == BlockKind::SingleAttentionPlusMlp {
            let wq = g.leaf(ATTN_QUERY);
            let wk = g.leaf(ATTN_KEY);
            let wv = g.leaf(ATTN_VALUE);
            let wo = g.leaf(ATTN_OUTPUT);
            let q = g.matmul(h, wq);
            let k = g.matmul(h, wk);
            let v = g.matmul(h, wv);
            let kt = g.transpose(k);
            let scores = g.matmul(q, kt);
            let scaled = g.scale(scores, T::lit(1.0 / (self.config.embed_dim as f64).sqrt()));
            let weights = g.causal_softmax(scaled);
            let attended = g.matmul(weights, v);
            let out = g.matmul(attended, wo);
            h = g.add(h, out);
        }

        let w_in = g.leaf(MLP_IN);
        let b_in = g.leaf(MLP_IN_BIAS);
        let w_out = g.leaf(MLP_OUT);
        let b_out = g.leaf(MLP_OUT_BIAS);
        let pre = g.matmul(h, w_in);
        let pre = g.add_row(pre, b_in);
        let act = g.tanh(pre);
        let mlp = g.matmul(act, w_out);
        let mlp = g.add_row(mlp, b_out);
        let h = g.add(h, mlp);

        let w_u = g.leaf(UNEMBED);
        let b_u = g.leaf(UNEMBED_BIAS);
        let all = g.matmul(h, w_u);
        let all = g.add_row(all, b_u);
        Ok(g.embed(all, (example.prompt.len()..len).collect()))
    }
}
