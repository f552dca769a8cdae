use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    MlpOnly,
    SingleAttentionPlusMlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub context_window: usize,
    pub block: BlockKind,
    pub hidden_dim: usize,
}

impl ModelConfig {
    /// V = 64, d = 32, context 16, attention + MLP with 64 hidden units.
    pub fn desk_default() -> Self {
        Self {
            vocab_size: 64,
            embed_dim: 32,
            context_window: 16,
            block: BlockKind::SingleAttentionPlusMlp,
            hidden_dim: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::InvalidArgument(
                "vocab_size must be at least 2".into(),
            ));
        }
        if self.context_window < 2 {
            return Err(Error::InvalidArgument(
                "context_window must be at least 2".into(),
            ));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::InvalidArgument(
                "embed_dim and hidden_dim must be positive".into(),
            ));
        }
        Ok(())
    }
}
