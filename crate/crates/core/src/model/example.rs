use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// A prompt and the response the model is scored on.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenExample {
    pub prompt: Vec<TokenId>,
    pub response: Vec<TokenId>,
}

impl TokenExample {
    pub fn new(prompt: Vec<TokenId>, response: Vec<TokenId>) -> Self {
        Self { prompt, response }
    }

    /// Prompt followed by response.
    pub fn full_sequence(&self) -> Vec<TokenId> {
        let mut s = self.prompt.clone();
        s.extend_from_slice(&self.response);
        s
    }

    pub fn total_len(&self) -> usize {
        self.prompt.len() + self.response.len()
    }

    pub fn validate(&self, vocab_size: usize, context_window: usize) -> Result<()> {
        if self.response.is_empty() {
            return Err(Error::InvalidExample("empty response".into()));
        }
        if self.total_len() > context_window {
            return Err(Error::InvalidExample(format!(
                "length {} exceeds context window {context_window}",
                self.total_len()
            )));
        }
        if let Some(&bad) = self
            .prompt
            .iter()
            .chain(&self.response)
            .find(|&&t| t as usize >= vocab_size)
        {
            return Err(Error::InvalidExample(format!(
                "token id {bad} out of range for vocabulary of {vocab_size}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let ok = TokenExample::new(vec![1, 2], vec![3]);
        assert!(ok.validate(4, 3).is_ok());
        assert!(ok.validate(3, 3).is_err());
        assert!(ok.validate(4, 2).is_err());
        assert!(TokenExample::new(vec![1], vec![]).validate(4, 4).is_err());
    }
}
