use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TokenExample, TokenId};

/// Disjoint forget and retain splits over a vocabulary of `vocab_size` ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    forget: Vec<TokenExample>,
    retain: Vec<TokenExample>,
    vocab_size: usize,
}

impl Corpus {
    pub fn new(
        forget: Vec<TokenExample>,
        retain: Vec<TokenExample>,
        vocab_size: usize,
    ) -> Result<Self> {
        if forget.is_empty() || retain.is_empty() {
            return Err(Error::InvalidArgument(
                "both forget and retain splits must be nonempty".into(),
            ));
        }
        if forget.len() > retain.len() {
            return Err(Error::InvalidArgument(format!(
                "forget split ({}) larger than retain split ({})",
                forget.len(),
                retain.len()
            )));
        }
        for ex in forget.iter().chain(&retain) {
            ex.validate(vocab_size, usize::MAX)?;
        }
        let retain_set: HashSet<&TokenExample> = retain.iter().collect();
        if let Some(shared) = forget.iter().find(|ex| retain_set.contains(ex)) {
            return Err(Error::InvalidArgument(format!(
                "example {shared:?} appears in both splits"
            )));
        }
        Ok(Self {
            forget,
            retain,
            vocab_size,
        })
    }

    pub fn forget(&self) -> &[TokenExample] {
        &self.forget
    }

    pub fn retain(&self) -> &[TokenExample] {
        &self.retain
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Retain followed by forget examples; the reference model's training set.
    pub fn all(&self) -> Vec<TokenExample> {
        self.retain.iter().chain(&self.forget).cloned().collect()
    }

    pub fn max_len(&self) -> usize {
        self.forget
            .iter()
            .chain(&self.retain)
            .map(TokenExample::total_len)
            .max()
            .unwrap_or(0)
    }
}

/// Parameters of the synthetic question/answer corpus.
///
/// Token ids are partitioned into entity ids `[0, E)`, question ids
/// `[E, E + Q)` and answer ids `[E + Q, V)`, where `Q` is
/// `questions_per_entity` and `E = (n_forget + n_retain) / Q`. Every prompt
/// is `[entity, question]`. The response is an entity signature, then a
/// question-specific token, then one token unique to the pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub vocab_size: usize,
    pub n_forget: usize,
    pub n_retain: usize,
    pub questions_per_entity: usize,
    pub answer_len: usize,
    pub context_window: usize,
}

impl CorpusSpec {
    /// 20 forget / 180 retain examples (10 questions per entity, 2 of 20
    /// entities forgotten), V = 64, four-token answers.
    pub fn desk_default() -> Self {
        Self {
            vocab_size: 64,
            n_forget: 20,
            n_retain: 180,
            questions_per_entity: 10,
            answer_len: 4,
            context_window: 16,
        }
    }
}

const PROMPT_LEN: usize = 2;
const MIN_ANSWER_TOKENS: usize = 2;

pub fn generate_toy_corpus(spec: &CorpusSpec, seed: u64) -> Result<Corpus> {
    let q = spec.questions_per_entity;
    if spec.n_forget == 0 || spec.n_retain == 0 || q == 0 || spec.answer_len == 0 {
        return Err(Error::InfeasibleCorpus(
            "counts, questions per entity and answer length must be positive".into(),
        ));
    }
    if !spec.n_forget.is_multiple_of(q) || !spec.n_retain.is_multiple_of(q) {
        return Err(Error::InfeasibleCorpus(format!(
            "split sizes {} / {} are not multiples of {q} questions per entity",
            spec.n_forget, spec.n_retain
        )));
    }
    if spec.n_forget > spec.n_retain {
        return Err(Error::InfeasibleCorpus(
            "forget split cannot exceed retain split".into(),
        ));
    }
    if PROMPT_LEN + spec.answer_len > spec.context_window {
        return Err(Error::InfeasibleCorpus(format!(
            "prompt ({PROMPT_LEN}) plus answer ({}) exceeds context window {}",
            spec.answer_len, spec.context_window
        )));
    }
    let forget_entities = spec.n_forget / q;
    let entities = forget_entities + spec.n_retain / q;
    let reserved = entities + q;
    if reserved + MIN_ANSWER_TOKENS > spec.vocab_size {
        return Err(Error::InfeasibleCorpus(format!(
            "{entities} entities and {q} questions leave fewer than \
             {MIN_ANSWER_TOKENS} answer tokens in a vocabulary of {}",
            spec.vocab_size
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let answer_tokens: Vec<TokenId> = (reserved as TokenId..spec.vocab_size as TokenId).collect();
    let draw = |rng: &mut ChaCha8Rng| answer_tokens[rng.random_range(0..answer_tokens.len())];

    let signature_len = spec.answer_len.saturating_sub(2);
    let signatures: Vec<Vec<TokenId>> = (0..entities)
        .map(|_| (0..signature_len).map(|_| draw(&mut rng)).collect())
        .collect();
    let question_tokens: Vec<TokenId> = (0..q).map(|_| draw(&mut rng)).collect();

    let mut entity_order: Vec<usize> = (0..entities).collect();
    entity_order.shuffle(&mut rng);

    let mut forget = Vec::with_capacity(spec.n_forget);
    let mut retain = Vec::with_capacity(spec.n_retain);
    for (rank, &entity) in entity_order.iter().enumerate() {
        for question in 0..q {
            let mut response = signatures[entity].clone();
            if spec.answer_len >= 2 {
                response.push(question_tokens[question]);
            }
            response.push(draw(&mut rng));
            let prompt = vec![entity as TokenId, (entities + question) as TokenId];
            let example = TokenExample::new(prompt, response);
            if rank < forget_entities {
                forget.push(example);
            } else {
                retain.push(example);
            }
        }
    }
    Corpus::new(forget, retain, spec.vocab_size)
}
