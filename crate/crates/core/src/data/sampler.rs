use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::TokenExample;

use super::Corpus;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPair {
    pub forget: Vec<TokenExample>,
    pub retain: Vec<TokenExample>,
}

/// Stream offset separating the retain shuffles from the forget shuffles.
const RETAIN_STREAM_OFFSET: u64 = 0xD1B5_4A32_D192_ED03;

/// Pairs forget and retain batches.
///
/// An epoch is one freshly shuffled pass over the forget split (the last
/// forget batch may be short). Retain batches are always full and are drawn
/// cyclically from an independently shuffled order that is reshuffled each
/// time it is exhausted.
#[derive(Clone, Debug)]
pub struct BatchSampler<'a> {
    corpus: &'a Corpus,
    forget_batch: usize,
    retain_batch: usize,
    forget_rng: ChaCha8Rng,
    retain_rng: ChaCha8Rng,
    retain_order: Vec<usize>,
    retain_cursor: usize,
}

impl<'a> BatchSampler<'a> {
    pub fn new(
        corpus: &'a Corpus,
        forget_batch: usize,
        retain_batch: usize,
        seed: u64,
    ) -> Result<Self> {
        if forget_batch == 0 || retain_batch == 0 {
            return Err(Error::InvalidArgument(
                "batch sizes must be at least 1".into(),
            ));
        }
        let n_retain = corpus.retain().len();
        Ok(Self {
            corpus,
            forget_batch,
            retain_batch,
            forget_rng: ChaCha8Rng::seed_from_u64(seed),
            retain_rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(RETAIN_STREAM_OFFSET)),
            retain_order: (0..n_retain).collect(),
            retain_cursor: n_retain,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.corpus.forget().len().div_ceil(self.forget_batch)
    }

    fn next_retain_batch(&mut self) -> Vec<TokenExample> {
        let mut batch = Vec::with_capacity(self.retain_batch);
        while batch.len() < self.retain_batch {
            if self.retain_cursor == self.retain_order.len() {
                self.retain_order.shuffle(&mut self.retain_rng);
                self.retain_cursor = 0;
            }
            batch.push(self.corpus.retain()[self.retain_order[self.retain_cursor]].clone());
            self.retain_cursor += 1;
        }
        batch
    }

    pub fn epoch(&mut self) -> Vec<BatchPair> {
        let mut order: Vec<usize> = (0..self.corpus.forget().len()).collect();
        order.shuffle(&mut self.forget_rng);
        order
            .chunks(self.forget_batch)
            .map(|chunk| BatchPair {
                forget: chunk
                    .iter()
                    .map(|&i| self.corpus.forget()[i].clone())
                    .collect(),
                retain: self.next_retain_batch(),
            })
            .collect()
    }
}

/// The first `epochs` epochs of a [`BatchSampler`], flattened.
pub fn batches(
    corpus: &Corpus,
    forget_batch: usize,
    retain_batch: usize,
    seed: u64,
    epochs: usize,
) -> Result<Vec<BatchPair>> {
    let mut sampler = BatchSampler::new(corpus, forget_batch, retain_batch, seed)?;
    Ok((0..epochs).flat_map(|_| sampler.epoch()).collect())
}
