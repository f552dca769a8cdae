//! Synthetic forget/retain corpora, their file format, and batch pairing.

mod corpus;
mod io;
mod sampler;

pub use corpus::{generate_toy_corpus, Corpus, CorpusSpec};
pub use io::{corpus_from_str, corpus_to_string, load_corpus, save_corpus};
pub use sampler::{batches, BatchPair, BatchSampler};
