//! Line-oriented corpus files.
//!
//! ```text
//! # vocab_size = 64
//! 3 21 | 40 41 55 60 | forget
//! 7 21 | 33 52 55 47 | retain
//! ```
//!
//! The first line declares the vocabulary size. Every other non-empty line is
//! `prompt-ids | response-ids | split-tag` with space-separated decimal ids
//! and a tag of `forget` or `retain`. Forget records are written first.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{TokenExample, TokenId};

use super::Corpus;

const VOCAB_DIRECTIVE: &str = "# vocab_size = ";

pub fn corpus_to_string(corpus: &Corpus) -> String {
    let mut out = format!("{VOCAB_DIRECTIVE}{}\n", corpus.vocab_size());
    let join = |ids: &[TokenId]| {
        ids.iter()
            .map(TokenId::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    };
    for (tag, split) in [("forget", corpus.forget()), ("retain", corpus.retain())] {
        for ex in split {
            writeln!(out, "{} | {} | {tag}", join(&ex.prompt), join(&ex.response))
                .expect("string write");
        }
    }
    out
}

pub fn corpus_from_str(text: &str, path: &Path) -> Result<Corpus> {
    let err = |line: usize, detail: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (first_no, first) = lines
        .next()
        .ok_or_else(|| err(1, "empty corpus file".into()))?;
    let vocab_size: usize = first
        .strip_prefix(VOCAB_DIRECTIVE)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| err(first_no, format!("expected `{VOCAB_DIRECTIVE}<n>`")))?;

    let mut forget = Vec::new();
    let mut retain = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        let [prompt, response, tag] = fields.as_slice() else {
            return Err(err(
                lineno,
                format!("expected 3 `|`-separated fields, got {}", fields.len()),
            ));
        };
        let parse_ids = |s: &str| -> Result<Vec<TokenId>> {
            s.split_whitespace()
                .map(|t| {
                    let id: TokenId = t
                        .parse()
                        .map_err(|_| err(lineno, format!("bad token id `{t}`")))?;
                    if id as usize >= vocab_size {
                        return Err(err(
                            lineno,
                            format!("token id {id} out of range for vocabulary of {vocab_size}"),
                        ));
                    }
                    Ok(id)
                })
                .collect()
        };
        let example = TokenExample::new(parse_ids(prompt)?, parse_ids(response)?);
        if example.response.is_empty() {
            return Err(err(lineno, "empty response".into()));
        }
        match *tag {
            "forget" => forget.push(example),
            "retain" => retain.push(example),
            other => return Err(err(lineno, format!("unknown split tag `{other}`"))),
        }
    }
    if forget.is_empty() {
        return Err(err(0, "forget split is empty".into()));
    }
    Corpus::new(forget, retain, vocab_size).map_err(|e| err(0, e.to_string()))
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    fs::write(path, corpus_to_string(corpus))?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    corpus_from_str(&fs::read_to_string(path)?, path)
}
