//! Corpus ingestion, vocabulary building, partitioning and synthetic grammars.

mod pcfg;
mod vocab;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Mat;
use crate::error::{Error, Result};

pub use pcfg::{desk_grammar, sample_pcfg, Pcfg, Rule, Symbol, DESK_GRAMMAR};
pub use vocab::{Vocabulary, EOS, PAD, UNK};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Word,
    Character,
}

impl FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(Level::Word),
            "character" | "char" => Ok(Level::Character),
            other => Err(Error::Invalid(format!("unknown tokenization level {other:?}"))),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Word => "word",
            Level::Character => "character",
        })
    }
}

impl Level {
    /// Word level splits on ASCII whitespace without case folding; character
    /// level yields one token per Unicode scalar value.
    pub fn tokenize<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Level::Word => line.split_ascii_whitespace().collect(),
            Level::Character => line.char_indices().map(|(i, c)| &line[i..i + c.len_utf8()]).collect(),
        }
    }

    fn join(&self, tokens: &[&str]) -> String {
        match self {
            Level::Word => tokens.join(" "),
            Level::Character => tokens.concat(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TokenizedCorpus {
    /// Token ids; every sentence ends with `[eos]`.
    pub sentences: Vec<Vec<usize>>,
    pub vocab: Vocabulary,
    pub level: Level,
}

impl TokenizedCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Text for a token sequence, stopping at the first `[eos]`.
    pub fn render(&self, ids: &[usize]) -> String {
        render(&self.vocab, self.level, ids)
    }

    /// One sentence per line, LF-terminated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&self.render(s));
            out.push('\n');
        }
        out
    }

    fn with_sentences(&self, sentences: Vec<Vec<usize>>) -> Self {
        TokenizedCorpus {
            sentences,
            vocab: self.vocab.clone(),
            level: self.level,
        }
    }
}

pub fn render(vocab: &Vocabulary, level: Level, ids: &[usize]) -> String {
    let toks: Vec<&str> = ids
        .iter()
        .take_while(|&&id| id != Vocabulary::EOS_ID)
        .map(|&id| vocab.token(id).unwrap_or(UNK))
        .collect();
    level.join(&toks)
}

#[derive(Clone, Debug)]
pub struct IngestOptions {
    pub level: Level,
    pub max_vocab: usize,
    /// Lines longer than this many characters are truncated.
    pub max_line_chars: usize,
}

impl IngestOptions {
    pub fn new(level: Level, max_vocab: usize) -> Self {
        IngestOptions {
            level,
            max_vocab,
            max_line_chars: 10_000,
        }
    }
}

/// Deduplicates, builds the vocabulary and encodes one sentence per line.
pub fn ingest<I, L>(lines: I, level: Level, max_vocab: usize) -> Result<TokenizedCorpus>
where
    I: IntoIterator<Item = L>,
    L: AsRef<str>,
{
    ingest_with(lines, &IngestOptions::new(level, max_vocab))
}

pub fn ingest_with<I, L>(lines: I, opts: &IngestOptions) -> Result<TokenizedCorpus>
where
    I: IntoIterator<Item = L>,
    L: AsRef<str>,
{
    let mut seen = HashSet::new();
    let mut kept: Vec<String> = Vec::new();
    for (lineno, line) in lines.into_iter().enumerate() {
        let mut line = line.as_ref().trim_end_matches('\r').to_string();
        if let Some((cut, _)) = line.char_indices().nth(opts.max_line_chars) {
            log::warn!(
                "line {} longer than {} characters; truncated",
                lineno + 1,
                opts.max_line_chars
            );
            line.truncate(cut);
        }
        if opts.level.tokenize(&line).is_empty() {
            continue;
        }
        if seen.insert(line.clone()) {
            kept.push(line);
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut counts: HashMap<String, usize> = HashMap::new();
    for line in &kept {
        for tok in opts.level.tokenize(line) {
            *counts.entry(tok.to_string()).or_default() += 1;
        }
    }
    let vocab = Vocabulary::from_counts(&counts, opts.max_vocab)?;

    // Lines that differ only in out-of-vocabulary words collapse once encoded.
    let mut seen_ids = HashSet::new();
    let mut sentences = Vec::with_capacity(kept.len());
    for line in &kept {
        let mut ids: Vec<usize> = opts.level.tokenize(line).into_iter().map(|t| vocab.id(t)).collect();
        ids.push(Vocabulary::EOS_ID);
        if seen_ids.insert(ids.clone()) {
            sentences.push(ids);
        }
    }
    Ok(TokenizedCorpus {
        sentences,
        vocab,
        level: opts.level,
    })
}

/// Encodes text against an existing vocabulary without deduplication.
pub fn encode_lines<I, L>(lines: I, vocab: &Vocabulary, level: Level) -> TokenizedCorpus
where
    I: IntoIterator<Item = L>,
    L: AsRef<str>,
{
    let sentences = lines
        .into_iter()
        .filter_map(|l| {
            let toks = level.tokenize(l.as_ref());
            if toks.is_empty() {
                return None;
            }
            let mut ids: Vec<usize> = toks.into_iter().map(|t| vocab.id(t)).collect();
            ids.push(Vocabulary::EOS_ID);
            Some(ids)
        })
        .collect();
    TokenizedCorpus {
        sentences,
        vocab: vocab.clone(),
        level,
    }
}

/// Seeded shuffle, round-robin assignment to `parts` partitions; partition 0 is
/// returned as the held-out set and the rest are concatenated as training data.
pub fn partition(corpus: &TokenizedCorpus, parts: usize, seed: u64) -> Result<(TokenizedCorpus, TokenizedCorpus)> {
    if parts < 2 {
        return Err(Error::Invalid(format!("partition needs at least 2 parts, got {parts}")));
    }
    if parts > corpus.len() {
        return Err(Error::Invalid(format!(
            "cannot split {} sentences into {parts} partitions",
            corpus.len()
        )));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut heldout = Vec::new();
    let mut train = Vec::new();
    for (pos, idx) in order.into_iter().enumerate() {
        let s = corpus.sentences[idx].clone();
        if pos % parts == 0 {
            heldout.push(s);
        } else {
            train.push(s);
        }
    }
    Ok((corpus.with_sentences(train), corpus.with_sentences(heldout)))
}

/// `T×V` indicator matrix of a token sequence.
pub fn one_hot(sentence: &[usize], vocab_size: usize) -> Result<Mat<f64>> {
    let mut m = Mat::zeros(sentence.len(), vocab_size);
    for (t, &id) in sentence.iter().enumerate() {
        if id >= vocab_size {
            return Err(Error::Invalid(format!(
                "token id {id} out of range for vocabulary of {vocab_size}"
            )));
        }
        m.data[t * vocab_size + id] = 1.0;
    }
    Ok(m)
}
