//! %-IN-TEST-n overlap against a held-out set, and sentence novelty.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::Rng;

use crate::corpus::{TokenizedCorpus, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{sample_hard, sample_noise, Generator, SampleMode};

pub const DEFAULT_EVAL_COUNT: usize = 640;
pub const MAX_N: usize = 4;

/// Tokens up to (not including) the first `[eos]`.
fn content(seq: &[usize]) -> &[usize] {
    let end = seq.iter().position(|&id| id == Vocabulary::EOS_ID).unwrap_or(seq.len());
    &seq[..end]
}

/// Contiguous n-grams of `seq` before its first `[eos]`, skipping any window
/// that contains `[pad]`.
pub fn ngrams(seq: &[usize], n: usize) -> impl Iterator<Item = &[usize]> {
    let body = content(seq);
    let windows: Box<dyn Iterator<Item = &[usize]>> = if n == 0 || body.len() < n {
        Box::new(std::iter::empty())
    } else {
        Box::new(body.windows(n))
    };
    windows.filter(|w| !w.contains(&Vocabulary::PAD_ID))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NGramIndex {
    sets: Vec<HashSet<Vec<usize>>>,
}

impl NGramIndex {
    pub fn max_n(&self) -> usize {
        self.sets.len()
    }

    pub fn contains(&self, gram: &[usize]) -> bool {
        let n = gram.len();
        n >= 1 && n <= self.sets.len() && self.sets[n - 1].contains(gram)
    }

    pub fn len_n(&self, n: usize) -> usize {
        self.sets.get(n.wrapping_sub(1)).map_or(0, HashSet::len)
    }
}

pub fn build_index(heldout: &TokenizedCorpus, max_n: usize) -> Result<NGramIndex> {
    if heldout.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if max_n == 0 {
        return Err(Error::Invalid("max_n must be at least 1".into()));
    }
    let mut sets = vec![HashSet::new(); max_n];
    for s in &heldout.sentences {
        for (k, set) in sets.iter_mut().enumerate() {
            set.extend(ngrams(s, k + 1).map(<[usize]>::to_vec));
        }
    }
    Ok(NGramIndex { sets })
}

/// Share of the samples' n-gram occurrences (with multiplicity) found in the
/// index; 0 when the samples contain no n-grams.
pub fn percent_in_test_n(samples: &[Vec<usize>], index: &NGramIndex, n: usize) -> Result<f64> {
    if n == 0 || n > index.max_n() {
        return Err(Error::Invalid(format!("n must lie in 1..={}, got {n}", index.max_n())));
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for s in samples {
        for g in ngrams(s, n) {
            total += 1;
            if index.contains(g) {
                hits += 1;
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { hits as f64 / total as f64 })
}

/// Sentences of a corpus as a lookup set, without their `[eos]`.
pub fn sentence_set(corpus: &TokenizedCorpus) -> HashSet<Vec<usize>> {
    corpus.sentences.iter().map(|s| content(s).to_vec()).collect()
}

/// Fraction of generated sentences (with multiplicity) that are not a complete
/// corpus sentence.
pub fn novelty_score(generated: &[Vec<usize>], corpus: &TokenizedCorpus) -> Result<f64> {
    NoveltyTracker::new(corpus).score_of(generated)
}

/// Novelty accumulated over every sample emitted during a run.
#[derive(Clone, Debug)]
pub struct NoveltyTracker {
    known: HashSet<Vec<usize>>,
    pub novel: u64,
    pub total: u64,
}

impl NoveltyTracker {
    pub fn new(corpus: &TokenizedCorpus) -> Self {
        NoveltyTracker {
            known: sentence_set(corpus),
            novel: 0,
            total: 0,
        }
    }

    fn count(&self, generated: &[Vec<usize>]) -> u64 {
        generated.iter().filter(|g| !self.known.contains(content(g))).count() as u64
    }

    pub fn score_of(&self, generated: &[Vec<usize>]) -> Result<f64> {
        if generated.is_empty() {
            return Err(Error::Invalid("novelty of an empty sample list".into()));
        }
        Ok(self.count(generated) as f64 / generated.len() as f64)
    }

    pub fn add(&mut self, generated: &[Vec<usize>]) {
        self.novel += self.count(generated);
        self.total += generated.len() as u64;
    }

    pub fn score(&self) -> Option<f64> {
        (self.total > 0).then(|| self.novel as f64 / self.total as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// `percent_in_test[n-1]` is %-IN-TEST-n.
    pub percent_in_test: [f64; MAX_N],
    pub novelty: f64,
    pub sample_count: usize,
    pub samples: Vec<String>,
}

impl EvalReport {
    pub fn key_values(&self) -> BTreeMap<String, f64> {
        let mut kv = BTreeMap::new();
        for (k, v) in self.percent_in_test.iter().enumerate() {
            kv.insert(format!("percent_in_test_{}", k + 1), *v);
        }
        kv.insert("novelty".into(), self.novelty);
        kv.insert("sample_count".into(), self.sample_count as f64);
        kv
    }

    /// Readable summary followed by a `[metrics]` block of `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "evaluation over {} generated sequences", self.sample_count);
        for (name, v) in ["unigrams", "bigrams", "trigrams", "quadgrams"]
            .iter()
            .zip(&self.percent_in_test)
        {
            let _ = writeln!(s, "  %-in-test {name:<10} {v:.4}");
        }
        let _ = writeln!(s, "  novelty            {:.4}", self.novelty);
        let _ = writeln!(s, "first samples:");
        for line in self.samples.iter().take(5) {
            let _ = writeln!(s, "  \"{line}\"");
        }
        s.push_str("\n[metrics]\n");
        for (k, v) in self.key_values() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn samples_text(&self) -> String {
        let mut s = String::new();
        for line in &self.samples {
            s.push_str(line);
            s.push('\n');
        }
        s
    }
}

/// Reads the `[metrics]` block of a report written by [`EvalReport::to_text`].
pub fn parse_metrics_block(text: &str) -> BTreeMap<String, f64> {
    text.lines()
        .skip_while(|l| l.trim() != "[metrics]")
        .skip(1)
        .filter_map(|l| {
            let (k, v) = l.split_once('=')?;
            Some((k.trim().to_string(), v.trim().parse().ok()?))
        })
        .collect()
}

/// Draws `count` argmax sequences of `length` steps, generated in fixed-size chunks.
pub fn draw_samples(gen: &Generator, count: usize, length: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    const CHUNK: usize = 128;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let b = CHUNK.min(count - out.len());
        let z = sample_noise(rng, b, gen.noise_dim);
        let batch = gen.generate_batch::<f64>(&z, length, &[])?;
        for i in 0..b {
            out.push(sample_hard(&batch.sample(i), SampleMode::Argmax, rng));
        }
    }
    Ok(out)
}

/// Generates `count` sequences of `length` steps and scores them.
pub fn evaluate(
    gen: &Generator,
    index: &NGramIndex,
    corpus: &TokenizedCorpus,
    count: usize,
    length: usize,
    rng: &mut impl Rng,
) -> Result<EvalReport> {
    let samples = draw_samples(gen, count, length, rng)?;
    let mut pit = [0.0; MAX_N];
    for (k, slot) in pit.iter_mut().enumerate().take(index.max_n()) {
        *slot = percent_in_test_n(&samples, index, k + 1)?;
    }
    let novelty = if samples.is_empty() {
        0.0
    } else {
        novelty_score(&samples, corpus)?
    };
    Ok(EvalReport {
        percent_in_test: pit,
        novelty,
        sample_count: samples.len(),
        samples: samples.iter().map(|s| corpus.render(s)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{encode_lines, Level};

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens(["a", "b", "c", "x", "y"].map(String::from)).unwrap()
    }

    fn corpus(lines: &[&str]) -> TokenizedCorpus {
        encode_lines(lines, &vocab(), Level::Word)
    }

    fn ids(line: &str) -> Vec<usize> {
        let v = vocab();
        line.split_whitespace().map(|t| v.id(t)).collect()
    }

    #[test]
    fn index_enumerates_ngrams() {
        let idx = build_index(&corpus(&["a b"]), 4).unwrap();
        assert_eq!(idx.len_n(1), 2);
        assert_eq!(idx.len_n(2), 1);
        assert!(idx.contains(&ids("a b")));
        assert_eq!(idx.len_n(3), 0);
        assert!(build_index(&corpus(&[]), 4).is_err());
    }

    #[test]
    fn percent_in_test_examples() {
        let held = corpus(&["a b"]);
        let idx = build_index(&held, 4).unwrap();
        assert_eq!(percent_in_test_n(&[ids("a b c")], &idx, 2).unwrap(), 0.5);
        for n in 1..=2 {
            assert_eq!(percent_in_test_n(&held.sentences, &idx, n).unwrap(), 1.0);
        }
        assert_eq!(percent_in_test_n(&[ids("x y")], &idx, 1).unwrap(), 0.0);
        assert_eq!(percent_in_test_n(&[ids("a")], &idx, 3).unwrap(), 0.0);
        assert!(percent_in_test_n(&[], &idx, 5).is_err());
    }

    #[test]
    fn pad_windows_are_skipped() {
        let s = vec![3, Vocabulary::PAD_ID, 4, 5];
        assert_eq!(ngrams(&s, 2).count(), 1);
        assert_eq!(ngrams(&s, 1).count(), 3);
    }

    #[test]
    fn novelty_examples() {
        let c = corpus(&["a b"]);
        assert_eq!(novelty_score(&[ids("x y"), ids("a b")], &c).unwrap(), 0.5);
        assert_eq!(novelty_score(&[ids("a b")], &c).unwrap(), 0.0);
        assert_eq!(novelty_score(&[ids("c"), ids("a")], &c).unwrap(), 1.0);
        assert!(novelty_score(&[], &c).is_err());
    }

    #[test]
    fn report_metrics_block_roundtrips() {
        let r = EvalReport {
            percent_in_test: [0.84, 0.57, 0.27, 0.03],
            novelty: 0.9,
            sample_count: 2,
            samples: vec!["a b".into(), "c".into()],
        };
        let kv = parse_metrics_block(&r.to_text());
        assert_eq!(kv, r.key_values());
        assert_eq!(r.samples_text(), "a b\nc\n");
    }
}
