use rand::Rng;

use crate::autodiff::Mat;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-6;

/// Length-`T` sequence of probability vectors over the vocabulary (`T×V`).
#[derive(Clone, Debug, PartialEq)]
pub struct SoftSequence {
    steps: Mat<f64>,
}

impl SoftSequence {
    pub fn new(steps: Mat<f64>) -> Result<Self> {
        for t in 0..steps.rows {
            let row = steps.row(t);
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::Invalid(format!("step {t} is not a probability vector")));
            }
        }
        Ok(SoftSequence { steps })
    }

    pub fn one_hot(ids: &[usize], vocab_size: usize) -> Result<Self> {
        Ok(SoftSequence {
            steps: crate::corpus::one_hot(ids, vocab_size)?,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.rows
    }

    pub fn is_empty(&self) -> bool {
        self.steps.rows == 0
    }

    pub fn width(&self) -> usize {
        self.steps.cols
    }

    pub fn step(&self, t: usize) -> &[f64] {
        self.steps.row(t)
    }

    pub fn as_mat(&self) -> &Mat<f64> {
        &self.steps
    }
}

/// Time-major batch: `steps[t]` is `batch×width`, row `b` belongs to sample `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqBatch {
    pub steps: Vec<Mat<f64>>,
}

impl SeqBatch {
    pub fn from_sequences(seqs: &[SoftSequence]) -> Result<Self> {
        let first = seqs.first().ok_or_else(|| Error::Invalid("empty batch".into()))?;
        let (len, width) = (first.len(), first.width());
        if seqs.iter().any(|s| s.len() != len || s.width() != width) {
            return Err(Error::Shape("sequences in a batch must share length and width".into()));
        }
        let steps = (0..len)
            .map(|t| Mat::from_fn(seqs.len(), width, |b, v| seqs[b].steps.get(t, v)))
            .collect();
        Ok(SeqBatch { steps })
    }

    /// One-hot batch from token sequences of equal length.
    pub fn from_tokens(seqs: &[Vec<usize>], vocab_size: usize) -> Result<Self> {
        let onehots = seqs
            .iter()
            .map(|s| SoftSequence::one_hot(s, vocab_size))
            .collect::<Result<Vec<_>>>()?;
        Self::from_sequences(&onehots)
    }

    pub fn batch_size(&self) -> usize {
        self.steps.first().map_or(0, |m| m.rows)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn width(&self) -> usize {
        self.steps.first().map_or(0, |m| m.cols)
    }

    /// Sample `b` as a `T×V` matrix.
    pub fn sample_mat(&self, b: usize) -> Mat<f64> {
        let w = self.width();
        Mat::from_fn(self.len(), w, |t, v| self.steps[t].get(b, v))
    }

    pub fn sample(&self, b: usize) -> SoftSequence {
        SoftSequence {
            steps: self.sample_mat(b),
        }
    }

    pub fn same_shape(&self, other: &SeqBatch) -> bool {
        self.len() == other.len() && self.batch_size() == other.batch_size() && self.width() == other.width()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    Argmax,
    Multinomial,
}

/// Discretizes a soft sequence; output stops before the first `[eos]`.
pub fn sample_hard(seq: &SoftSequence, mode: SampleMode, rng: &mut impl Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(seq.len());
    for t in 0..seq.len() {
        let p = seq.step(t);
        let id = match mode {
            SampleMode::Argmax => argmax(p),
            SampleMode::Multinomial => {
                let total: f64 = p.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = p.len() - 1;
                for (i, &pi) in p.iter().enumerate() {
                    if u < pi {
                        pick = i;
                        break;
                    }
                    u -= pi;
                }
                pick
            }
        };
        if id == Vocabulary::EOS_ID {
            break;
        }
        out.push(id);
    }
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}
