//! Independent oracles shared by the integration and acceptance tests:
//! central finite differences and brute-force metric reimplementations.

#![allow(dead_code)]

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use textgan_core::autodiff::{Mat, Tape};
use textgan_core::corpus::{encode_lines, Level, TokenizedCorpus, Vocabulary};
use textgan_core::lipschitz::{interpolate, PenaltyMode};
use textgan_core::model::{
    critic_score, gru_step, lstm_step, CellKind, Critic, Generator, Module, NetConfig, RecurrentCellParams, SeqBatch,
    SoftSequence,
};
use textgan_core::objectives::{critic_objective, generator_objective, Regime};

pub const FD_STEP: f64 = 1e-6;

pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or the absolute error when both are tiny.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

pub fn flat_params(m: &impl Module) -> Vec<f64> {
    m.named_params().iter().flat_map(|(_, t)| t.data().to_vec()).collect()
}

pub fn set_flat_params(m: &mut impl Module, v: &[f64]) {
    let mut off = 0;
    for t in m.params_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&v[off..off + n]);
        off += n;
    }
}

pub fn flatten(ms: &[Mat<f64>]) -> Vec<f64> {
    ms.iter().flat_map(|m| m.data.clone()).collect()
}

fn uniform_vec(rng: &mut impl Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

fn scale_params(m: &mut impl Module, rng: &mut impl Rng, bound: f64) {
    for t in m.params_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-bound..bound);
        }
    }
}

/// Random softmax-relaxed sequences, `batch` of them, `len` steps over `vocab`.
pub fn random_soft_batch(rng: &mut impl Rng, batch: usize, len: usize, vocab: usize) -> SeqBatch {
    let seqs: Vec<SoftSequence> = (0..batch)
        .map(|_| {
            let mut m = Mat::zeros(len, vocab);
            for t in 0..len {
                let w: Vec<f64> = (0..vocab).map(|_| rng.random_range(0.05..1.0)).collect();
                let s: f64 = w.iter().sum();
                for (k, x) in w.iter().enumerate() {
                    m.data[t * vocab + k] = x / s;
                }
            }
            SoftSequence::new(m).expect("rows are distributions")
        })
        .collect();
    SeqBatch::from_sequences(&seqs).expect("equal shapes")
}

pub fn random_token_batch(rng: &mut impl Rng, batch: usize, len: usize, vocab: usize) -> SeqBatch {
    let ids: Vec<Vec<usize>> = (0..batch)
        .map(|_| (0..len).map(|_| rng.random_range(0..vocab)).collect())
        .collect();
    SeqBatch::from_tokens(&ids, vocab).expect("ids in range")
}

pub struct TinyDims {
    pub kind: CellKind,
    pub vocab: usize,
    pub len: usize,
    pub hidden: usize,
}

pub fn tiny_dims(rng: &mut impl Rng) -> TinyDims {
    TinyDims {
        kind: if rng.random_bool(0.5) {
            CellKind::Gru
        } else {
            CellKind::Lstm
        },
        vocab: rng.random_range(2..=4),
        len: rng.random_range(1..=3),
        hidden: rng.random_range(1..=4),
    }
}

/// Relative error between the taped gradient of `w · cell(x, h[, c])` and
/// finite differences, over inputs, state and all parameters.
pub fn cell_gradient_error(rng: &mut impl Rng, kind: CellKind, input: usize, hidden: usize) -> f64 {
    let mut params = RecurrentCellParams::init(kind, input, hidden, rng);
    for t in params.params_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    let x = uniform_vec(rng, input, 1.0);
    let h = uniform_vec(rng, hidden, 1.0);
    let c = uniform_vec(rng, hidden, 1.0);
    let w = uniform_vec(rng, hidden, 1.0);
    let w_c = uniform_vec(rng, hidden, 1.0);
    let lstm = kind == CellKind::Lstm;

    // analytic, through the tape
    let mut tape: Tape<f64> = Tape::new();
    let mut vars = Vec::new();
    let bound = params.bind(&mut tape, &mut vars);
    let xv = tape.leaf(Mat::from_vec(1, input, x.clone()));
    let hv = tape.leaf(Mat::from_vec(1, hidden, h.clone()));
    let cv = tape.leaf(Mat::from_vec(1, hidden, c.clone()));
    let state = textgan_core::model::CellState {
        h: hv,
        c: lstm.then_some(cv),
    };
    let out = bound.step(&mut tape, xv, state);
    let wv = tape.leaf(Mat::from_vec(1, hidden, w.clone()));
    let mut obj = tape.mul(out.h, wv);
    if let Some(c2) = out.c {
        let wcv = tape.leaf(Mat::from_vec(1, hidden, w_c.clone()));
        let extra = tape.mul(c2, wcv);
        obj = tape.add(obj, extra);
    }
    let total = tape.sum(obj);
    let grads = tape.backward(total, Mat::from_vec(1, 1, vec![1.0]));
    let get = |v| {
        let m = tape.value(v);
        grads.get_or_zeros(v, m.rows, m.cols).data
    };
    let mut analytic = get(xv);
    analytic.extend(get(hv));
    if lstm {
        analytic.extend(get(cv));
    }
    for &v in &vars {
        analytic.extend(get(v));
    }

    // numeric, through the standalone step functions
    let n_x = input;
    let n_h = hidden;
    let mut base = x.clone();
    base.extend(&h);
    if lstm {
        base.extend(&c);
    }
    base.extend(params.named_params("").iter().flat_map(|(_, t)| t.data().to_vec()));
    let mut f = |v: &[f64]| {
        let mut p = params.clone();
        let mut off = n_x + n_h + if lstm { n_h } else { 0 };
        for t in p.params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&v[off..off + n]);
            off += n;
        }
        let xs = &v[..n_x];
        let hs = &v[n_x..n_x + n_h];
        if lstm {
            let cs = &v[n_x + n_h..n_x + 2 * n_h];
            let (h2, c2) = lstm_step(&p, xs, hs, cs).expect("dims agree");
            h2.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + c2.iter().zip(&w_c).map(|(a, b)| a * b).sum::<f64>()
        } else {
            gru_step(&p, xs, hs)
                .expect("dims agree")
                .iter()
                .zip(&w)
                .map(|(a, b)| a * b)
                .sum()
        }
    };
    let numeric = central_difference(&mut f, &base, FD_STEP);
    relative_error(&analytic, &numeric)
}

/// Relative error of `∂ critic_score / ∂(θ, x)` against finite differences.
pub fn critic_score_gradient_error(rng: &mut impl Rng, d: &TinyDims) -> f64 {
    let net = NetConfig {
        kind: d.kind,
        vocab_size: d.vocab,
        hidden_dim: d.hidden,
        layers: 1,
    };
    let mut critic = Critic::new(net, false, rng);
    scale_params(&mut critic, rng, 1.0);
    let seq = random_soft_batch(rng, 1, d.len, d.vocab).sample(0);
    let pass = critic
        .pass::<f64>(
            &SeqBatch::from_sequences(std::slice::from_ref(&seq)).unwrap().steps,
            &[1.0],
        )
        .unwrap();
    let mut analytic = flatten(&pass.param_grads);
    analytic.extend(flatten(&pass.input_grads));

    let n_p = critic.param_count();
    let mut base = flat_params(&critic);
    base.extend(seq.as_mat().data.iter());
    let mut f = |v: &[f64]| {
        let mut c = critic.clone();
        set_flat_params(&mut c, &v[..n_p]);
        // the score is defined for any real input, not only distributions
        let m = Mat::from_vec(d.len, d.vocab, v[n_p..].to_vec());
        let steps: Vec<Mat<f64>> = (0..d.len)
            .map(|t| Mat::from_vec(1, d.vocab, m.row(t).to_vec()))
            .collect();
        c.score_batch(&SeqBatch { steps }).unwrap()[0]
    };
    let numeric = central_difference(&mut f, &base, FD_STEP);
    let _ = critic_score(&critic, &seq).unwrap();
    relative_error(&analytic, &numeric)
}

pub struct NestedCheck {
    pub error: f64,
    /// Penalty value at the evaluation point, to show the nested term was active.
    pub penalty: f64,
}

/// Full Wasserstein critic loss including the gradient-norm penalty, with
/// fixed real, fake and interpolated batches.
pub fn critic_loss_gradient_error(rng: &mut impl Rng, d: &TinyDims, mode: PenaltyMode) -> NestedCheck {
    let net = NetConfig {
        kind: d.kind,
        vocab_size: d.vocab,
        hidden_dim: d.hidden,
        layers: 1,
    };
    let batch = 3;
    let mut critic = Critic::new(net, false, rng);
    // large weights push input-gradient norms past 1 so the one-sided term is active
    scale_params(&mut critic, rng, 2.5);
    let real = random_token_batch(rng, batch, d.len, d.vocab);
    let fake = random_soft_batch(rng, batch, d.len, d.vocab);
    let points = interpolate(&real, &fake, rng).unwrap().points;
    let regime = Regime::Wgan(mode);
    let obj = critic_objective::<f64>(&critic, regime, &real, &fake, Some(&points)).unwrap();
    let analytic = flatten(&obj.grads);
    let base = flat_params(&critic);
    let mut f = |v: &[f64]| {
        let mut c = critic.clone();
        set_flat_params(&mut c, v);
        critic_objective::<f64>(&c, regime, &real, &fake, Some(&points))
            .unwrap()
            .loss
    };
    let numeric = central_difference(&mut f, &base, FD_STEP);
    NestedCheck {
        error: relative_error(&analytic, &numeric),
        penalty: obj.penalty,
    }
}

/// Generator loss gradient through the rollout and the critic.
pub fn generator_loss_gradient_error(rng: &mut impl Rng, d: &TinyDims, regime: Regime) -> f64 {
    let net = NetConfig {
        kind: d.kind,
        vocab_size: d.vocab,
        hidden_dim: d.hidden,
        layers: 1,
    };
    let noise = 2;
    let mut gen = Generator::new(net, noise, rng);
    scale_params(&mut gen, rng, 1.0);
    let critic = Critic::new(net, regime == Regime::Gan, rng);
    let z = textgan_core::model::sample_noise(rng, 2, noise);
    let teacher = vec![None, Some(vec![rng.random_range(0..d.vocab)])];
    let (_, grads) = generator_objective::<f64>(&gen, &critic, regime, &z, d.len, &teacher).unwrap();
    let analytic = flatten(&grads);
    let base = flat_params(&gen);
    let mut f = |v: &[f64]| {
        let mut g = gen.clone();
        set_flat_params(&mut g, v);
        generator_objective::<f64>(&g, &critic, regime, &z, d.len, &teacher)
            .unwrap()
            .0
    };
    let numeric = central_difference(&mut f, &base, FD_STEP);
    relative_error(&analytic, &numeric)
}

// ---- metric oracles ----

fn body(s: &[usize]) -> &[usize] {
    let end = s.iter().position(|&t| t == Vocabulary::EOS_ID).unwrap_or(s.len());
    &s[..end]
}

/// Scans every held-out sentence for every sample window.
pub fn brute_percent_in_test(samples: &[Vec<usize>], heldout: &[Vec<usize>], n: usize) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in samples {
        let b = body(s);
        if b.len() < n {
            continue;
        }
        for i in 0..=b.len() - n {
            let w = &b[i..i + n];
            if w.contains(&Vocabulary::PAD_ID) {
                continue;
            }
            total += 1;
            let found = heldout.iter().any(|h| {
                let hb = body(h);
                hb.len() >= n && (0..=hb.len() - n).any(|j| &hb[j..j + n] == w)
            });
            if found {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

pub fn brute_novelty(samples: &[Vec<usize>], corpus: &[Vec<usize>]) -> f64 {
    let novel = samples
        .iter()
        .filter(|s| !corpus.iter().any(|c| body(c) == body(s)))
        .count();
    novel as f64 / samples.len() as f64
}

pub fn tiny_vocab(rng: &mut impl Rng) -> Vocabulary {
    let n = rng.random_range(1..=5);
    Vocabulary::from_tokens((0..n).map(|i| format!("w{i}"))).unwrap()
}

/// Random id sequence that may contain `[pad]`, `[unk]` and an early `[eos]`.
pub fn random_ids(rng: &mut impl Rng, vocab: usize, max_len: usize) -> Vec<usize> {
    let len = rng.random_range(0..=max_len);
    let mut s: Vec<usize> = (0..len).map(|_| rng.random_range(0..vocab)).collect();
    if rng.random_bool(0.7) {
        s.push(Vocabulary::EOS_ID);
    }
    s
}

pub fn tiny_corpus(rng: &mut impl Rng, vocab: &Vocabulary, n: usize) -> TokenizedCorpus {
    let mut c = encode_lines(Vec::<String>::new(), vocab, Level::Word);
    c.sentences = (0..n)
        .map(|_| {
            let mut s: Vec<usize> = (0..rng.random_range(1..=6))
                .map(|_| rng.random_range(0..vocab.size()))
                .collect();
            s.retain(|&t| t != Vocabulary::EOS_ID);
            s.push(Vocabulary::EOS_ID);
            s
        })
        .collect();
    c
}

/// Random lines over a small alphabet, with duplicates and blank lines.
pub fn random_lines(rng: &mut impl Rng, n: usize) -> Vec<String> {
    let words = ["a", "b", "c", "dd", "E", "e", "[unk]"];
    let mut lines: Vec<String> = (0..n)
        .map(|_| {
            let len = rng.random_range(0..5);
            (0..len)
                .map(|_| *words.choose(rng).unwrap())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let dups: Vec<String> = lines.iter().take(n / 3).cloned().collect();
    lines.extend(dups);
    lines.shuffle(rng);
    lines
}
