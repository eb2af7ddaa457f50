use rand::Rng;

use super::cell::{BoundCell, RecurrentCellParams};
use super::generator::NetConfig;
use super::sequence::{SeqBatch, SoftSequence};
use super::Module;
use crate::autodiff::{Mat, Scalar, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Recurrent critic reading a sequence of `vocab`-wide vectors and scoring it
/// from the final hidden state. With `sigmoid_output` the score is a
/// probability (GAN discriminator); otherwise it is an unbounded real.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    pub net: NetConfig,
    pub layers: Vec<RecurrentCellParams>,
    /// `1×hidden` readout.
    pub out_w: Tensor,
    pub out_b: Tensor,
    pub sigmoid_output: bool,
}

pub struct BoundCritic {
    cells: Vec<BoundCell>,
    out_w: Var,
    out_b: Var,
    pub vars: Vec<Var>,
}

/// Scores plus gradients of `Σ_b seed_b · score_b`.
pub struct CriticPass<S> {
    pub scores: Vec<S>,
    /// In `named_params` order.
    pub param_grads: Vec<Mat<S>>,
    /// Per step, `batch×vocab`.
    pub input_grads: Vec<Mat<S>>,
}

impl Critic {
    pub fn zeros(net: NetConfig, sigmoid_output: bool) -> Self {
        let h = net.hidden_dim;
        Critic {
            net,
            layers: (0..net.layers)
                .map(|l| RecurrentCellParams::zeros(net.kind, if l == 0 { net.vocab_size } else { h }, h))
                .collect(),
            out_w: Tensor::zeros(&[1, h]),
            out_b: Tensor::zeros(&[1]),
            sigmoid_output,
        }
    }

    pub fn new(net: NetConfig, sigmoid_output: bool, rng: &mut impl Rng) -> Self {
        let h = net.hidden_dim;
        let mut c = Self::zeros(net, sigmoid_output);
        for cell in c.layers.iter_mut() {
            *cell = RecurrentCellParams::init(net.kind, cell.input_dim, h, rng);
        }
        c.out_w = Tensor::uniform(&[1, h], 1.0 / (h as f64).sqrt(), rng);
        c
    }

    pub fn vocab_size(&self) -> usize {
        self.net.vocab_size
    }

    pub fn bind<S: Scalar>(&self, tape: &mut Tape<S>) -> BoundCritic {
        let mut vars = Vec::new();
        let cells = self.layers.iter().map(|c| c.bind(tape, &mut vars)).collect();
        let out_w = tape.leaf(self.out_w.to_mat());
        let out_b = tape.leaf(self.out_b.to_mat());
        vars.extend([out_w, out_b]);
        BoundCritic {
            cells,
            out_w,
            out_b,
            vars,
        }
    }

    /// `batch×1` scores for time-major inputs `xs`.
    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, bound: &BoundCritic, xs: &[Var]) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::Invalid("critic needs at least one step".into()))?;
        let batch = tape.value(*first).rows;
        for &x in xs {
            let m = tape.value(x);
            if m.cols != self.vocab_size() || m.rows != batch {
                return Err(Error::Shape(format!(
                    "critic step is {}×{}, expected {batch}×{}",
                    m.rows,
                    m.cols,
                    self.vocab_size()
                )));
            }
        }
        let mut states: Vec<_> = bound.cells.iter().map(|c| c.zero_state(tape, batch)).collect();
        for &x in xs {
            let mut inp = x;
            for (l, cell) in bound.cells.iter().enumerate() {
                states[l] = cell.step(tape, inp, states[l]);
                inp = states[l].h;
            }
        }
        let last = states.last().expect("critic has at least one layer").h;
        let y = tape.matmul_t(last, bound.out_w);
        let y = tape.add_bias(y, bound.out_b);
        Ok(if self.sigmoid_output { tape.sigmoid(y) } else { y })
    }

    pub fn score_batch(&self, batch: &SeqBatch) -> Result<Vec<f64>> {
        let mut tape: Tape<f64> = Tape::new();
        let bound = self.bind(&mut tape);
        let xs: Vec<Var> = batch.steps.iter().map(|m| tape.leaf(m.clone())).collect();
        let out = self.forward(&mut tape, &bound, &xs)?;
        Ok(tape.value(out).data.clone())
    }

    /// One forward and reverse sweep at precision `S`.
    pub fn pass<S: Scalar>(&self, inputs: &[Mat<S>], seed: &[S]) -> Result<CriticPass<S>> {
        self.pass_with(inputs, |_| seed.to_vec())
    }

    /// Like [`Critic::pass`], with the per-row seed computed from the scores.
    pub fn pass_with<S: Scalar>(
        &self,
        inputs: &[Mat<S>],
        seed_of: impl FnOnce(&[S]) -> Vec<S>,
    ) -> Result<CriticPass<S>> {
        let mut tape: Tape<S> = Tape::new();
        let bound = self.bind(&mut tape);
        let xs: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
        let out = self.forward(&mut tape, &bound, &xs)?;
        let batch = tape.value(out).rows;
        let scores = tape.value(out).data.clone();
        let seed = seed_of(&scores);
        if seed.len() != batch {
            return Err(Error::Shape(format!("{} seeds for batch of {batch}", seed.len())));
        }
        let grads = tape.backward(out, Mat::from_vec(batch, 1, seed));
        let param_grads = bound
            .vars
            .iter()
            .map(|&v| {
                let m = tape.value(v);
                grads.get_or_zeros(v, m.rows, m.cols)
            })
            .collect();
        let input_grads = xs
            .iter()
            .map(|&v| {
                let m = tape.value(v);
                grads.get_or_zeros(v, m.rows, m.cols)
            })
            .collect();
        Ok(CriticPass {
            scores,
            param_grads,
            input_grads,
        })
    }
}

impl Module for Critic {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (l, cell) in self.layers.iter().enumerate() {
            out.extend(cell.named_params(&format!("critic.l{l}.")));
        }
        out.push(("critic.out_w".into(), &self.out_w));
        out.push(("critic.out_b".into(), &self.out_b));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.layers.iter_mut().flat_map(|c| c.params_mut()).collect();
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }
}

/// Score of a single sequence.
pub fn critic_score(critic: &Critic, seq: &SoftSequence) -> Result<f64> {
    let batch = SeqBatch::from_sequences(std::slice::from_ref(seq))?;
    Ok(critic.score_batch(&batch)?[0])
}
