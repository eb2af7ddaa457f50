use rand::Rng;
use rand_distr::StandardNormal;

use super::cell::{BoundCell, CellKind, CellState, RecurrentCellParams};
use super::sequence::{SeqBatch, SoftSequence};
use super::Module;
use crate::autodiff::{Mat, Scalar, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetConfig {
    pub kind: CellKind,
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub layers: usize,
}

/// Recurrent generator. The noise vector sets the initial hidden state of each
/// layer; every step emits a softmax distribution over the vocabulary, which is
/// fed back as the next step's input.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub net: NetConfig,
    pub noise_dim: usize,
    pub layers: Vec<RecurrentCellParams>,
    /// Per layer, `hidden×noise` projection and bias giving `h₀ = tanh(W z + b)`.
    pub init_w: Vec<Tensor>,
    pub init_b: Vec<Tensor>,
    /// `vocab×hidden` output projection.
    pub out_w: Tensor,
    pub out_b: Tensor,
}

pub struct BoundGenerator {
    cells: Vec<BoundCell>,
    init_w: Vec<Var>,
    init_b: Vec<Var>,
    out_w: Var,
    out_b: Var,
    /// All parameter leaves in `named_params` order.
    pub vars: Vec<Var>,
}

/// Nodes produced by one rollout.
pub struct Rollout {
    /// Emitted `batch×vocab` distributions, one per step.
    pub outputs: Vec<Var>,
    /// What each step consumed: zeros at step 0, then the previous emission.
    pub inputs: Vec<Var>,
}

impl Generator {
    pub fn zeros(net: NetConfig, noise_dim: usize) -> Self {
        let h = net.hidden_dim;
        let layers = (0..net.layers)
            .map(|l| RecurrentCellParams::zeros(net.kind, if l == 0 { net.vocab_size } else { h }, h))
            .collect();
        Generator {
            net,
            noise_dim,
            layers,
            init_w: (0..net.layers).map(|_| Tensor::zeros(&[h, noise_dim])).collect(),
            init_b: (0..net.layers).map(|_| Tensor::zeros(&[h])).collect(),
            out_w: Tensor::zeros(&[net.vocab_size, h]),
            out_b: Tensor::zeros(&[net.vocab_size]),
        }
    }

    pub fn new(net: NetConfig, noise_dim: usize, rng: &mut impl Rng) -> Self {
        let h = net.hidden_dim;
        let k = 1.0 / (h as f64).sqrt();
        let mut g = Self::zeros(net, noise_dim);
        for (l, cell) in g.layers.iter_mut().enumerate() {
            *cell = RecurrentCellParams::init(net.kind, cell.input_dim, h, rng);
            g.init_w[l] = Tensor::uniform(&[h, noise_dim], k, rng);
        }
        g.out_w = Tensor::uniform(&[net.vocab_size, h], k, rng);
        g
    }

    pub fn vocab_size(&self) -> usize {
        self.net.vocab_size
    }

    pub fn bind<S: Scalar>(&self, tape: &mut Tape<S>) -> BoundGenerator {
        let mut vars = Vec::new();
        let mut cells = Vec::new();
        let (mut init_w, mut init_b) = (Vec::new(), Vec::new());
        for (l, cell) in self.layers.iter().enumerate() {
            cells.push(cell.bind(tape, &mut vars));
            let w = tape.leaf(self.init_w[l].to_mat());
            let b = tape.leaf(self.init_b[l].to_mat());
            vars.extend([w, b]);
            init_w.push(w);
            init_b.push(b);
        }
        let out_w = tape.leaf(self.out_w.to_mat());
        let out_b = tape.leaf(self.out_b.to_mat());
        vars.extend([out_w, out_b]);
        BoundGenerator {
            cells,
            init_w,
            init_b,
            out_w,
            out_b,
            vars,
        }
    }

    /// Autoregressive rollout of `length` steps for a batch of noise rows `z`.
    ///
    /// `teacher[b]`, when present, forces the first `prefix.len()` emissions of
    /// sample `b` to the one-hot teacher tokens; later steps then continue from
    /// that prefix.
    pub fn rollout<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bound: &BoundGenerator,
        z: Var,
        length: usize,
        teacher: &[Option<Vec<usize>>],
    ) -> Result<Rollout> {
        let batch = tape.value(z).rows;
        let v = self.vocab_size();
        if length == 0 {
            return Err(Error::Invalid("generation length must be at least 1".into()));
        }
        if tape.value(z).cols != self.noise_dim {
            return Err(Error::Shape(format!(
                "noise has width {}, expected {}",
                tape.value(z).cols,
                self.noise_dim
            )));
        }
        if !teacher.is_empty() && teacher.len() != batch {
            return Err(Error::Shape(format!(
                "{} teacher prefixes for batch of {batch}",
                teacher.len()
            )));
        }
        for p in teacher.iter().flatten() {
            if p.len() > length {
                return Err(Error::Invalid(format!(
                    "teacher prefix of {} exceeds length {length}",
                    p.len()
                )));
            }
            if let Some(&bad) = p.iter().find(|&&id| id >= v) {
                return Err(Error::Invalid(format!("teacher token {bad} out of range")));
            }
        }

        let mut states: Vec<CellState> = Vec::with_capacity(self.layers.len());
        for (l, cell) in bound.cells.iter().enumerate() {
            let a = tape.matmul_t(z, bound.init_w[l]);
            let a = tape.add_bias(a, bound.init_b[l]);
            let h = tape.tanh(a);
            let c = match cell.kind {
                CellKind::Gru => None,
                CellKind::Lstm => Some(tape.leaf(Mat::zeros(batch, cell.hidden_dim))),
            };
            states.push(CellState { h, c });
        }

        let mut input = tape.leaf(Mat::zeros(batch, v));
        let mut outputs = Vec::with_capacity(length);
        let mut inputs = Vec::with_capacity(length);
        for t in 0..length {
            inputs.push(input);
            let mut x = input;
            for (l, cell) in bound.cells.iter().enumerate() {
                states[l] = cell.step(tape, x, states[l]);
                x = states[l].h;
            }
            let logits = tape.matmul_t(x, bound.out_w);
            let logits = tape.add_bias(logits, bound.out_b);
            let mut emitted = tape.softmax(logits);

            let forced: Vec<Option<usize>> = (0..batch)
                .map(|b| teacher.get(b).and_then(|p| p.as_ref()).and_then(|p| p.get(t).copied()))
                .collect();
            if forced.iter().any(Option::is_some) {
                let keep = Mat::from_fn(batch, v, |b, _| if forced[b].is_some() { S::zero() } else { S::one() });
                let onehot = Mat::from_fn(batch, v, |b, k| if forced[b] == Some(k) { S::one() } else { S::zero() });
                let keep = tape.leaf(keep);
                let onehot = tape.leaf(onehot);
                let kept = tape.mul(emitted, keep);
                emitted = tape.add(kept, onehot);
            }
            outputs.push(emitted);
            input = emitted;
        }
        Ok(Rollout { outputs, inputs })
    }

    /// Forward-only batch generation at precision `S`.
    pub fn generate_batch<S: Scalar>(
        &self,
        z: &Mat<f64>,
        length: usize,
        teacher: &[Option<Vec<usize>>],
    ) -> Result<SeqBatch> {
        let mut tape: Tape<S> = Tape::new();
        let bound = self.bind(&mut tape);
        let zv = tape.leaf(z.cast());
        let roll = self.rollout(&mut tape, &bound, zv, length, teacher)?;
        Ok(SeqBatch {
            steps: roll.outputs.iter().map(|&o| tape.value(o).to_f64()).collect(),
        })
    }
}

impl Module for Generator {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (l, cell) in self.layers.iter().enumerate() {
            out.extend(cell.named_params(&format!("gen.l{l}.")));
            out.push((format!("gen.l{l}.init_w"), &self.init_w[l]));
            out.push((format!("gen.l{l}.init_b"), &self.init_b[l]));
        }
        out.push(("gen.out_w".into(), &self.out_w));
        out.push(("gen.out_b".into(), &self.out_b));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for ((cell, w), b) in self
            .layers
            .iter_mut()
            .zip(self.init_w.iter_mut())
            .zip(self.init_b.iter_mut())
        {
            out.extend(cell.params_mut());
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }
}

/// Single-sample generation from noise vector `z`.
pub fn generate(gen: &Generator, z: &[f64], length: usize, teacher_prefix: Option<&[usize]>) -> Result<SoftSequence> {
    let zm = Mat::from_vec(1, z.len(), z.to_vec());
    let teacher = [teacher_prefix.map(<[usize]>::to_vec)];
    let batch = gen.generate_batch::<f64>(&zm, length, &teacher)?;
    SoftSequence::new(batch.sample_mat(0))
}

/// `batch×dim` spherical Gaussian noise.
pub fn sample_noise(rng: &mut impl Rng, batch: usize, dim: usize) -> Mat<f64> {
    Mat::from_fn(batch, dim, |_, _| rng.sample(StandardNormal))
}
