use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{Adam, AdamConfig};
use super::losses::{gan_critic_seeds, gan_generator_seeds, gan_losses, wgan_losses};
use crate::autodiff::{Mat, Scalar, Tape};
use crate::corpus::TokenizedCorpus;
use crate::curriculum::{advance, sample_length, teacher_prefix, CurriculumSchedule, Stage};
use crate::error::{Error, Result};
use crate::lipschitz::{clip_weights, grad_norm, interpolate, penalty_with_grad, PenaltyMode};
use crate::model::{sample_noise, Critic, Generator, Module, NetConfig, SeqBatch};

/// Training regime: the standard minimax game, or a Wasserstein critic with one
/// of the Lipschitz strategies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime {
    Gan,
    Wgan(PenaltyMode),
}

impl Regime {
    /// Config name: `gan`, `wgan-clip`, `wgan-gp` or `wgan-lp`.
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Gan => "gan",
            Regime::Wgan(PenaltyMode::Clip(_)) => "wgan-clip",
            Regime::Wgan(PenaltyMode::TwoSidedGp(_)) => "wgan-gp",
            Regime::Wgan(PenaltyMode::OneSidedLp(_)) => "wgan-lp",
        }
    }

    pub fn from_parts(name: &str, lambda: f64, clip: f64) -> Result<Self> {
        let r = match name {
            "gan" => Regime::Gan,
            "wgan-clip" => Regime::Wgan(PenaltyMode::Clip(clip)),
            "wgan-gp" => Regime::Wgan(PenaltyMode::TwoSidedGp(lambda)),
            "wgan-lp" => Regime::Wgan(PenaltyMode::OneSidedLp(lambda)),
            other => return Err(Error::Invalid(format!("unknown mode {other:?}"))),
        };
        if let Regime::Wgan(p) = r {
            p.validate()?;
        }
        Ok(r)
    }

    pub fn sigmoid_critic(&self) -> bool {
        matches!(self, Regime::Gan)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Gan => f.write_str("gan"),
            Regime::Wgan(p) => write!(f, "{p}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F64,
    F32,
}

impl FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f64" => Ok(Precision::F64),
            "f32" => Ok(Precision::F32),
            other => Err(Error::Invalid(format!("unknown precision {other:?}"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub regime: Regime,
    pub n_critic: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub precision: Precision,
    pub net: NetConfig,
    pub noise_dim: usize,
    pub schedule: CurriculumSchedule,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_critic == 0 || self.batch_size == 0 {
            return Err(Error::Invalid("n_critic and batch_size must be at least 1".into()));
        }
        if self.net.hidden_dim == 0 || self.net.layers == 0 || self.noise_dim == 0 {
            return Err(Error::Invalid("hidden, layers and noise_dim must be at least 1".into()));
        }
        if let Regime::Wgan(p) = self.regime {
            p.validate()?;
        }
        self.adam.validate()?;
        self.schedule.validate()
    }
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    pub generator: Generator,
    pub critic: Critic,
    pub gen_opt: Adam,
    pub critic_opt: Adam,
    /// Completed training steps.
    pub iteration: u64,
    pub stage: Stage,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let generator = Generator::new(config.net, config.noise_dim, &mut rng);
        let critic = Critic::new(config.net, config.regime.sigmoid_critic(), &mut rng);
        Ok(TrainState {
            gen_opt: Adam::new(config.adam, &generator),
            critic_opt: Adam::new(config.adam, &critic),
            stage: config.schedule.first_stage(),
            config,
            generator,
            critic,
            iteration: 0,
            rng,
        })
    }
}

/// Draws real training sequences of a requested length.
pub struct RealSampler<'a> {
    corpus: &'a TokenizedCorpus,
    /// Sentence indices ordered by decreasing length.
    by_len: Vec<usize>,
}

impl<'a> RealSampler<'a> {
    pub fn new(corpus: &'a TokenizedCorpus) -> Self {
        let mut by_len: Vec<usize> = (0..corpus.len()).collect();
        by_len.sort_by(|&a, &b| {
            corpus.sentences[b]
                .len()
                .cmp(&corpus.sentences[a].len())
                .then(a.cmp(&b))
        });
        RealSampler { corpus, by_len }
    }

    /// Uniformly chosen sentence with at least `length` tokens (counting `[eos]`).
    pub fn sentence(&self, length: usize, rng: &mut impl Rng) -> Result<&'a [usize]> {
        let eligible = self
            .by_len
            .partition_point(|&i| self.corpus.sentences[i].len() >= length);
        if eligible == 0 {
            return Err(Error::Invalid(format!("no training sentence has {length} tokens")));
        }
        Ok(&self.corpus.sentences[self.by_len[rng.random_range(0..eligible)]])
    }

    pub fn prefix(&self, length: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        Ok(self.sentence(length, rng)?[..length].to_vec())
    }

    pub fn vocab_size(&self) -> usize {
        self.corpus.vocab.size()
    }
}

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub iteration: u64,
    pub stage_len: usize,
    pub critic_loss: f64,
    pub gen_loss: f64,
    pub penalty: f64,
    pub grad_norm_mean: f64,
    pub teacher_ratio: f64,
    pub wall_s: f64,
    pub nan: bool,
}

/// Critic loss for one batch together with its parameter gradient.
#[derive(Clone, Debug)]
pub struct CriticObjective {
    pub loss: f64,
    pub penalty: f64,
    /// Mean input-gradient norm at the interpolants; 0 for the GAN regime.
    pub grad_norm_mean: f64,
    /// In the critic's `named_params` order.
    pub grads: Vec<Mat<f64>>,
}

fn add_grads(acc: &mut [Mat<f64>], other: &[Mat<f64>]) {
    for (a, b) in acc.iter_mut().zip(other) {
        for (x, y) in a.data.iter_mut().zip(&b.data) {
            *x += y;
        }
    }
}

fn to_f64(ms: Vec<Mat<impl Scalar>>) -> Vec<Mat<f64>> {
    ms.iter().map(Mat::to_f64).collect()
}

fn cast_steps<S: Scalar>(batch: &SeqBatch) -> Vec<Mat<S>> {
    batch.steps.iter().map(|m| m.cast()).collect()
}

/// Critic loss on fixed real and fake batches. `points` are the penalty
/// interpolants and are required for every Wasserstein regime.
pub fn critic_objective<S: Scalar>(
    critic: &Critic,
    regime: Regime,
    real: &SeqBatch,
    fake: &SeqBatch,
    points: Option<&SeqBatch>,
) -> Result<CriticObjective> {
    let (real_in, fake_in) = (cast_steps::<S>(real), cast_steps::<S>(fake));
    match regime {
        Regime::Gan => {
            let mut real_scores = Vec::new();
            let rp = critic.pass_with(&real_in, |d| {
                real_scores = d.iter().map(|x| x.to_f64()).collect();
                let (sr, _) = gan_critic_seeds(&real_scores, &[]);
                sr.into_iter().map(S::from_f64).collect()
            })?;
            let mut fake_scores = Vec::new();
            let fp = critic.pass_with(&fake_in, |d| {
                fake_scores = d.iter().map(|x| x.to_f64()).collect();
                let (_, sf) = gan_critic_seeds(&[], &fake_scores);
                sf.into_iter().map(S::from_f64).collect()
            })?;
            let losses = gan_losses(&real_scores, &fake_scores)?;
            let mut grads = to_f64(rp.param_grads);
            add_grads(&mut grads, &to_f64(fp.param_grads));
            Ok(CriticObjective {
                loss: losses.critic,
                penalty: 0.0,
                grad_norm_mean: 0.0,
                grads,
            })
        }
        Regime::Wgan(mode) => {
            let points = points.ok_or_else(|| Error::Invalid("wasserstein critic loss needs interpolants".into()))?;
            let (br, bf) = (real.batch_size() as f64, fake.batch_size() as f64);
            let rp = critic.pass(&real_in, &vec![S::from_f64(-1.0 / br); real.batch_size()])?;
            let fp = critic.pass(&fake_in, &vec![S::from_f64(1.0 / bf); fake.batch_size()])?;
            let f_real: Vec<f64> = rp.scores.iter().map(|x| x.to_f64()).collect();
            let f_fake: Vec<f64> = fp.scores.iter().map(|x| x.to_f64()).collect();
            let mut grads = to_f64(rp.param_grads);
            add_grads(&mut grads, &to_f64(fp.param_grads));
            let (penalty, norms) = match mode.gradient_penalty() {
                Some((kind, lambda)) => {
                    let pg = penalty_with_grad::<S>(critic, points, kind, lambda)?;
                    add_grads(&mut grads, &pg.param_grads);
                    (pg.value, pg.norms)
                }
                // clipping has no penalty; the norm is still logged
                None => (0.0, grad_norm(critic, points)?),
            };
            let losses = wgan_losses(&f_real, &f_fake, penalty)?;
            Ok(CriticObjective {
                loss: losses.critic,
                penalty,
                grad_norm_mean: norms.iter().sum::<f64>() / norms.len() as f64,
                grads,
            })
        }
    }
}

/// Generator loss for noise rows `z` and its gradient in the generator's
/// `named_params` order. Gradients flow through the critic into the softmax
/// outputs.
pub fn generator_objective<S: Scalar>(
    gen: &Generator,
    critic: &Critic,
    regime: Regime,
    z: &Mat<f64>,
    length: usize,
    teacher: &[Option<Vec<usize>>],
) -> Result<(f64, Vec<Mat<f64>>)> {
    let b = z.rows;
    let mut tape: Tape<S> = Tape::new();
    let gen_bound = gen.bind(&mut tape);
    let critic_bound = critic.bind(&mut tape);
    let zv = tape.leaf(z.cast());
    let roll = gen.rollout(&mut tape, &gen_bound, zv, length, teacher)?;
    let out = critic.forward(&mut tape, &critic_bound, &roll.outputs)?;
    let scores: Vec<f64> = tape.value(out).data.iter().map(|x| x.to_f64()).collect();

    let (loss, seed) = match regime {
        Regime::Gan => (gan_losses(&scores, &scores)?.generator, gan_generator_seeds(&scores)),
        Regime::Wgan(_) => (wgan_losses(&scores, &scores, 0.0)?.generator, vec![-1.0 / b as f64; b]),
    };
    let grads = tape.backward(out, Mat::from_vec(b, 1, seed.into_iter().map(S::from_f64).collect()));
    let gen_grads = gen_bound
        .vars
        .iter()
        .map(|&v| {
            let m = tape.value(v);
            grads.get_or_zeros(v, m.rows, m.cols).to_f64()
        })
        .collect();
    Ok((loss, gen_grads))
}

fn teacher_batch(state: &mut TrainState, sampler: &RealSampler, length: usize) -> Result<Vec<Option<Vec<usize>>>> {
    let stage = state.stage;
    (0..state.config.batch_size)
        .map(|_| {
            let s = sampler.sentence(length, &mut state.rng)?;
            teacher_prefix(s, length, &stage, &mut state.rng)
        })
        .collect()
}

fn critic_step<S: Scalar>(state: &mut TrainState, sampler: &RealSampler, length: usize) -> Result<CriticObjective> {
    let b = state.config.batch_size;
    let real_ids = (0..b)
        .map(|_| sampler.prefix(length, &mut state.rng))
        .collect::<Result<Vec<_>>>()?;
    let real = SeqBatch::from_tokens(&real_ids, sampler.vocab_size())?;
    let teacher = teacher_batch(state, sampler, length)?;
    let z = sample_noise(&mut state.rng, b, state.generator.noise_dim);
    let fake = state.generator.generate_batch::<S>(&z, length, &teacher)?;
    let points = match state.config.regime {
        Regime::Gan => None,
        Regime::Wgan(_) => Some(interpolate(&real, &fake, &mut state.rng)?.points),
    };
    let out = critic_objective::<S>(&state.critic, state.config.regime, &real, &fake, points.as_ref())?;
    state.critic.set_grads(&out.grads);
    state.critic_opt.step(&mut state.critic)?;
    if let Regime::Wgan(PenaltyMode::Clip(c)) = state.config.regime {
        clip_weights(state.critic.params_mut(), c);
    }
    Ok(out)
}

fn generator_step<S: Scalar>(state: &mut TrainState, sampler: &RealSampler, length: usize) -> Result<f64> {
    let teacher = teacher_batch(state, sampler, length)?;
    let z = sample_noise(&mut state.rng, state.config.batch_size, state.generator.noise_dim);
    let (loss, grads) = generator_objective::<S>(
        &state.generator,
        &state.critic,
        state.config.regime,
        &z,
        length,
        &teacher,
    )?;
    state.generator.set_grads(&grads);
    state.gen_opt.step(&mut state.generator)?;
    Ok(loss)
}

fn step_impl<S: Scalar>(state: &mut TrainState, sampler: &RealSampler) -> Result<MetricsRow> {
    let length = sample_length(&state.stage, state.config.schedule.variable_length, &mut state.rng);
    let teacher_ratio = state.stage.teacher_ratio;
    let mut row = MetricsRow {
        iteration: state.iteration + 1,
        stage_len: length,
        critic_loss: f64::NAN,
        gen_loss: f64::NAN,
        penalty: 0.0,
        grad_norm_mean: 0.0,
        teacher_ratio,
        wall_s: 0.0,
        nan: false,
    };
    let result = (|| -> Result<()> {
        for _ in 0..state.config.n_critic {
            let out = critic_step::<S>(state, sampler, length)?;
            row.critic_loss = out.loss;
            row.penalty = out.penalty;
            row.grad_norm_mean = out.grad_norm_mean;
        }
        row.gen_loss = generator_step::<S>(state, sampler, length)?;
        Ok(())
    })();
    match result {
        Ok(()) => {}
        Err(Error::NonFiniteGradient { param }) => {
            log::warn!("non-finite gradient in {param} at iteration {}", row.iteration);
            row.nan = true;
        }
        Err(e) => return Err(e),
    }
    if !(row.critic_loss.is_finite() && row.gen_loss.is_finite()) {
        row.nan = true;
    }
    state.iteration += 1;
    state.stage = advance(state.stage, state.iteration as usize, &state.config.schedule);
    Ok(row)
}

/// `n_critic` critic updates followed by one generator update.
///
/// A non-finite gradient does not raise; the row comes back with `nan` set and
/// the caller is expected to stop.
pub fn train_step(state: &mut TrainState, sampler: &RealSampler) -> Result<MetricsRow> {
    match state.config.precision {
        Precision::F64 => step_impl::<f64>(state, sampler),
        Precision::F32 => step_impl::<f32>(state, sampler),
    }
}
