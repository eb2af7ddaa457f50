//! Lipschitz enforcement for the Wasserstein critic: weight clipping, the
//! two-sided gradient penalty `(‖∇f(x̂)‖₂ − 1)²`, and the one-sided penalty
//! `max(0, ‖∇f(x̂)‖₂ − 1)²`, evaluated on random interpolants between real and
//! generated sequences.
//!
//! Training on a penalty needs its gradient with respect to the critic
//! parameters, i.e. a derivative of a gradient. With `g = ∇ₓf` and
//! `u = ∂P/∂g`, the chain rule gives `∂P/∂θ = ∂θ(g·u)`, the parameter gradient
//! of a directional derivative of `f`. We get it by replaying the critic's
//! reverse pass in dual numbers with the inputs carrying tangent `u`: the
//! tangent part of the resulting parameter gradient is exactly `∂θ(g·u)`.

use std::fmt;

use rand::Rng;

use crate::autodiff::{Dual, Mat, Scalar};
use crate::error::{Error, Result};
use crate::model::{Critic, SeqBatch};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PenaltyMode {
    /// Clamp every critic weight into `[−c, c]` after each update.
    Clip(f64),
    TwoSidedGp(f64),
    OneSidedLp(f64),
}

impl PenaltyMode {
    pub fn validate(&self) -> Result<()> {
        let (what, v) = match *self {
            PenaltyMode::Clip(c) => ("clip", c),
            PenaltyMode::TwoSidedGp(l) | PenaltyMode::OneSidedLp(l) => ("lambda", l),
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Invalid(format!("{what} must be positive, got {v}")));
        }
        Ok(())
    }

    /// The gradient penalty shape and weight, if this mode uses one.
    pub fn gradient_penalty(&self) -> Option<(GradPenalty, f64)> {
        match *self {
            PenaltyMode::Clip(_) => None,
            PenaltyMode::TwoSidedGp(l) => Some((GradPenalty::TwoSided, l)),
            PenaltyMode::OneSidedLp(l) => Some((GradPenalty::OneSided, l)),
        }
    }
}

impl fmt::Display for PenaltyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PenaltyMode::Clip(c) => write!(f, "wgan-clip(c={c})"),
            PenaltyMode::TwoSidedGp(l) => write!(f, "wgan-gp(lambda={l})"),
            PenaltyMode::OneSidedLp(l) => write!(f, "wgan-lp(lambda={l})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradPenalty {
    TwoSided,
    OneSided,
}

impl GradPenalty {
    fn term(self, n: f64) -> f64 {
        let d = match self {
            GradPenalty::TwoSided => n - 1.0,
            GradPenalty::OneSided => (n - 1.0).max(0.0),
        };
        d * d
    }

    fn slope(self, n: f64) -> f64 {
        match self {
            GradPenalty::TwoSided => 2.0 * (n - 1.0),
            GradPenalty::OneSided => 2.0 * (n - 1.0).max(0.0),
        }
    }

    /// `λ · mean φ(n)` over the batch.
    pub fn value(self, norms: &[f64], lambda: f64) -> Result<f64> {
        if norms.is_empty() {
            return Err(Error::Invalid("penalty of an empty batch".into()));
        }
        let sum: f64 = norms.iter().map(|&n| self.term(n)).sum();
        Ok(lambda * sum / norms.len() as f64)
    }
}

pub fn penalty_two_sided(norms: &[f64], lambda: f64) -> Result<f64> {
    GradPenalty::TwoSided.value(norms, lambda)
}

pub fn penalty_one_sided(norms: &[f64], lambda: f64) -> Result<f64> {
    GradPenalty::OneSided.value(norms, lambda)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterpolantBatch {
    pub points: SeqBatch,
    /// Per-sample mixing weight on the real endpoint.
    pub epsilons: Vec<f64>,
}

/// `x̂ = ε·x + (1−ε)·x̃` per sample, `ε ~ U[0, 1]`.
pub fn interpolate(real: &SeqBatch, fake: &SeqBatch, rng: &mut impl Rng) -> Result<InterpolantBatch> {
    let eps: Vec<f64> = (0..real.batch_size()).map(|_| rng.random::<f64>()).collect();
    interpolate_with(real, fake, &eps)
}

pub fn interpolate_with(real: &SeqBatch, fake: &SeqBatch, epsilons: &[f64]) -> Result<InterpolantBatch> {
    if !real.same_shape(fake) || epsilons.len() != real.batch_size() {
        return Err(Error::Shape(format!(
            "real {}×{}×{} vs fake {}×{}×{} with {} weights",
            real.len(),
            real.batch_size(),
            real.width(),
            fake.len(),
            fake.batch_size(),
            fake.width(),
            epsilons.len()
        )));
    }
    let steps = real
        .steps
        .iter()
        .zip(&fake.steps)
        .map(|(x, xt)| {
            Mat::from_fn(x.rows, x.cols, |b, v| {
                let e = epsilons[b];
                e * x.get(b, v) + (1.0 - e) * xt.get(b, v)
            })
        })
        .collect();
    Ok(InterpolantBatch {
        points: SeqBatch { steps },
        epsilons: epsilons.to_vec(),
    })
}

fn require_wasserstein(critic: &Critic) -> Result<()> {
    if critic.sigmoid_output {
        return Err(Error::PenaltyUndefined);
    }
    Ok(())
}

fn sample_norms(grads: &[Mat<f64>], batch: usize) -> Vec<f64> {
    let mut sq = vec![0.0; batch];
    for m in grads {
        for (b, s) in sq.iter_mut().enumerate() {
            *s += m.row(b).iter().map(|g| g * g).sum::<f64>();
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}

/// Per-sample `‖∇ₓ̂ f(x̂)‖₂` over all `T×V` input coordinates.
pub fn grad_norm(critic: &Critic, points: &SeqBatch) -> Result<Vec<f64>> {
    require_wasserstein(critic)?;
    let pass = critic.pass::<f64>(&points.steps, &vec![1.0; points.batch_size()])?;
    Ok(sample_norms(&pass.input_grads, points.batch_size()))
}

#[derive(Clone, Debug)]
pub struct PenaltyGrad {
    pub value: f64,
    pub norms: Vec<f64>,
    /// `∂penalty/∂θ` in the critic's parameter order.
    pub param_grads: Vec<Mat<f64>>,
}

/// Penalty value and its gradient with respect to every critic parameter,
/// computed at precision `S`.
pub fn penalty_with_grad<S: Scalar>(
    critic: &Critic,
    points: &SeqBatch,
    kind: GradPenalty,
    lambda: f64,
) -> Result<PenaltyGrad> {
    require_wasserstein(critic)?;
    let batch = points.batch_size();
    let inputs: Vec<Mat<S>> = points.steps.iter().map(|m| m.cast()).collect();
    let first = critic.pass::<S>(&inputs, &vec![S::one(); batch])?;
    let grads: Vec<Mat<f64>> = first.input_grads.iter().map(Mat::to_f64).collect();
    let norms = sample_norms(&grads, batch);
    let value = kind.value(&norms, lambda)?;

    // u_b = ∂P/∂g_b = (λ/B) φ'(‖g_b‖) g_b / ‖g_b‖
    let coef: Vec<f64> = norms
        .iter()
        .map(|&n| {
            if n > 0.0 {
                lambda / batch as f64 * kind.slope(n) / n
            } else {
                0.0
            }
        })
        .collect();
    let dual_inputs: Vec<Mat<Dual<S>>> = points
        .steps
        .iter()
        .zip(&grads)
        .map(|(x, g)| {
            Mat::from_fn(x.rows, x.cols, |b, v| {
                Dual::new(S::from_f64(x.get(b, v)), S::from_f64(coef[b] * g.get(b, v)))
            })
        })
        .collect();
    let second = critic.pass::<Dual<S>>(&dual_inputs, &vec![Dual::one(); batch])?;
    let param_grads = second
        .param_grads
        .iter()
        .map(|m| Mat::from_fn(m.rows, m.cols, |i, j| m.get(i, j).eps.to_f64()))
        .collect();
    Ok(PenaltyGrad {
        value,
        norms,
        param_grads,
    })
}

/// Clamps every value into `[−c, c]`.
pub fn clip_weights<'a>(params: impl IntoIterator<Item = &'a mut Tensor>, c: f64) {
    for t in params {
        for v in t.data_mut() {
            *v = v.clamp(-c, c);
        }
    }
}
