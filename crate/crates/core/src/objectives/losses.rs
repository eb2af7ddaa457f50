use crate::error::{Error, Result};

/// Floor applied inside logarithms so `log 0` never occurs.
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Losses {
    pub critic: f64,
    pub generator: f64,
}

fn mean(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Invalid("loss over an empty batch".into()));
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

fn check_probs(v: &[f64]) -> Result<()> {
    match v.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(p) => Err(Error::Invalid(format!("discriminator output {p} outside [0, 1]"))),
        None => Ok(()),
    }
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Standard GAN losses on discriminator outputs.
///
/// The discriminator minimizes `−E[log D(x)] − E[log(1 − D(x̂))]`. The generator
/// minimizes the non-saturating `−E[log D(x̂)]` rather than `E[log(1 − D(x̂))]`,
/// which has vanishing gradient while the discriminator is winning.
pub fn gan_losses(d_real: &[f64], d_fake: &[f64]) -> Result<Losses> {
    check_probs(d_real)?;
    check_probs(d_fake)?;
    let real: Vec<f64> = d_real.iter().map(|&d| -clamp(d).ln()).collect();
    let fake: Vec<f64> = d_fake.iter().map(|&d| -(1.0 - clamp(d)).ln()).collect();
    let gen: Vec<f64> = d_fake.iter().map(|&d| -clamp(d).ln()).collect();
    Ok(Losses {
        critic: mean(&real)? + mean(&fake)?,
        generator: mean(&gen)?,
    })
}

fn inside(d: f64) -> bool {
    d > PROB_FLOOR && d < 1.0 - PROB_FLOOR
}

/// `∂critic_loss/∂D` for the real and fake rows.
pub(crate) fn gan_critic_seeds(d_real: &[f64], d_fake: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (br, bf) = (d_real.len() as f64, d_fake.len() as f64);
    let real = d_real
        .iter()
        .map(|&d| if inside(d) { -1.0 / (br * d) } else { 0.0 })
        .collect();
    let fake = d_fake
        .iter()
        .map(|&d| if inside(d) { 1.0 / (bf * (1.0 - d)) } else { 0.0 })
        .collect();
    (real, fake)
}

/// `∂generator_loss/∂D(x̂)`.
pub(crate) fn gan_generator_seeds(d_fake: &[f64]) -> Vec<f64> {
    let b = d_fake.len() as f64;
    d_fake
        .iter()
        .map(|&d| if inside(d) { -1.0 / (b * d) } else { 0.0 })
        .collect()
}

/// Wasserstein losses: the critic minimizes `E[f(x̂)] − E[f(x)] + penalty`,
/// the generator minimizes `−E[f(x̂)]`.
pub fn wgan_losses(f_real: &[f64], f_fake: &[f64], penalty: f64) -> Result<Losses> {
    let fake = mean(f_fake)?;
    Ok(Losses {
        critic: fake - mean(f_real)? + penalty,
        generator: -fake,
    })
}
