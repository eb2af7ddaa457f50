//! Recurrent generator and critic over softmax-relaxed token sequences.

mod cell;
mod critic;
mod generator;
mod sequence;

pub use cell::{gru_step, lstm_step, BoundCell, CellKind, CellState, RecurrentCellParams};
pub use critic::{critic_score, BoundCritic, Critic, CriticPass};
pub use generator::{generate, sample_noise, BoundGenerator, Generator, NetConfig, Rollout};
pub use sequence::{argmax, sample_hard, SampleMode, SeqBatch, SoftSequence};

use crate::autodiff::{Mat, Scalar};
use crate::tensor::Tensor;

/// Anything owning named learnable tensors in a fixed order.
pub trait Module {
    fn named_params(&self) -> Vec<(String, &Tensor)>;
    /// Same order as [`Module::named_params`].
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Stores `grads` (in parameter order) into each tensor's gradient buffer.
    fn set_grads<S: Scalar>(&mut self, grads: &[Mat<S>]) {
        for (t, g) in self.params_mut().into_iter().zip(grads) {
            t.set_grad(g);
        }
    }

    fn zero_grads(&mut self) {
        for t in self.params_mut() {
            t.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(kind: CellKind, v: usize, h: usize) -> NetConfig {
        NetConfig {
            kind,
            vocab_size: v,
            hidden_dim: h,
            layers: 1,
        }
    }

    #[test]
    fn generated_steps_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [CellKind::Gru, CellKind::Lstm] {
            let g = Generator::new(net(kind, 7, 5), 3, &mut rng);
            let z = sample_noise(&mut rng, 1, 3);
            let s = generate(&g, &z.data, 6, None).unwrap();
            assert_eq!(s.len(), 6);
            for t in 0..6 {
                assert!((s.step(t).iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_readout_gives_uniform_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = Generator::new(net(CellKind::Gru, 4, 3), 2, &mut rng);
        g.out_w = crate::tensor::Tensor::zeros(&[4, 3]);
        let s = generate(&g, &[0.3, -1.2], 3, None).unwrap();
        for t in 0..3 {
            assert!(s.step(t).iter().all(|&p| (p - 0.25).abs() < 1e-12));
        }
    }

    #[test]
    fn full_teacher_forcing_feeds_teacher_tokens() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Generator::new(net(CellKind::Lstm, 5, 4), 2, &mut rng);
        let prefix = vec![3usize, 4, 0];
        let mut tape: Tape<f64> = Tape::new();
        let bound = g.bind(&mut tape);
        let z = tape.leaf(Mat::from_vec(1, 2, vec![0.1, 0.2]));
        let roll = g.rollout(&mut tape, &bound, z, 3, &[Some(prefix.clone())]).unwrap();
        for t in 0..3 {
            let out = tape.value(roll.outputs[t]);
            let expect = crate::corpus::one_hot(&prefix[t..t + 1], 5).unwrap();
            assert_eq!(out.data, expect.data);
            if t > 0 {
                let expect_in = crate::corpus::one_hot(&prefix[t - 1..t], 5).unwrap();
                assert_eq!(tape.value(roll.inputs[t]).data, expect_in.data);
            }
        }
        assert!(generate(&g, &[0.0, 0.0], 2, Some(&prefix)).is_err());
        assert!(generate(&g, &[0.0, 0.0], 0, None).is_err());
    }

    #[test]
    fn generation_is_reproducible() {
        let g = Generator::new(net(CellKind::Gru, 6, 4), 3, &mut ChaCha8Rng::seed_from_u64(9));
        let z = sample_noise(&mut ChaCha8Rng::seed_from_u64(10), 4, 3);
        let a = g.generate_batch::<f64>(&z, 5, &[]).unwrap();
        let b = g.generate_batch::<f64>(&z, 5, &[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_critic_scores() {
        let seq = SoftSequence::one_hot(&[0, 1, 2], 3).unwrap();
        let wgan = Critic::zeros(net(CellKind::Gru, 3, 2), false);
        assert_eq!(critic_score(&wgan, &seq).unwrap(), 0.0);
        let gan = Critic::zeros(net(CellKind::Lstm, 3, 2), true);
        assert_eq!(critic_score(&gan, &seq).unwrap(), 0.5);
        let wrong = SoftSequence::one_hot(&[0, 1], 2).unwrap();
        assert!(critic_score(&wgan, &wrong).is_err());
    }

    #[test]
    fn gan_critic_output_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = Critic::new(net(CellKind::Gru, 4, 3), true, &mut rng);
        let g = Generator::new(net(CellKind::Gru, 4, 3), 2, &mut rng);
        let z = sample_noise(&mut rng, 16, 2);
        let batch = g.generate_batch::<f64>(&z, 4, &[]).unwrap();
        assert!(c.score_batch(&batch).unwrap().iter().all(|&s| s > 0.0 && s < 1.0));
    }

    #[test]
    fn param_names_are_unique() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut n = net(CellKind::Lstm, 4, 3);
        n.layers = 2;
        let g = Generator::new(n, 2, &mut rng);
        let c = Critic::new(n, false, &mut rng);
        let mut names: Vec<String> = g
            .named_params()
            .into_iter()
            .chain(c.named_params())
            .map(|(n, _)| n)
            .collect();
        let total = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), total);
    }
}
