//! Sequence-length curriculum with probabilistic teacher prefixes.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CurriculumSchedule {
    pub max_length: usize,
    pub iterations_per_stage: usize,
    pub variable_length: bool,
    pub teacher_ratio_start: f64,
    /// Multiplies the teacher ratio at every stage change.
    pub teacher_decay: f64,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        CurriculumSchedule {
            max_length: 25,
            iterations_per_stage: 1000,
            variable_length: true,
            teacher_ratio_start: 0.25,
            teacher_decay: 0.5,
        }
    }
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.max_length == 0 {
            return Err(Error::Invalid("max_len must be at least 1".into()));
        }
        if self.iterations_per_stage == 0 {
            return Err(Error::Invalid("iters_per_stage must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.teacher_ratio_start) {
            return Err(Error::Invalid("teacher_start must lie in [0, 1]".into()));
        }
        if !(self.teacher_decay >= 0.0 && self.teacher_decay.is_finite()) {
            return Err(Error::Invalid("teacher_decay must be a non-negative number".into()));
        }
        Ok(())
    }

    pub fn first_stage(&self) -> Stage {
        Stage {
            current_max: 1,
            teacher_ratio: self.teacher_ratio_start,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage {
    pub current_max: usize,
    pub teacher_ratio: f64,
}

/// Moves to the next stage when `iteration` lands on a multiple of the stage
/// budget. The length is capped at `max_length`; the teacher ratio keeps decaying.
pub fn advance(stage: Stage, iteration: usize, schedule: &CurriculumSchedule) -> Stage {
    if iteration == 0 || iteration % schedule.iterations_per_stage != 0 {
        return stage;
    }
    Stage {
        current_max: (stage.current_max + 1).min(schedule.max_length),
        teacher_ratio: (stage.teacher_ratio * schedule.teacher_decay).clamp(0.0, 1.0),
    }
}

/// Uniform in `[1, current_max]` when `variable`, otherwise `current_max`.
pub fn sample_length(stage: &Stage, variable: bool, rng: &mut impl Rng) -> usize {
    if variable && stage.current_max > 1 {
        rng.random_range(1..=stage.current_max)
    } else {
        stage.current_max.max(1)
    }
}

/// With probability `teacher_ratio`, the first `⌈teacher_ratio·T⌉` tokens of
/// `real_sentence`.
pub fn teacher_prefix(
    real_sentence: &[usize],
    length: usize,
    stage: &Stage,
    rng: &mut impl Rng,
) -> Result<Option<Vec<usize>>> {
    if real_sentence.len() < length {
        return Err(Error::Invalid(format!(
            "teacher sentence has {} tokens, need {length}",
            real_sentence.len()
        )));
    }
    let u: f64 = rng.random();
    if stage.teacher_ratio <= 0.0 || u >= stage.teacher_ratio {
        return Ok(None);
    }
    let k = ((stage.teacher_ratio * length as f64).ceil() as usize).min(length);
    Ok(Some(real_sentence[..k].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sched(ips: usize) -> CurriculumSchedule {
        CurriculumSchedule {
            max_length: 25,
            iterations_per_stage: ips,
            variable_length: true,
            teacher_ratio_start: 0.5,
            teacher_decay: 0.5,
        }
    }

    #[test]
    fn threshold_not_crossed() {
        let s = sched(100);
        let st = s.first_stage();
        assert_eq!(advance(st, 99, &s), st);
        assert_eq!(advance(st, 100, &s).current_max, 2);
        assert_eq!(advance(st, 100, &s).teacher_ratio, 0.25);
    }

    #[test]
    fn length_capped() {
        let s = sched(1);
        let st = Stage {
            current_max: 25,
            teacher_ratio: 0.0,
        };
        assert_eq!(advance(st, 5, &s).current_max, 25);
    }

    #[test]
    fn zero_decay_kills_teacher() {
        let mut s = sched(10);
        s.teacher_decay = 0.0;
        let st = advance(s.first_stage(), 10, &s);
        assert_eq!(st.teacher_ratio, 0.0);
        assert_eq!(advance(st, 20, &s).teacher_ratio, 0.0);
    }

    #[test]
    fn fixed_and_unit_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let one = Stage {
            current_max: 1,
            teacher_ratio: 0.0,
        };
        let seven = Stage {
            current_max: 7,
            teacher_ratio: 0.0,
        };
        for _ in 0..100 {
            assert_eq!(sample_length(&one, true, &mut rng), 1);
            assert_eq!(sample_length(&seven, false, &mut rng), 7);
        }
    }

    #[test]
    fn variable_lengths_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let st = Stage {
            current_max: 4,
            teacher_ratio: 0.0,
        };
        let mut counts = [0usize; 5];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_length(&st, true, &mut rng)] += 1;
        }
        assert_eq!(counts[0], 0);
        for &c in &counts[1..] {
            let f = c as f64 / n as f64;
            assert!((0.24..=0.26).contains(&f), "{f}");
        }
    }

    #[test]
    fn teacher_prefix_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sent = [5, 6, 7, 8, 9, 2];
        let none = Stage {
            current_max: 5,
            teacher_ratio: 0.0,
        };
        let full = Stage {
            current_max: 5,
            teacher_ratio: 1.0,
        };
        let half = Stage {
            current_max: 4,
            teacher_ratio: 0.5,
        };
        for _ in 0..50 {
            assert_eq!(teacher_prefix(&sent, 5, &none, &mut rng).unwrap(), None);
            assert_eq!(
                teacher_prefix(&sent, 5, &full, &mut rng).unwrap(),
                Some(vec![5, 6, 7, 8, 9])
            );
            if let Some(p) = teacher_prefix(&sent, 4, &half, &mut rng).unwrap() {
                assert_eq!(p.len(), 2);
            }
        }
        assert!(teacher_prefix(&sent[..2], 4, &full, &mut rng).is_err());
    }
}
