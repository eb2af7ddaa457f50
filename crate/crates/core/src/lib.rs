//! Adversarial text generation with recurrent generators and critics, under
//! the standard GAN game or a Wasserstein critic kept Lipschitz by weight
//! clipping, a two-sided gradient penalty or a one-sided penalty.

pub mod autodiff;
pub mod corpus;
pub mod curriculum;
pub mod error;
pub mod eval;
pub mod harness;
pub mod lipschitz;
pub mod model;
pub mod objectives;
pub mod tensor;

pub use corpus::{ingest, partition, Level, TokenizedCorpus, Vocabulary};
pub use curriculum::{CurriculumSchedule, Stage};
pub use error::{Error, Result};
pub use eval::{build_index, evaluate, novelty_score, percent_in_test_n, EvalReport, NGramIndex};
pub use lipschitz::{GradPenalty, PenaltyMode};
pub use model::{CellKind, Critic, Generator, Module, NetConfig, SeqBatch, SoftSequence};
pub use objectives::{train_step, AdamConfig, MetricsRow, Precision, RealSampler, Regime, TrainConfig, TrainState};
pub use tensor::Tensor;
