use std::fmt::Write as _;
use std::path::PathBuf;

use crate::corpus::Level;
use crate::curriculum::CurriculumSchedule;
use crate::error::{Error, Result};
use crate::model::{CellKind, NetConfig};
use crate::objectives::{AdamConfig, Precision, Regime, TrainConfig};

/// Everything a run needs, read from an INI-style file of `key = value` lines
/// under `[section]` headers. Keys are addressed as `section.key`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub corpus_path: Option<PathBuf>,
    /// When absent the corpus is partitioned into train and held-out parts.
    pub heldout_path: Option<PathBuf>,
    pub level: Level,
    pub max_vocab: usize,
    pub parts: usize,
    pub max_line_len: usize,

    pub cell: CellKind,
    pub hidden: usize,
    pub noise_dim: usize,
    pub layers: usize,
    pub precision: Precision,

    pub mode: String,
    pub lambda: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub n_critic: usize,
    pub adam: AdamConfig,
    pub iterations: u64,
    pub divergence_bound: f64,
    pub seed: u64,

    pub schedule: CurriculumSchedule,

    pub eval_interval: u64,
    pub eval_count: usize,
    pub sample_interval: u64,
    pub sample_count: usize,

    pub out_dir: PathBuf,
    pub checkpoint_interval: u64,
    /// Record real elapsed time in `metrics.csv`. Off by default so that
    /// repeated runs produce identical files.
    pub wall_clock: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus_path: None,
            heldout_path: None,
            level: Level::Word,
            max_vocab: 10_000,
            parts: 100,
            max_line_len: 10_000,
            cell: CellKind::Gru,
            hidden: 64,
            noise_dim: 16,
            layers: 1,
            precision: Precision::F64,
            mode: "wgan-lp".into(),
            lambda: 10.0,
            clip: 0.01,
            batch_size: 64,
            n_critic: 5,
            adam: AdamConfig::default(),
            iterations: 2000,
            divergence_bound: 1e6,
            seed: 0,
            schedule: CurriculumSchedule::default(),
            eval_interval: 500,
            eval_count: crate::eval::DEFAULT_EVAL_COUNT,
            sample_interval: 50,
            sample_count: 64,
            out_dir: PathBuf::from("runs/default"),
            checkpoint_interval: 500,
            wall_clock: false,
        }
    }
}

/// Every accepted key, in the order [`ExperimentConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "corpus.path",
    "corpus.heldout_path",
    "corpus.level",
    "corpus.max_vocab",
    "corpus.parts",
    "corpus.max_line_len",
    "model.cell",
    "model.hidden",
    "model.noise_dim",
    "model.layers",
    "model.precision",
    "train.mode",
    "train.lambda",
    "train.clip",
    "train.batch_size",
    "train.n_critic",
    "train.lr",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.iterations",
    "train.divergence_bound",
    "train.seed",
    "curriculum.max_len",
    "curriculum.iters_per_stage",
    "curriculum.variable_len",
    "curriculum.teacher_start",
    "curriculum.teacher_decay",
    "eval.eval_interval",
    "eval.eval_count",
    "eval.sample_interval",
    "eval.sample_count",
    "output.out_dir",
    "output.checkpoint_interval",
    "output.wall_clock",
];

/// Drops a trailing `; ...` or `# ...` comment that follows whitespace.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if (b == b';' || b == b'#') && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies the assignments in `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: malformed section header", n + 1)))?;
                section = Some(name.trim().to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let sec = section
                .as_deref()
                .ok_or_else(|| Error::Config(format!("line {}: assignment outside any section", n + 1)))?;
            self.set(&format!("{sec}.{}", key.trim()), value.trim())
                .map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                    other => Error::Config(format!("line {}: {other}", n + 1)),
                })?;
        }
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "corpus.path" => self.corpus_path = opt_path(value),
            "corpus.heldout_path" => self.heldout_path = opt_path(value),
            "corpus.level" => self.level = value.parse().map_err(|e: Error| Error::Config(format!("{key}: {e}")))?,
            "corpus.max_vocab" => self.max_vocab = num(key, value)?,
            "corpus.parts" => self.parts = num(key, value)?,
            "corpus.max_line_len" => self.max_line_len = num(key, value)?,
            "model.cell" => self.cell = value.parse().map_err(|e: Error| Error::Config(format!("{key}: {e}")))?,
            "model.hidden" => self.hidden = num(key, value)?,
            "model.noise_dim" => self.noise_dim = num(key, value)?,
            "model.layers" => self.layers = num(key, value)?,
            "model.precision" => {
                self.precision = value.parse().map_err(|e: Error| Error::Config(format!("{key}: {e}")))?
            }
            "train.mode" => self.mode = value.to_string(),
            "train.lambda" => self.lambda = num(key, value)?,
            "train.clip" => self.clip = num(key, value)?,
            "train.batch_size" => self.batch_size = num(key, value)?,
            "train.n_critic" => self.n_critic = num(key, value)?,
            "train.lr" => self.adam.learning_rate = num(key, value)?,
            "train.beta1" => self.adam.beta1 = num(key, value)?,
            "train.beta2" => self.adam.beta2 = num(key, value)?,
            "train.eps" => self.adam.epsilon = num(key, value)?,
            "train.iterations" => self.iterations = num(key, value)?,
            "train.divergence_bound" => self.divergence_bound = num(key, value)?,
            "train.seed" => self.seed = num(key, value)?,
            "curriculum.max_len" => self.schedule.max_length = num(key, value)?,
            "curriculum.iters_per_stage" => self.schedule.iterations_per_stage = num(key, value)?,
            "curriculum.variable_len" => self.schedule.variable_length = flag(key, value)?,
            "curriculum.teacher_start" => self.schedule.teacher_ratio_start = num(key, value)?,
            "curriculum.teacher_decay" => self.schedule.teacher_decay = num(key, value)?,
            "eval.eval_interval" => self.eval_interval = num(key, value)?,
            "eval.eval_count" => self.eval_count = num(key, value)?,
            "eval.sample_interval" => self.sample_interval = num(key, value)?,
            "eval.sample_count" => self.sample_count = num(key, value)?,
            "output.out_dir" => self.out_dir = PathBuf::from(value),
            "output.checkpoint_interval" => self.checkpoint_interval = num(key, value)?,
            "output.wall_clock" => self.wall_clock = flag(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn regime(&self) -> Result<Regime> {
        Regime::from_parts(&self.mode, self.lambda, self.clip).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks ranges. The vocabulary size is only known after ingestion, so
    /// [`ExperimentConfig::train_config`] takes it separately.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        self.regime()?;
        if self.max_vocab < 4 {
            return bad("corpus.max_vocab must be at least 4");
        }
        if self.heldout_path.is_none() && self.parts < 2 {
            return bad("corpus.parts must be at least 2");
        }
        if self.max_line_len == 0 {
            return bad("corpus.max_line_len must be positive");
        }
        if !(self.divergence_bound > 0.0) {
            return bad("train.divergence_bound must be positive");
        }
        if self.eval_count == 0 || self.sample_count == 0 {
            return bad("eval.eval_count and eval.sample_count must be positive");
        }
        self.train_config(self.max_vocab)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn train_config(&self, vocab_size: usize) -> TrainConfig {
        TrainConfig {
            regime: self.regime().unwrap_or(Regime::Gan),
            n_critic: self.n_critic,
            batch_size: self.batch_size,
            adam: self.adam,
            precision: self.precision,
            net: NetConfig {
                kind: self.cell,
                vocab_size,
                hidden_dim: self.hidden,
                layers: self.layers,
            },
            noise_dim: self.noise_dim,
            schedule: self.schedule.clone(),
        }
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "corpus.path" => path_text(&self.corpus_path),
            "corpus.heldout_path" => path_text(&self.heldout_path),
            "corpus.level" => self.level.to_string(),
            "corpus.max_vocab" => self.max_vocab.to_string(),
            "corpus.parts" => self.parts.to_string(),
            "corpus.max_line_len" => self.max_line_len.to_string(),
            "model.cell" => self.cell.to_string(),
            "model.hidden" => self.hidden.to_string(),
            "model.noise_dim" => self.noise_dim.to_string(),
            "model.layers" => self.layers.to_string(),
            "model.precision" => self.precision.to_string(),
            "train.mode" => self.mode.clone(),
            "train.lambda" => self.lambda.to_string(),
            "train.clip" => self.clip.to_string(),
            "train.batch_size" => self.batch_size.to_string(),
            "train.n_critic" => self.n_critic.to_string(),
            "train.lr" => self.adam.learning_rate.to_string(),
            "train.beta1" => self.adam.beta1.to_string(),
            "train.beta2" => self.adam.beta2.to_string(),
            "train.eps" => self.adam.epsilon.to_string(),
            "train.iterations" => self.iterations.to_string(),
            "train.divergence_bound" => self.divergence_bound.to_string(),
            "train.seed" => self.seed.to_string(),
            "curriculum.max_len" => self.schedule.max_length.to_string(),
            "curriculum.iters_per_stage" => self.schedule.iterations_per_stage.to_string(),
            "curriculum.variable_len" => self.schedule.variable_length.to_string(),
            "curriculum.teacher_start" => self.schedule.teacher_ratio_start.to_string(),
            "curriculum.teacher_decay" => self.schedule.teacher_decay.to_string(),
            "eval.eval_interval" => self.eval_interval.to_string(),
            "eval.eval_count" => self.eval_count.to_string(),
            "eval.sample_interval" => self.sample_interval.to_string(),
            "eval.sample_count" => self.sample_count.to_string(),
            "output.out_dir" => self.out_dir.display().to_string(),
            "output.checkpoint_interval" => self.checkpoint_interval.to_string(),
            "output.wall_clock" => self.wall_clock.to_string(),
            _ => unreachable!("key list and accessor disagree on {key}"),
        }
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for key in KEYS {
            let (section, name) = key.split_once('.').expect("keys are qualified");
            if section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{section}]");
                current = section;
            }
            let _ = writeln!(out, "{name} = {}", self.value_of(key));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_comments_are_ignored() {
        let c = ExperimentConfig::parse("[train]\nlambda = 3 ; weight\nmode = gan # plain\n[corpus]\npath = a#b.txt\n")
            .unwrap();
        assert_eq!(c.lambda, 3.0);
        assert_eq!(c.mode, "gan");
        assert_eq!(c.corpus_path, Some(PathBuf::from("a#b.txt")));
    }

    #[test]
    fn text_roundtrip() {
        let mut cfg = ExperimentConfig::default();
        cfg.corpus_path = Some("data/corpus.txt".into());
        cfg.lambda = 0.1;
        cfg.adam.learning_rate = 3e-4;
        cfg.schedule.variable_length = false;
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::parse("[train]\nlearning_rate = 1").is_err());
        assert!(ExperimentConfig::parse("[nope]\nseed = 1").is_err());
        assert!(ExperimentConfig::parse("seed = 1").is_err());
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply_override("train.sed=3").is_err());
        cfg.apply_override("train.seed=3").unwrap();
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn comments_and_whitespace() {
        let cfg = ExperimentConfig::parse("# run\n[train]\n  mode = wgan-gp  \n; other\nlambda=1\n").unwrap();
        assert_eq!(cfg.mode, "wgan-gp");
        assert_eq!(cfg.lambda, 1.0);
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        for bad in [
            "train.mode=wgan",
            "train.lambda=-1",
            "train.batch_size=0",
            "train.beta1=1",
            "corpus.parts=1",
        ] {
            let mut cfg = ExperimentConfig::default();
            cfg.apply_override(bad).unwrap();
            assert!(cfg.validate().is_err(), "{bad}");
        }
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply_override("model.hidden=abc").is_err());
    }
}
