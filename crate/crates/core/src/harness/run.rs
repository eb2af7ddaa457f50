use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{latest_checkpoint, load_checkpoint, write_checkpoint, RunCounters};
use super::config::ExperimentConfig;
use super::metrics::{
    format_eval, format_row, parse_eval_csv, parse_metrics_csv, EvalPoint, EVAL_HEADER, METRICS_HEADER,
};
use super::plots::emit_plots;
use crate::corpus::{encode_lines, ingest_with, partition, IngestOptions, TokenizedCorpus, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{build_index, draw_samples, evaluate, EvalReport, NGramIndex, NoveltyTracker, MAX_N};
use crate::objectives::{train_step, MetricsRow, RealSampler, TrainState};

pub const CONFIG_FILE: &str = "config.ini";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Train and held-out sentences sharing one vocabulary.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: TokenizedCorpus,
    pub heldout: TokenizedCorpus,
}

/// Outcome of a run, mirroring what is written to its directory.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub metrics: Vec<MetricsRow>,
    pub evals: Vec<EvalPoint>,
    /// Full report of the most recent evaluation.
    pub last_report: Option<EvalReport>,
    pub final_checkpoint: Option<PathBuf>,
    pub diverged: bool,
    pub wall_seconds: f64,
    /// Novelty over every periodic sample drawn during the run.
    pub running_novelty: Option<f64>,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?.lines().map(str::to_string).collect())
}

/// Ingests the configured corpus and splits off the held-out set.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let path = cfg
        .corpus_path
        .as_ref()
        .ok_or_else(|| Error::Config("corpus.path is not set".into()))?;
    let opts = IngestOptions {
        level: cfg.level,
        max_vocab: cfg.max_vocab,
        max_line_chars: cfg.max_line_len,
    };
    let corpus = ingest_with(read_lines(path)?, &opts)?;
    match &cfg.heldout_path {
        Some(h) => {
            let heldout = encode_lines(read_lines(h)?, &corpus.vocab, cfg.level);
            if heldout.is_empty() {
                return Err(Error::EmptyCorpus);
            }
            Ok(PreparedData { train: corpus, heldout })
        }
        None => {
            let (train, heldout) = partition(&corpus, cfg.parts, cfg.seed)?;
            Ok(PreparedData { train, heldout })
        }
    }
}

/// Evaluation randomness depends only on the seed and the iteration, so an
/// interrupted run evaluates exactly like an unbroken one.
pub fn eval_rng(seed: u64, iteration: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e7a1);
    rng.set_stream(iteration.wrapping_mul(4).wrapping_add(purpose));
    rng
}

const PURPOSE_EVAL: u64 = 1;
const PURPOSE_SAMPLES: u64 = 2;

fn iter_file(dir: &Path, sub: &str, iteration: u64) -> PathBuf {
    dir.join(sub).join(format!("iter_{iteration:08}.txt"))
}

struct Driver<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a PreparedData,
    index: NGramIndex,
    tracker: NoveltyTracker,
    dir: PathBuf,
    metrics: BufWriter<fs::File>,
    eval_log: BufWriter<fs::File>,
}

impl Driver<'_> {
    fn samples(&mut self, state: &TrainState) -> Result<()> {
        let mut rng = eval_rng(self.cfg.seed, state.iteration, PURPOSE_SAMPLES);
        let ids = draw_samples(
            &state.generator,
            self.cfg.sample_count,
            self.cfg.schedule.max_length,
            &mut rng,
        )?;
        self.tracker.add(&ids);
        let mut text = String::new();
        for s in &ids {
            text.push_str(&self.data.train.render(s));
            text.push('\n');
        }
        let path = iter_file(&self.dir, "samples", state.iteration);
        fs::create_dir_all(path.parent().expect("has parent"))?;
        fs::write(path, text)?;
        Ok(())
    }

    fn evaluate(&mut self, state: &TrainState) -> Result<(EvalPoint, EvalReport)> {
        let mut rng = eval_rng(self.cfg.seed, state.iteration, PURPOSE_EVAL);
        let report = evaluate(
            &state.generator,
            &self.index,
            &self.data.train,
            self.cfg.eval_count,
            self.cfg.schedule.max_length,
            &mut rng,
        )?;
        let path = iter_file(&self.dir, "evals", state.iteration);
        fs::create_dir_all(path.parent().expect("has parent"))?;
        fs::write(path, report.to_text())?;
        let point = EvalPoint::from_report(state.iteration, &report);
        writeln!(self.eval_log, "{}", format_eval(&point))?;
        self.eval_log.flush()?;
        Ok((point, report))
    }
}

fn every(interval: u64, iteration: u64) -> bool {
    interval > 0 && iteration % interval == 0
}

fn open_log(path: &Path, header: &str, lines: impl Iterator<Item = String>) -> Result<BufWriter<fs::File>> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{header}")?;
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(w)
}

fn drive(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    mut state: TrainState,
    counters: RunCounters,
    mut rows: Vec<MetricsRow>,
    mut evals: Vec<EvalPoint>,
) -> Result<RunRecord> {
    let started = Instant::now();
    let dir = cfg.out_dir.clone();
    let mut tracker = NoveltyTracker::new(&data.train);
    tracker.novel = counters.novel;
    tracker.total = counters.total;
    let mut d = Driver {
        cfg,
        data,
        index: build_index(&data.heldout, MAX_N)?,
        tracker,
        metrics: open_log(&dir.join(METRICS_FILE), METRICS_HEADER, rows.iter().map(format_row))?,
        eval_log: open_log(&dir.join(EVAL_FILE), EVAL_HEADER, evals.iter().map(format_eval))?,
        dir: dir.clone(),
    };
    let sampler = RealSampler::new(&data.train);
    let wall_offset = rows.last().map_or(0.0, |r| r.wall_s);
    let mut last_report = None;
    let mut final_checkpoint = latest_checkpoint(&dir)?;
    let mut diverged = false;

    if state.iteration == 0 && evals.is_empty() {
        let (p, r) = d.evaluate(&state)?;
        evals.push(p);
        last_report = Some(r);
        d.samples(&state)?;
    }

    while state.iteration < cfg.iterations {
        let mut row = train_step(&mut state, &sampler)?;
        if cfg.wall_clock {
            row.wall_s = wall_offset + started.elapsed().as_secs_f64();
        }
        writeln!(d.metrics, "{}", format_row(&row))?;
        diverged = row.nan || !row.critic_loss.is_finite() || row.critic_loss.abs() > cfg.divergence_bound;
        rows.push(row);
        if diverged {
            log::warn!("run diverged at iteration {}", state.iteration);
            break;
        }
        let it = state.iteration;
        if every(cfg.sample_interval, it) {
            d.samples(&state)?;
        }
        if every(cfg.eval_interval, it) {
            let (p, r) = d.evaluate(&state)?;
            evals.push(p);
            last_report = Some(r);
        }
        if every(cfg.checkpoint_interval, it) {
            d.metrics.flush()?;
            let counters = RunCounters {
                novel: d.tracker.novel,
                total: d.tracker.total,
            };
            final_checkpoint = Some(write_checkpoint(&dir, &state, counters)?);
        }
    }
    d.metrics.flush()?;

    if evals.last().map(|e| e.iteration) != Some(state.iteration) {
        let (p, r) = d.evaluate(&state)?;
        evals.push(p);
        last_report = Some(r);
    }
    if !diverged
        && final_checkpoint.as_ref().and_then(|p| p.file_name())
            != Some(format!("ckpt_{:08}", state.iteration).as_ref())
    {
        let counters = RunCounters {
            novel: d.tracker.novel,
            total: d.tracker.total,
        };
        final_checkpoint = Some(write_checkpoint(&dir, &state, counters)?);
    }
    if !rows.is_empty() {
        emit_plots(&rows, &dir.join("plots"))?;
    }
    let record = RunRecord {
        config: cfg.clone(),
        metrics: rows,
        evals,
        last_report,
        final_checkpoint,
        diverged,
        wall_seconds: started.elapsed().as_secs_f64(),
        running_novelty: d.tracker.score(),
    };
    fs::write(dir.join(SUMMARY_FILE), summary_text(&record))?;
    Ok(record)
}

/// Key-value summary of a finished run. Holds the only wall-clock figure
/// that is always recorded.
pub fn summary_text(r: &RunRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mode = {}", r.config.mode);
    let _ = writeln!(s, "seed = {}", r.config.seed);
    let _ = writeln!(
        s,
        "iterations_completed = {}",
        r.metrics.last().map_or(0, |m| m.iteration)
    );
    let _ = writeln!(s, "diverged = {}", r.diverged);
    let ckpt = r
        .final_checkpoint
        .as_ref()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let _ = writeln!(s, "final_checkpoint = {ckpt}");
    if let Some(e) = r.evals.last() {
        for (k, v) in e.percent_in_test.iter().enumerate() {
            let _ = writeln!(s, "percent_in_test_{} = {v}", k + 1);
        }
        let _ = writeln!(s, "novelty = {}", e.novelty);
    }
    if let Some(n) = r.running_novelty {
        let _ = writeln!(s, "running_novelty = {n}");
    }
    let _ = writeln!(s, "wall_seconds = {:.3}", r.wall_seconds);
    s
}

/// Runs the configured experiment in `cfg.out_dir` from scratch.
pub fn run(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir)?;
    for stale in ["checkpoints", "samples", "evals", "plots"] {
        let p = dir.join(stale);
        if p.exists() {
            fs::remove_dir_all(p)?;
        }
    }
    fs::write(dir.join(CONFIG_FILE), cfg.to_text())?;
    fs::write(dir.join("vocab.txt"), data.train.vocab.export())?;
    let state = TrainState::new(cfg.train_config(data.train.vocab.size()), cfg.seed)?;
    drive(cfg, &data, state, RunCounters::default(), Vec::new(), Vec::new())
}

/// Reads `config.ini` from a run directory and applies `overrides`.
pub fn load_run_config(run_dir: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::parse(&fs::read_to_string(run_dir.join(CONFIG_FILE))?)?;
    for o in overrides {
        cfg.apply_override(o)?;
    }
    cfg.out_dir = run_dir.to_path_buf();
    cfg.validate()?;
    Ok(cfg)
}

fn check_vocab(run_dir: &Path, vocab: &Vocabulary) -> Result<()> {
    let saved = Vocabulary::import(&fs::read_to_string(run_dir.join("vocab.txt"))?)?;
    if &saved != vocab {
        return Err(Error::Invalid(
            "corpus no longer produces the vocabulary this run was trained with".into(),
        ));
    }
    Ok(())
}

fn remove_after(dir: &Path, iteration: u64) -> Result<()> {
    let Ok(entries) = fs::read_dir(dir) else {
        return Ok(());
    };
    for e in entries {
        let path = e?.path();
        let n = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.strip_prefix("iter_"))
            .and_then(|s| s.parse::<u64>().ok());
        if n.is_some_and(|n| n > iteration) {
            fs::remove_file(path)?;
        }
    }
    Ok(())
}

/// Continues a run from its latest checkpoint. Logs are cut back to the
/// checkpoint's iteration first, so the result matches an unbroken run.
pub fn resume(run_dir: &Path, overrides: &[String]) -> Result<RunRecord> {
    let cfg = load_run_config(run_dir, overrides)?;
    let data = prepare_data(&cfg)?;
    check_vocab(run_dir, &data.train.vocab)?;
    let ckpt = latest_checkpoint(run_dir)?.ok_or_else(|| Error::checkpoint("latest", "run has no checkpoint"))?;
    let (state, counters) = load_checkpoint(&ckpt, cfg.train_config(data.train.vocab.size()))?;
    let k = state.iteration;
    let rows: Vec<MetricsRow> = parse_metrics_csv(&fs::read_to_string(run_dir.join(METRICS_FILE))?)?
        .into_iter()
        .filter(|r| r.iteration <= k)
        .collect();
    let evals: Vec<EvalPoint> = parse_eval_csv(&fs::read_to_string(run_dir.join(EVAL_FILE))?)?
        .into_iter()
        .filter(|e| e.iteration <= k)
        .collect();
    remove_after(&run_dir.join("samples"), k)?;
    remove_after(&run_dir.join("evals"), k)?;
    fs::write(run_dir.join(CONFIG_FILE), cfg.to_text())?;
    drive(&cfg, &data, state, counters, rows, evals)
}

/// Evaluates the latest checkpoint of a run with `count` samples.
pub fn evaluate_run(run_dir: &Path, count: usize, seed: Option<u64>) -> Result<EvalReport> {
    let cfg = load_run_config(run_dir, &[])?;
    let data = prepare_data(&cfg)?;
    check_vocab(run_dir, &data.train.vocab)?;
    let ckpt = latest_checkpoint(run_dir)?.ok_or_else(|| Error::checkpoint("latest", "run has no checkpoint"))?;
    let (state, _) = load_checkpoint(&ckpt, cfg.train_config(data.train.vocab.size()))?;
    let index = build_index(&data.heldout, MAX_N)?;
    let mut rng = eval_rng(seed.unwrap_or(cfg.seed), state.iteration, PURPOSE_EVAL);
    evaluate(
        &state.generator,
        &index,
        &data.train,
        count,
        cfg.schedule.max_length,
        &mut rng,
    )
}
