use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use textgan_core::corpus::{desk_grammar, ingest_with, partition, sample_pcfg, IngestOptions, Pcfg};
use textgan_core::harness::{compare, evaluate_run, load_run, resume, run, ExperimentConfig, RunRecord};
use textgan_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "textgan",
    version,
    about = "Adversarial text generation with Lipschitz-regularized critics"
)]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (file for `synth`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.lambda=1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tokenize a corpus and write its vocabulary and train/held-out split.
    Ingest {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Sample sentences from a probabilistic grammar (the built-in toy grammar by default).
    Synth {
        #[arg(long, default_value_t = 10_000)]
        sentences: usize,
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        max_depth: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Train from scratch.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the latest checkpoint of a run directory.
    Eval {
        run: PathBuf,
        #[arg(long, default_value_t = textgan_core::eval::DEFAULT_EVAL_COUNT)]
        count: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Compare finished runs and write a table and an overlaid loss plot.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Continue a run from its latest checkpoint.
    Resume {
        run: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn report_run(r: &RunRecord) -> u8 {
    let last = r.metrics.last().map_or(0, |m| m.iteration);
    println!("{} iterations, output in {}", last, r.config.out_dir.display());
    if let Some(e) = r.evals.last() {
        println!(
            "%-in-test-1..4 = {:.4} {:.4} {:.4} {:.4}, novelty = {:.4}",
            e.percent_in_test[0], e.percent_in_test[1], e.percent_in_test[2], e.percent_in_test[3], e.novelty
        );
    }
    if r.diverged {
        eprintln!("run diverged");
        EXIT_DIVERGED
    } else {
        0
    }
}

fn cmd_ingest(input: &Path, common: &Common) -> anyhow::Result<u8> {
    let cfg = load_config(common)?;
    let out = common.out.clone().context("ingest needs --out DIR")?;
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let opts = IngestOptions {
        level: cfg.level,
        max_vocab: cfg.max_vocab,
        max_line_chars: cfg.max_line_len,
    };
    let corpus = ingest_with(text.lines(), &opts)?;
    let (train, heldout) = partition(&corpus, cfg.parts, cfg.seed)?;
    fs::create_dir_all(&out)?;
    fs::write(out.join("vocab.txt"), corpus.vocab.export())?;
    fs::write(out.join("train.txt"), train.to_text())?;
    fs::write(out.join("heldout.txt"), heldout.to_text())?;
    println!(
        "{} sentences ({} train, {} held out), vocabulary {}",
        corpus.len(),
        train.len(),
        heldout.len(),
        corpus.vocab.size()
    );
    Ok(0)
}

fn cmd_synth(sentences: usize, grammar: Option<&Path>, max_depth: usize, common: &Common) -> anyhow::Result<u8> {
    let g = match grammar {
        Some(p) => Pcfg::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => desk_grammar(),
    };
    let lines = sample_pcfg(&g, sentences, common.seed.unwrap_or(0), max_depth)?;
    let mut text = lines.join("\n");
    text.push('\n');
    match &common.out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_compare(runs: &[PathBuf], common: &Common) -> anyhow::Result<u8> {
    let summaries = runs
        .iter()
        .map(|d| load_run(d).with_context(|| format!("loading run {}", d.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let cmp = compare(&summaries)?;
    print!("{}", cmp.report());
    if let Some(out) = &common.out {
        cmp.write(out)?;
    }
    Ok(0)
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Ingest { input, common } => cmd_ingest(&input, &common),
        Command::Synth {
            sentences,
            grammar,
            max_depth,
            common,
        } => cmd_synth(sentences, grammar.as_deref(), max_depth, &common),
        Command::Train { common } => {
            let cfg = load_config(&common)?;
            Ok(report_run(&run(&cfg)?))
        }
        Command::Eval { run, count, common } => {
            let report = evaluate_run(&run, count, common.seed)?;
            print!("{}", report.to_text());
            if let Some(out) = &common.out {
                fs::create_dir_all(out)?;
                fs::write(out.join("eval_report.txt"), report.to_text())?;
                fs::write(out.join("samples.txt"), report.samples_text())?;
            }
            Ok(0)
        }
        Command::Compare { runs, common } => cmd_compare(&runs, &common),
        Command::Resume { run, common } => {
            if common.config.is_some() || common.out.is_some() {
                bail!("resume reads the configuration from the run directory; use --set to change keys");
            }
            let mut overrides = common.overrides.clone();
            if let Some(s) = common.seed {
                overrides.push(format!("train.seed={s}"));
            }
            Ok(report_run(&resume(&run, &overrides)?))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io(_) | Error::Checkpoint { .. } => EXIT_IO,
                _ => EXIT_USAGE,
            };
        }
    }
    EXIT_USAGE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
