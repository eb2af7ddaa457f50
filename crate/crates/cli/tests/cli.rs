use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn textgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_textgan")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn tiny_run_args<'a>(corpus: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "train",
        "--set",
        "model.hidden=4",
        "--set",
        "model.noise_dim=2",
        "--set",
        "train.batch_size=4",
        "--set",
        "train.n_critic=1",
        "--set",
        "train.iterations=12",
        "--set",
        "curriculum.max_len=3",
        "--set",
        "curriculum.iters_per_stage=4",
        "--set",
        "eval.eval_interval=6",
        "--set",
        "eval.eval_count=8",
        "--set",
        "eval.sample_interval=6",
        "--set",
        "eval.sample_count=4",
        "--set",
        "output.checkpoint_interval=6",
        "--set",
        "corpus.parts=10",
        "--set",
        corpus,
        "--out",
        out,
    ]
}

fn synth(dir: &Path) -> String {
    let corpus = dir.join("desk.txt");
    let o = textgan(&[
        "synth",
        "--sentences",
        "300",
        "--seed",
        "2",
        "--out",
        corpus.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    format!("corpus.path={}", corpus.display())
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&textgan(&["--help"])), 0);
    assert_eq!(code(&textgan(&["frobnicate"])), 1);
    assert_eq!(code(&textgan(&["train", "--set", "train.nope=1"])), 1);
    assert_eq!(code(&textgan(&["train", "--set", "train.mode=wgan-xx"])), 1);
    assert_eq!(code(&textgan(&["compare", "only-one"])), 1);
}

#[test]
fn missing_files_are_io_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing.ini");
    assert_eq!(code(&textgan(&["train", "--config", missing.to_str().unwrap()])), 3);
    assert_eq!(code(&textgan(&["resume", tmp.path().to_str().unwrap()])), 3);
}

#[test]
fn synth_is_seeded_and_ingest_splits() {
    let tmp = tempfile::tempdir().unwrap();
    let a = textgan(&["synth", "--sentences", "50", "--seed", "4"]);
    let b = textgan(&["synth", "--sentences", "50", "--seed", "4"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8(a.stdout.clone()).unwrap().lines().count(), 50);

    let input = tmp.path().join("in.txt");
    fs::write(&input, a.stdout).unwrap();
    let out = tmp.path().join("ing");
    let o = textgan(&[
        "ingest",
        input.to_str().unwrap(),
        "--set",
        "corpus.parts=5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let train = fs::read_to_string(out.join("train.txt")).unwrap();
    let held = fs::read_to_string(out.join("heldout.txt")).unwrap();
    assert!(!train.is_empty() && !held.is_empty());
    assert!(held.lines().all(|l| !train.lines().any(|t| t == l)));
    assert!(fs::read_to_string(out.join("vocab.txt")).unwrap().starts_with("[unk]"));
}

#[test]
fn train_resume_eval_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = textgan(&tiny_run_args(&corpus, dir.to_str().unwrap()));
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(
        fs::read(a.join("metrics.csv")).unwrap(),
        fs::read(b.join("metrics.csv")).unwrap()
    );

    let o = textgan(&["resume", a.to_str().unwrap(), "--set", "train.iterations=18"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(a.join("metrics.csv")).unwrap().lines().count(), 19);
    assert_eq!(code(&textgan(&["resume", a.to_str().unwrap(), "--out", "x"])), 1);

    let o = textgan(&["eval", a.to_str().unwrap(), "--count", "8"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().contains("novelty"));

    let cmp = tmp.path().join("cmp");
    let o = textgan(&[
        "compare",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--out",
        cmp.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(cmp.join("comparison.txt").exists() && cmp.join("critic_loss.svg").exists());
}

#[test]
fn divergence_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path());
    let out = tmp.path().join("div");
    let mut args = tiny_run_args(&corpus, out.to_str().unwrap());
    args.extend(["--set", "train.divergence_bound=1e-12"]);
    let o = textgan(&args);
    assert_eq!(code(&o), 2);
    assert!(out.join("summary.txt").exists());
}

#[test]
fn corrupt_checkpoint_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path());
    let out = tmp.path().join("run");
    assert_eq!(code(&textgan(&tiny_run_args(&corpus, out.to_str().unwrap()))), 0);
    let blob = out.join("checkpoints/ckpt_00000012/state.bin");
    let bytes = fs::read(&blob).unwrap();
    fs::write(&blob, &bytes[..bytes.len() / 2]).unwrap();
    let o = textgan(&["resume", out.to_str().unwrap(), "--set", "train.iterations=20"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8(o.stderr).unwrap().contains("blob.length"));
}
