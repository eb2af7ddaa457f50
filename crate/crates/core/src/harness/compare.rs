use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::metrics::{parse_eval_csv, parse_metrics_csv};
use super::plots::{line_chart, Series};
use super::run::{CONFIG_FILE, EVAL_FILE, METRICS_FILE};
use crate::error::{Error, Result};
use crate::objectives::MetricsRow;

/// What `compare` needs from one finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub mode: String,
    pub lambda: f64,
    pub rows: Vec<MetricsRow>,
    pub divergence_bound: f64,
    /// Novelty of the last evaluation.
    pub novelty: Option<f64>,
    pub samples: Vec<String>,
}

/// Moving-average window used for overlaid curves.
pub const SMOOTH_WINDOW: usize = 25;
const SAMPLES_SHOWN: usize = 5;

pub fn load_run(dir: &Path) -> Result<RunSummary> {
    let cfg = ExperimentConfig::parse(&fs::read_to_string(dir.join(CONFIG_FILE))?)?;
    let rows = parse_metrics_csv(&fs::read_to_string(dir.join(METRICS_FILE))?)?;
    let evals = match fs::read_to_string(dir.join(EVAL_FILE)) {
        Ok(t) => parse_eval_csv(&t)?,
        Err(_) => Vec::new(),
    };
    let samples = match latest_samples(dir)? {
        Some(p) => fs::read_to_string(p)?
            .lines()
            .take(SAMPLES_SHOWN)
            .map(str::to_string)
            .collect(),
        None => Vec::new(),
    };
    let label = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(RunSummary {
        label,
        mode: cfg.mode,
        lambda: cfg.lambda,
        rows,
        divergence_bound: cfg.divergence_bound,
        novelty: evals.last().map(|e| e.novelty),
        samples,
    })
}

fn latest_samples(dir: &Path) -> Result<Option<PathBuf>> {
    let Ok(entries) = fs::read_dir(dir.join("samples")) else {
        return Ok(None);
    };
    let mut files: Vec<PathBuf> = entries.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    files.sort();
    Ok(files.pop())
}

/// Population standard deviation of the critic loss over the last quarter of
/// the rows (at least one row).
pub fn stability(rows: &[MetricsRow]) -> f64 {
    if rows.is_empty() {
        return f64::NAN;
    }
    let tail = &rows[rows.len() - rows.len().div_ceil(4)..];
    let n = tail.len() as f64;
    // shifting by the first value keeps a constant tail at exactly zero
    let d: Vec<f64> = tail.iter().map(|r| r.critic_loss - tail[0].critic_loss).collect();
    let mean = d.iter().sum::<f64>() / n;
    (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn diverged(rows: &[MetricsRow], bound: f64) -> bool {
    rows.iter()
        .any(|r| r.nan || !r.critic_loss.is_finite() || r.critic_loss.abs() > bound)
}

/// Trailing moving average.
pub fn smooth(points: &[(f64, f64)], window: usize) -> Vec<(f64, f64)> {
    let w = window.max(1);
    (0..points.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let slice = &points[lo..=i];
            (points[i].0, slice.iter().map(|p| p.1).sum::<f64>() / slice.len() as f64)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonEntry {
    pub label: String,
    pub mode: String,
    pub lambda: f64,
    pub first_iteration: u64,
    pub last_iteration: u64,
    pub stability: f64,
    pub diverged: bool,
    pub final_critic_loss: f64,
    pub novelty: Option<f64>,
    pub samples: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    /// Sorted by label, so the report does not depend on input order.
    pub entries: Vec<ComparisonEntry>,
    /// Overlaid critic-loss curves; diverged runs are drawn raw and dashed,
    /// the rest smoothed.
    pub series: Vec<Series>,
}

pub fn compare(runs: &[RunSummary]) -> Result<Comparison> {
    if runs.len() < 2 {
        return Err(Error::Invalid("compare needs at least two runs".into()));
    }
    let mut sorted: Vec<&RunSummary> = runs.iter().collect();
    sorted.sort_by(|a, b| a.label.cmp(&b.label));
    let mut lo = 0u64;
    let mut hi = u64::MAX;
    for r in &sorted {
        let (Some(first), Some(last)) = (r.rows.first(), r.rows.last()) else {
            return Err(Error::Invalid(format!("run {} has no metrics rows", r.label)));
        };
        lo = lo.max(first.iteration);
        hi = hi.min(last.iteration);
    }
    if lo > hi {
        return Err(Error::Invalid("runs cover disjoint iteration ranges".into()));
    }

    let mut entries = Vec::new();
    let mut series = Vec::new();
    for r in sorted {
        let div = diverged(&r.rows, r.divergence_bound);
        let points: Vec<(f64, f64)> = r.rows.iter().map(|m| (m.iteration as f64, m.critic_loss)).collect();
        let label = if div {
            format!("{} (diverged)", r.label)
        } else {
            r.label.clone()
        };
        series.push(Series {
            label,
            points: if div { points } else { smooth(&points, SMOOTH_WINDOW) },
            dashed: div,
        });
        entries.push(ComparisonEntry {
            label: r.label.clone(),
            mode: r.mode.clone(),
            lambda: r.lambda,
            first_iteration: r.rows[0].iteration,
            last_iteration: r.rows[r.rows.len() - 1].iteration,
            stability: stability(&r.rows),
            diverged: div,
            final_critic_loss: r.rows[r.rows.len() - 1].critic_loss,
            novelty: r.novelty,
            samples: r.samples.clone(),
        });
    }
    Ok(Comparison { entries, series })
}

impl Comparison {
    pub fn table(&self) -> String {
        let width = self.entries.iter().map(|e| e.label.len()).max().unwrap_or(0).max(5);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:<9}  {:>7}  {:>11}  {:>9}  {:>14}  {:>8}  {:>7}",
            "run", "mode", "lambda", "iterations", "diverged", "std(last 25%)", "final", "novelty"
        );
        for e in &self.entries {
            let novelty = e.novelty.map_or("-".to_string(), |n| format!("{n:.3}"));
            let _ = writeln!(
                s,
                "{:<width$}  {:<9}  {:>7}  {:>11}  {:>9}  {:>14.6}  {:>8.4}  {:>7}",
                e.label,
                e.mode,
                e.lambda,
                format!("{}-{}", e.first_iteration, e.last_iteration),
                if e.diverged { "yes" } else { "no" },
                e.stability,
                e.final_critic_loss,
                novelty
            );
        }
        s
    }

    /// Table followed by a few final samples per run.
    pub fn report(&self) -> String {
        let mut s = self.table();
        for e in self.entries.iter().filter(|e| !e.samples.is_empty()) {
            let _ = writeln!(s, "\nsamples from {}:", e.label);
            for line in &e.samples {
                let _ = writeln!(s, "  {line}");
            }
        }
        s
    }

    pub fn plot(&self) -> String {
        line_chart("Critic loss", "iteration", "critic loss", &self.series)
    }

    /// Writes `comparison.txt` and `critic_loss.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("comparison.txt"), self.report())?;
        fs::write(dir.join("critic_loss.svg"), self.plot())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(losses: &[f64]) -> Vec<MetricsRow> {
        losses
            .iter()
            .enumerate()
            .map(|(i, &l)| MetricsRow {
                iteration: i as u64 + 1,
                stage_len: 1,
                critic_loss: l,
                gen_loss: 0.0,
                penalty: 0.0,
                grad_norm_mean: 0.0,
                teacher_ratio: 0.0,
                wall_s: 0.0,
                nan: false,
            })
            .collect()
    }

    fn run(label: &str, losses: &[f64]) -> RunSummary {
        RunSummary {
            label: label.into(),
            mode: "wgan-lp".into(),
            lambda: 10.0,
            rows: rows(losses),
            divergence_bound: 1e6,
            novelty: None,
            samples: vec![],
        }
    }

    #[test]
    fn constant_loss_is_perfectly_stable() {
        assert_eq!(stability(&rows(&[0.7; 40])), 0.0);
    }

    #[test]
    fn stability_uses_last_quarter() {
        // last 2 of 8 rows are 1 and 3
        assert_eq!(stability(&rows(&[100.0, -50.0, 9.0, 9.0, 0.0, 0.0, 1.0, 3.0])), 1.0);
    }

    #[test]
    fn diverged_run_marked_and_unsmoothed() {
        let c = compare(&[run("gp", &[1.0, 2e6, 3.0]), run("lp", &[1.0, 2.0, 3.0])]).unwrap();
        assert!(c.entries[0].diverged && !c.entries[1].diverged);
        assert!(c.series[0].dashed && c.series[0].label.contains("diverged"));
        assert_eq!(c.series[0].points[1].1, 2e6);
        assert_eq!(c.series[1].points[1].1, 1.5);
        let svg = c.plot();
        assert!(svg.contains("gp (diverged)") && svg.contains(">lp<"));
    }

    #[test]
    fn order_of_runs_does_not_matter() {
        let a = run("a", &[1.0, 2.0, 0.5, 0.25]);
        let b = run("b", &[3.0, 1.0, 4.0, 1.0]);
        assert_eq!(compare(&[a.clone(), b.clone()]).unwrap(), compare(&[b, a]).unwrap());
    }

    #[test]
    fn disjoint_ranges_rejected() {
        let a = run("a", &[1.0, 2.0]);
        let mut b = run("b", &[1.0, 2.0]);
        for r in b.rows.iter_mut() {
            r.iteration += 10;
        }
        assert!(compare(&[a.clone(), b]).is_err());
        assert!(compare(&[a]).is_err());
    }

    #[test]
    fn smoothing_is_trailing_mean() {
        let p = [(1.0, 1.0), (2.0, 3.0), (3.0, 5.0)];
        assert_eq!(smooth(&p, 2), vec![(1.0, 1.0), (2.0, 2.0), (3.0, 4.0)]);
    }
}
