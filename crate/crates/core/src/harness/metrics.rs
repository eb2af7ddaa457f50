use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::eval::{EvalReport, MAX_N};
use crate::objectives::MetricsRow;

/// Fixed header of `metrics.csv`.
pub const METRICS_HEADER: &str =
    "iteration,stage_len,critic_loss,gen_loss,penalty,grad_norm_mean,teacher_ratio,wall_s,nan";

pub const EVAL_HEADER: &str =
    "iteration,percent_in_test_1,percent_in_test_2,percent_in_test_3,percent_in_test_4,novelty";

pub fn format_row(row: &MetricsRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        row.iteration,
        row.stage_len,
        row.critic_loss,
        row.gen_loss,
        row.penalty,
        row.grad_norm_mean,
        row.teacher_ratio,
        row.wall_s,
        u8::from(row.nan)
    )
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format_row(r));
        s.push('\n');
    }
    s
}

fn field<T: std::str::FromStr>(line: usize, name: &str, v: Option<&str>) -> Result<T> {
    let v = v.ok_or_else(|| Error::Invalid(format!("metrics line {line}: missing {name}")))?;
    v.parse()
        .map_err(|_| Error::Invalid(format!("metrics line {line}: bad {name} {v:?}")))
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Invalid("metrics.csv has an unexpected header".into()));
    }
    let mut rows: Vec<MetricsRow> = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let n = i + 2;
        let mut it = line.split(',');
        let row = MetricsRow {
            iteration: field(n, "iteration", it.next())?,
            stage_len: field(n, "stage_len", it.next())?,
            critic_loss: field(n, "critic_loss", it.next())?,
            gen_loss: field(n, "gen_loss", it.next())?,
            penalty: field(n, "penalty", it.next())?,
            grad_norm_mean: field(n, "grad_norm_mean", it.next())?,
            teacher_ratio: field(n, "teacher_ratio", it.next())?,
            wall_s: field(n, "wall_s", it.next())?,
            nan: field::<u8>(n, "nan", it.next())? != 0,
        };
        if it.next().is_some() {
            return Err(Error::Invalid(format!("metrics line {n}: too many fields")));
        }
        if rows.last().is_some_and(|p| p.iteration >= row.iteration) {
            return Err(Error::Invalid(format!("metrics line {n}: iterations must increase")));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// One line of `eval.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPoint {
    pub iteration: u64,
    pub percent_in_test: [f64; MAX_N],
    pub novelty: f64,
}

impl EvalPoint {
    pub fn from_report(iteration: u64, r: &EvalReport) -> Self {
        EvalPoint {
            iteration,
            percent_in_test: r.percent_in_test,
            novelty: r.novelty,
        }
    }
}

pub fn format_eval(p: &EvalPoint) -> String {
    let mut s = p.iteration.to_string();
    for v in p.percent_in_test {
        let _ = write!(s, ",{v}");
    }
    let _ = write!(s, ",{}", p.novelty);
    s
}

pub fn parse_eval_csv(text: &str) -> Result<Vec<EvalPoint>> {
    let mut lines = text.lines();
    if lines.next() != Some(EVAL_HEADER) {
        return Err(Error::Invalid("eval.csv has an unexpected header".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let n = i + 2;
            let mut it = line.split(',');
            let iteration = field(n, "iteration", it.next())?;
            let mut pit = [0.0; MAX_N];
            for (k, slot) in pit.iter_mut().enumerate() {
                *slot = field(n, &format!("percent_in_test_{}", k + 1), it.next())?;
            }
            Ok(EvalPoint {
                iteration,
                percent_in_test: pit,
                novelty: field(n, "novelty", it.next())?,
            })
        })
        .collect()
}
