//! Line charts as plain SVG text. Layout is fixed and numbers are printed with
//! fixed precision, so equal inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::objectives::MetricsRow;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
            dashed: false,
        }
    }

    fn finite(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points
            .iter()
            .copied()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
    }
}

/// Smallest and largest finite value per axis over all series.
pub fn axis_ranges(series: &[Series]) -> Option<((f64, f64), (f64, f64))> {
    let mut it = series.iter().flat_map(Series::finite);
    let (x0, y0) = it.next()?;
    let init = ((x0, x0), (y0, y0));
    Some(it.fold(init, |((xl, xh), (yl, yh)), (x, y)| {
        ((xl.min(x), xh.max(x)), (yl.min(y), yh.max(y)))
    }))
}

fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the series on one set of axes. Series without finite points are
/// left out, legend included.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let shown: Vec<&Series> = series.iter().filter(|s| s.finite().next().is_some()).collect();
    let owned: Vec<Series> = shown.iter().map(|s| (*s).clone()).collect();
    let ((xl, xh), (yl, yh)) = axis_ranges(&owned).map_or(((0.0, 1.0), (0.0, 1.0)), |(x, y)| (widen(x), widen(y)));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - xl) / (xh - xl) * pw;
    let sy = |y: f64| TOP + (yh - y) / (yh - yl) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (x, y) = (xl + f * (xh - xl), yl + f * (yh - yl));
        let (px, py) = (sx(x), sy(y));
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#333"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 20.0,
            tick_label(x)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="#333"/><line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#eee"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT - 5.0,
            LEFT + pw,
            LEFT - 8.0,
            py + 4.0,
            tick_label(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );

    for (k, ser) in shown.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let mut d = String::new();
        // non-finite points break the line instead of being drawn
        let mut pen_down = false;
        for &(x, y) in &ser.points {
            if x.is_finite() && y.is_finite() {
                let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(x), sy(y));
                pen_down = true;
            } else {
                pen_down = false;
            }
        }
        let _ = writeln!(
            s,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            d.trim_end()
        );
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn column(rows: &[MetricsRow], f: impl Fn(&MetricsRow) -> f64) -> Vec<(f64, f64)> {
    rows.iter().map(|r| (r.iteration as f64, f(r))).collect()
}

/// Penalty and gradient-norm columns are all zero in regimes that do not
/// produce them; such columns count as empty.
fn optional(points: Vec<(f64, f64)>) -> Option<Vec<(f64, f64)>> {
    points.iter().any(|&(_, y)| y != 0.0).then_some(points)
}

/// Writes `losses.svg` (critic loss, generator loss and, when present, the
/// penalty term) and `grad_norm.svg` (when present) into `dir`.
pub fn emit_plots(rows: &[MetricsRow], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut series = vec![
        Series::new("critic loss", column(rows, |r| r.critic_loss)),
        Series::new("generator loss", column(rows, |r| r.gen_loss)),
    ];
    if let Some(p) = optional(column(rows, |r| r.penalty)) {
        series.push(Series::new("penalty", p));
    }
    let mut written = Vec::new();
    let path = dir.join("losses.svg");
    fs::write(&path, line_chart("Training losses", "iteration", "loss", &series))?;
    written.push(path);
    if let Some(g) = optional(column(rows, |r| r.grad_norm_mean)) {
        let path = dir.join("grad_norm.svg");
        let chart = line_chart(
            "Mean critic gradient norm at interpolates",
            "iteration",
            "‖∇f‖",
            &[Series::new("gradient norm", g)],
        );
        fs::write(&path, chart)?;
        written.push(path);
    }
    Ok(written)
}
