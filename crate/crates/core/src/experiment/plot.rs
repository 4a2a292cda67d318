//! Dependency-free SVG line plots with optional log axes and error bands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Values at or below this are drawn at the floor on log axes.
pub const LOG_FLOOR: f64 = 1e-16;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const MAX_POINTS: usize = 2000;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Lower and upper edge of a shaded band.
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub svg: String,
    pub warnings: Vec<String>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
    clamped: usize,
}

impl Axis {
    fn new(log: bool) -> Self {
        Self {
            log,
            lo: f64::INFINITY,
            hi: f64::NEG_INFINITY,
            clamped: 0,
        }
    }

    fn transform(&mut self, v: f64) -> Option<f64> {
        if !v.is_finite() {
            return None;
        }
        if self.log {
            if v <= LOG_FLOOR {
                self.clamped += 1;
                return Some(LOG_FLOOR.log10());
            }
            Some(v.log10())
        } else {
            Some(v)
        }
    }

    fn include(&mut self, v: f64) {
        self.lo = self.lo.min(v);
        self.hi = self.hi.max(v);
    }

    fn finish(&mut self) {
        if !self.lo.is_finite() {
            self.lo = 0.0;
            self.hi = 1.0;
        }
        if self.hi - self.lo < 1e-12 * (1.0 + self.lo.abs()) {
            let pad = if self.log { 0.5 } else { 0.5 * self.lo.abs().max(1.0) };
            self.lo -= pad;
            self.hi += pad;
        }
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.floor() as i64, self.hi.ceil() as i64);
            let step = ((b - a) / 8).max(1);
            (a..=b)
                .step_by(step as usize)
                .map(|e| (e as f64, format!("1e{e}")))
                .filter(|(v, _)| *v >= self.lo - 1e-9 && *v <= self.hi + 1e-9)
                .collect()
        } else {
            (0..=5)
                .map(|i| {
                    let v = self.lo + (self.hi - self.lo) * i as f64 / 5.0;
                    (v, format!("{v:.3e}"))
                })
                .collect()
        }
    }
}

fn stride(len: usize) -> usize {
    len.div_ceil(MAX_POINTS).max(1)
}

/// Renders the series into a standalone SVG document.
pub fn render_svg(spec: &PlotSpec, series: &[Series]) -> Rendered {
    let mut xa = Axis::new(spec.log_x);
    let mut ya = Axis::new(spec.log_y);
    let mut warnings = Vec::new();

    // Transformed (x, y) points; the band keeps (x, lo, hi).
    let mut lines: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut bands: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    for s in series {
        let step = stride(s.x.len());
        let mut pts = Vec::new();
        let mut band = Vec::new();
        for i in (0..s.x.len().min(s.y.len())).step_by(step) {
            let Some(x) = xa.transform(s.x[i]) else { continue };
            if let Some(y) = ya.transform(s.y[i]) {
                pts.push((x, y));
                xa.include(x);
                ya.include(y);
            }
            if let Some((lo, hi)) = &s.band {
                // Band edges below the floor are expected and not reported.
                let clamped = ya.clamped;
                let edges = (ya.transform(lo[i]), ya.transform(hi[i]));
                ya.clamped = clamped;
                if let (Some(l), Some(h)) = edges {
                    band.push((x, l, h));
                    ya.include(l);
                    ya.include(h);
                }
            }
        }
        lines.push(pts);
        bands.push(band);
    }
    if ya.clamped > 0 {
        warnings.push(format!(
            "{}: {} non-positive or sub-{LOG_FLOOR:e} values drawn at the floor",
            spec.title, ya.clamped
        ));
    }
    if xa.clamped > 0 {
        warnings.push(format!("{}: {} x values clamped to the floor", spec.title, xa.clamped));
    }
    xa.finish();
    ya.finish();

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - xa.lo) / (xa.hi - xa.lo) * pw;
    let py = |y: f64| TOP + (1.0 - (y - ya.lo) / (ya.hi - ya.lo)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(&spec.title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for (v, label) in xa.ticks() {
        let x = px(v);
        let label = if spec.log_x { label } else { format!("{:.4}", v) };
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#ccc"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
            TOP,
            TOP + ph,
            TOP + ph + 16.0,
            escape(&label)
        );
    }
    for (v, label) in ya.ticks() {
        let y = py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ccc"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            escape(&label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&spec.y_label)
    );

    for (i, (band, line)) in bands.iter().zip(&lines).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if band.len() > 1 {
            let mut d = String::new();
            for (x, _, h) in band {
                let _ = write!(d, "{:.2},{:.2} ", px(*x), py(*h));
            }
            for (x, l, _) in band.iter().rev() {
                let _ = write!(d, "{:.2},{:.2} ", px(*x), py(*l));
            }
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                d.trim_end()
            );
        }
        if !line.is_empty() {
            let mut d = String::new();
            for (x, y) in line {
                let _ = write!(d, "{:.2},{:.2} ", px(*x), py(*y));
            }
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                d.trim_end()
            );
        }
    }

    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = TOP + 14.0 + 18.0 * i as f64;
        let x = LEFT + pw - 150.0;
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            x + 20.0,
            x + 26.0,
            y + 4.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    Rendered { svg: s, warnings }
}

/// Reads the named columns from an aggregate CSV.
pub fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| Error::Config(format!("{}: missing column `{n}`", path.display())))
        })
        .collect::<Result<_>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for rec in rdr.records() {
        let rec = rec?;
        for (c, &i) in cols.iter_mut().zip(&idx) {
            let v: f64 = rec[i]
                .parse()
                .map_err(|_| Error::Config(format!("{}: bad number `{}`", path.display(), &rec[i])))?;
            c.push(v);
        }
    }
    Ok(cols)
}

/// The scheme recorded in the run's summary, else the directory name.
fn run_label(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("summary.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v["scheme"].as_str().map(str::to_owned))
        .unwrap_or_else(|| {
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.display().to_string())
        })
}

fn mean_band_series(dir: &Path, metric: &str) -> Result<Series> {
    let cols = read_columns(
        &dir.join("aggregate.csv"),
        &["k", &format!("{metric}_mean"), &format!("{metric}_stderr")],
    )?;
    let lo = cols[1].iter().zip(&cols[2]).map(|(m, e)| m - e).collect();
    let hi = cols[1].iter().zip(&cols[2]).map(|(m, e)| m + e).collect();
    let label = run_label(dir);
    Ok(Series {
        label,
        x: cols[0].clone(),
        y: cols[1].clone(),
        band: Some((lo, hi)),
    })
}

/// Per-metric figures overlaying every run directory: mean ± one standard
/// error against the tick. Returns written files and warnings.
pub fn plot_runs(dirs: &[PathBuf], out: &Path) -> Result<(Vec<PathBuf>, Vec<String>)> {
    if dirs.is_empty() {
        return Err(Error::Config("plot needs at least one run directory".into()));
    }
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    for (metric, title) in [
        ("grad_norm_sq", "‖∇ℓ(θ̄)‖²"),
        ("loss", "ℓ(θ̄)"),
        ("vbar", "V̄ (disagreement)"),
        ("running_avg_grad_norm_sq", "running average of ‖∇ℓ(θ̄)‖²"),
    ] {
        let mut series = dirs
            .iter()
            .map(|d| mean_band_series(d, metric))
            .collect::<Result<Vec<_>>>()?;
        if metric == "vbar" {
            // FL runs carry no disagreement.
            series.retain(|s| s.y.iter().any(|v| *v != 0.0));
            if series.is_empty() {
                continue;
            }
        }
        let spec = PlotSpec {
            title: title.into(),
            x_label: "tick k".into(),
            y_label: metric.into(),
            log_x: false,
            log_y: true,
        };
        let r = render_svg(&spec, &series);
        let path = out.join(format!("{metric}.svg"));
        std::fs::write(&path, r.svg)?;
        warnings.extend(r.warnings);
        files.push(path);
    }
    Ok((files, warnings))
}
