//! Byte-stable SVG plots of CSV columns.

use crate::config::{PlotKind, RenderConfig};
use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const PANEL_HEIGHT: f64 = 360.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 80.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const COLORS: [&str; 6] = ["#000000", "#c0392b", "#2471a3", "#1e8449", "#7d3c98", "#b9770e"];
const FONT: &str = "font-family=\"DejaVu Sans, sans-serif\" font-size=\"12\"";

#[derive(Debug, Clone, PartialEq)]
pub enum PlotError {
    MissingColumn(String),
    BadValue { column: String, row: usize },
    Empty,
    Csv(String),
}

impl std::fmt::Display for PlotError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlotError::MissingColumn(c) => write!(f, "plot spec names missing column `{c}`"),
            PlotError::BadValue { column, row } => write!(f, "column `{column}` row {row} is not a number"),
            PlotError::Empty => write!(f, "no data to plot"),
            PlotError::Csv(e) => write!(f, "csv: {e}"),
        }
    }
}

impl std::error::Error for PlotError {}

/// Numeric columns of a CSV, read lazily by name.
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, PlotError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| PlotError::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for r in rdr.records() {
            let r = r.map_err(|e| PlotError::Csv(e.to_string()))?;
            rows.push(r.iter().map(str::to_string).collect());
        }
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, PlotError> {
        let i = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PlotError::MissingColumn(name.to_string()))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(k, r)| {
                r.get(i)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or(PlotError::BadValue {
                        column: name.to_string(),
                        row: k + 1,
                    })
            })
            .collect()
    }
}

#[derive(Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new(values: &[f64], log: bool, p0: f64, p1: f64) -> Self {
        let vals: Vec<f64> = values
            .iter()
            .copied()
            .filter(|v| v.is_finite() && (!log || *v > 0.0))
            .map(|v| if log { v.log10() } else { v })
            .collect();
        let (mut lo, mut hi) = vals
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if hi - lo < 1e-300 {
            let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
            lo -= pad;
            hi += pad;
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil().max(lo + 1.0);
        } else {
            let step = nice_step((hi - lo) / 5.0);
            lo = (lo / step).floor() * step;
            hi = (hi / step).ceil() * step;
        }
        Self { lo, hi, log, p0, p1 }
    }

    fn map(&self, v: f64) -> Option<f64> {
        let x = if self.log {
            if v > 0.0 {
                v.log10()
            } else {
                return None;
            }
        } else {
            v
        };
        x.is_finite().then(|| self.p0 + (x - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            (self.lo as i64..=self.hi as i64)
                .map(|e| (10f64.powi(e as i32), format!("1e{e}")))
                .collect()
        } else {
            let step = nice_step((self.hi - self.lo) / 5.0);
            let n = ((self.hi - self.lo) / step).round() as i64;
            (0..=n)
                .map(|i| {
                    let v = self.lo + i as f64 * step;
                    (v, label(v, step))
                })
                .collect()
        }
    }
}

fn nice_step(raw: f64) -> f64 {
    let raw = if raw > 0.0 && raw.is_finite() { raw } else { 1.0 };
    let e = raw.log10().floor();
    let m = raw / 10f64.powf(e);
    let n = if m <= 1.0 {
        1.0
    } else if m <= 2.0 {
        2.0
    } else if m <= 5.0 {
        5.0
    } else {
        10.0
    };
    n * 10f64.powf(e)
}

fn label(v: f64, step: f64) -> String {
    let v = if v.abs() < 1e-12 * step { 0.0 } else { v };
    let mag = v.abs().max(step);
    if mag >= 1e5 || mag < 1e-3 {
        format!("{v:.2e}")
    } else {
        let digits = (-step.log10().floor()).max(0.0) as usize;
        format!("{v:.digits$}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn path(xs: &[f64], ys: &[f64], sx: &Scale, sy: &Scale) -> String {
    let mut d = String::new();
    let mut pen = false;
    for (&x, &y) in xs.iter().zip(ys) {
        match (sx.map(x), sy.map(y)) {
            (Some(px), Some(py)) => {
                let _ = write!(d, "{}{px:.2},{py:.2} ", if pen { "L" } else { "M" });
                pen = true;
            }
            _ => pen = false,
        }
    }
    d.trim_end().to_string()
}

struct Series {
    name: String,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn axes(out: &mut String, sx: &Scale, sy: &Scale, top: f64, bottom: f64, xlabel: &str, ylabel: &str, right: bool) {
    let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
    let ax = if right { x1 } else { x0 };
    if !right {
        let _ = writeln!(
            out,
            "<rect x=\"{x0:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#000000\"/>",
            x1 - x0,
            bottom - top
        );
        for (v, t) in sx.ticks() {
            if let Some(px) = sx.map(v) {
                let _ = writeln!(
                    out,
                    "<line x1=\"{px:.2}\" y1=\"{bottom:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#000000\"/>",
                    bottom - 5.0
                );
                let _ = writeln!(
                    out,
                    "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>{}</text>",
                    bottom + 16.0,
                    esc(&t)
                );
            }
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>{}</text>",
            0.5 * (x0 + x1),
            bottom + 36.0,
            esc(xlabel)
        );
    }
    let dir = if right { -5.0 } else { 5.0 };
    for (v, t) in sy.ticks() {
        if let Some(py) = sy.map(v) {
            let _ = writeln!(
                out,
                "<line x1=\"{ax:.2}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" stroke=\"#000000\"/>",
                ax + dir
            );
            let (tx, anchor) = if right { (ax + 8.0, "start") } else { (ax - 8.0, "end") };
            let _ = writeln!(
                out,
                "<text x=\"{tx:.2}\" y=\"{:.2}\" text-anchor=\"{anchor}\" {FONT}>{}</text>",
                py + 4.0,
                esc(&t)
            );
        }
    }
    let lx = if right { WIDTH - 14.0 } else { 14.0 };
    let ly = 0.5 * (top + bottom);
    let _ = writeln!(
        out,
        "<text x=\"{lx:.2}\" y=\"{ly:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 {lx:.2} {ly:.2})\" {FONT}>{}</text>",
        esc(ylabel)
    );
}

fn draw(out: &mut String, s: &Series, sx: &Scale, sy: &Scale, color: &str, dots: bool) {
    if dots {
        for (&x, &y) in s.x.iter().zip(&s.y) {
            if let (Some(px), Some(py)) = (sx.map(x), sy.map(y)) {
                let _ = writeln!(out, "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2.5\" fill=\"{color}\"/>");
            }
        }
    } else {
        let _ = writeln!(
            out,
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            path(&s.x, &s.y, sx, sy)
        );
    }
}

/// Renders `spec` over the CSV texts (one per entry of `spec.csv`).
pub fn render(spec: &RenderConfig, csvs: &[String]) -> Result<String, PlotError> {
    if csvs.is_empty() || spec.y.is_empty() {
        return Err(PlotError::Empty);
    }
    let tables: Vec<Table> = csvs.iter().map(|t| Table::parse(t)).collect::<Result<_, _>>()?;
    let panels: Vec<Vec<Series>> = if spec.kind == PlotKind::Panels {
        tables
            .iter()
            .enumerate()
            .map(|(i, t)| {
                Ok(vec![Series {
                    name: format!("panel {}", i + 1),
                    x: t.column(&spec.x)?,
                    y: t.column(&spec.y[0])?,
                }])
            })
            .collect::<Result<_, PlotError>>()?
    } else {
        let t = &tables[0];
        let x = t.column(&spec.x)?;
        vec![spec
            .y
            .iter()
            .map(|c| {
                Ok(Series {
                    name: c.clone(),
                    x: x.clone(),
                    y: t.column(c)?,
                })
            })
            .collect::<Result<_, PlotError>>()?]
    };
    if spec.kind == PlotKind::Dual && spec.y.len() != 2 {
        return Err(PlotError::MissingColumn("dual plots need exactly two y columns".into()));
    }
    let height = MARGIN_T + panels.len() as f64 * PANEL_HEIGHT;
    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {WIDTH:.0} {height:.0}\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>");
    if !spec.title.is_empty() {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"24.00\" text-anchor=\"middle\" {FONT}>{}</text>",
            0.5 * WIDTH,
            esc(&spec.title)
        );
    }
    let dots = spec.kind == PlotKind::Scatter;
    for (k, series) in panels.iter().enumerate() {
        let top = MARGIN_T + k as f64 * PANEL_HEIGHT;
        let bottom = top + PANEL_HEIGHT - MARGIN_B;
        let allx: Vec<f64> = series.iter().flat_map(|s| s.x.iter().copied()).collect();
        let sx = Scale::new(&allx, spec.log_x, MARGIN_L, WIDTH - MARGIN_R);
        if spec.kind == PlotKind::Dual {
            let sl = Scale::new(&series[0].y, spec.log_y, bottom, top + 10.0);
            let sr = Scale::new(&series[1].y, spec.log_y, bottom, top + 10.0);
            axes(&mut out, &sx, &sl, top + 10.0, bottom, &spec.x, &series[0].name, false);
            axes(&mut out, &sx, &sr, top + 10.0, bottom, &spec.x, &series[1].name, true);
            draw(&mut out, &series[0], &sx, &sl, COLORS[0], dots);
            draw(&mut out, &series[1], &sx, &sr, COLORS[1], dots);
        } else {
            let ally: Vec<f64> = series.iter().flat_map(|s| s.y.iter().copied()).collect();
            let sy = Scale::new(&ally, spec.log_y, bottom, top + 10.0);
            let ylabel = if spec.kind == PlotKind::Panels {
                spec.y[0].clone()
            } else {
                spec.y.join(", ")
            };
            axes(&mut out, &sx, &sy, top + 10.0, bottom, &spec.x, &ylabel, false);
            for (i, s) in series.iter().enumerate() {
                draw(&mut out, s, &sx, &sy, COLORS[i % COLORS.len()], dots);
            }
            if spec.kind == PlotKind::Panels {
                let _ = writeln!(
                    out,
                    "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" {FONT}>{}</text>",
                    WIDTH - MARGIN_R - 6.0,
                    top + 26.0,
                    esc(&series[0].name)
                );
            }
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: PlotKind, y: &[&str]) -> RenderConfig {
        RenderConfig {
            csv: vec![],
            x: "x".into(),
            y: y.iter().map(|s| s.to_string()).collect(),
            kind,
            log_x: false,
            log_y: false,
            title: "t <1>".into(),
            output: "p.svg".into(),
        }
    }

    const CSV: &str = "x,a,b,label\n1,2,30,u\n2,4,10,v\n3,3,20,w\n";

    #[test]
    fn byte_stable() {
        let s = spec(PlotKind::Line, &["a", "b"]);
        let a = render(&s, &[CSV.into()]).unwrap();
        let b = render(&s, &[CSV.into()]).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("t &lt;1&gt;"));
        assert!(a.ends_with("</svg>\n"));
    }

    #[test]
    fn missing_column_is_reported() {
        let s = spec(PlotKind::Scatter, &["nope"]);
        assert_eq!(render(&s, &[CSV.into()]), Err(PlotError::MissingColumn("nope".into())));
        let s = spec(PlotKind::Scatter, &["label"]);
        assert!(matches!(render(&s, &[CSV.into()]), Err(PlotError::BadValue { .. })));
    }

    #[test]
    fn kinds_render() {
        let mut s = spec(PlotKind::Scatter, &["a"]);
        s.log_x = true;
        assert!(render(&s, &[CSV.into()]).unwrap().contains("<circle"));
        let d = render(&spec(PlotKind::Dual, &["a", "b"]), &[CSV.into()]).unwrap();
        assert!(d.matches("<path").count() == 2);
        let p = render(&spec(PlotKind::Panels, &["a"]), &[CSV.into(), CSV.into(), CSV.into()]).unwrap();
        assert!(p.contains("height=\"1120\""));
        assert!(render(&spec(PlotKind::Dual, &["a"]), &[CSV.into()]).is_err());
    }

    #[test]
    fn tick_steps() {
        assert_eq!(nice_step(0.3), 0.5);
        assert_eq!(nice_step(7.0), 10.0);
        assert_eq!(label(0.0, 0.5), "0.0");
    }
}
