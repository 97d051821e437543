//! SVG figures for report CSVs.
//!
//! Data points are `<circle class="marker">`, guide curves are
//! `<polyline class="reference">`; tests count these classes.

use std::fmt::Write;

use glwalk_core::estimators::RateModel;
use glwalk_core::io::Table;
use glwalk_core::Error;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    BeCurve,
    RateFit,
    DepCoef,
    Gap,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [PlotKind::BeCurve, PlotKind::RateFit, PlotKind::DepCoef, PlotKind::Gap];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::BeCurve => "be_curve",
            PlotKind::RateFit => "rate_fit",
            PlotKind::DepCoef => "depcoef",
            PlotKind::Gap => "gap",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.replace('-', "_");
        PlotKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Clone, Copy)]
struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        let pad = if hi > lo { 0.06 * (hi - lo) } else if log { 0.5 } else { 0.5 * lo.abs().max(1.0) };
        Axis { log, lo: lo - pad, hi: hi + pad }
    }

    fn unit(&self, v: f64) -> Option<f64> {
        let v = if self.log {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        v.is_finite().then(|| (v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            if b >= a {
                return (a..=b).map(|e| (10f64.powi(e), format!("1e{e}"))).collect();
            }
            let mid = 10f64.powf(0.5 * (self.lo + self.hi));
            return vec![(mid, format!("{mid:.3e}"))];
        }
        (0..=4)
            .map(|i| {
                let v = self.lo + (self.hi - self.lo) * i as f64 / 4.0;
                (v, format!("{v:.3}"))
            })
            .collect()
    }
}

struct Canvas {
    x: Axis,
    y: Axis,
    body: String,
}

impl Canvas {
    fn px(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let (ux, uy) = (self.x.unit(x)?, self.y.unit(y)?);
        Some((LEFT + ux * (W - LEFT - RIGHT), H - BOTTOM - uy * (H - TOP - BOTTOM)))
    }

    fn marker(&mut self, x: f64, y: f64, color: &str) {
        if let Some((a, b)) = self.px(x, y) {
            let _ = writeln!(self.body, r#"<circle class="marker" cx="{a:.2}" cy="{b:.2}" r="4" fill="{color}"/>"#);
        }
    }

    fn polyline(&mut self, class: &str, pts: &[(f64, f64)], style: &str) {
        let p: Vec<String> = pts.iter().filter_map(|&(x, y)| self.px(x, y)).map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
        if p.len() >= 2 {
            let _ = writeln!(self.body, r#"<polyline class="{class}" points="{}" fill="none" {style}/>"#, p.join(" "));
        }
    }

    fn whisker(&mut self, x: f64, lo: f64, hi: f64) {
        if let (Some((a, b0)), Some((_, b1))) = (self.px(x, lo), self.px(x, hi)) {
            let _ = writeln!(self.body, r##"<line class="interval" x1="{a:.2}" y1="{b0:.2}" x2="{a:.2}" y2="{b1:.2}" stroke="#444"/>"##);
        }
    }

    fn label(&mut self, x: f64, y: f64, text: &str) {
        let _ = writeln!(self.body, r#"<text x="{x:.1}" y="{y:.1}" font-size="11">{}</text>"#, escape(text));
    }

    fn finish(self, title: &str, xlabel: &str, ylabel: &str, xticks: Option<Vec<(f64, String)>>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="18" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
        let (x0, y0, x1, y1) = (LEFT, H - BOTTOM, W - RIGHT, TOP);
        let _ = writeln!(s, r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
        let _ = writeln!(s, r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
        for (v, t) in xticks.unwrap_or_else(|| self.x.ticks()) {
            if let Some(u) = self.x.unit(v).filter(|u| (0.0..=1.0).contains(u)) {
                let a = LEFT + u * (W - LEFT - RIGHT);
                let _ = writeln!(s, r#"<line class="tick" x1="{a:.2}" y1="{y0}" x2="{a:.2}" y2="{}" stroke="black"/>"#, y0 + 5.0);
                let _ = writeln!(s, r#"<text x="{a:.2}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, y0 + 18.0, escape(&t));
            }
        }
        for (v, t) in self.y.ticks() {
            if let Some(u) = self.y.unit(v).filter(|u| (0.0..=1.0).contains(u)) {
                let b = H - BOTTOM - u * (H - TOP - BOTTOM);
                let _ = writeln!(s, r#"<line class="tick" x1="{}" y1="{b:.2}" x2="{x0}" y2="{b:.2}" stroke="black"/>"#, x0 - 5.0);
                let _ = writeln!(s, r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#, x0 - 8.0, b + 4.0, escape(&t));
            }
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 10.0, escape(xlabel));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(ylabel)
        );
        s.push_str(&self.body);
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn non_empty(t: &Table) -> Result<(), CliError> {
    if t.rows.is_empty() {
        return Err(Error::Schema(format!("{} table has no rows", t.kind)).into());
    }
    Ok(())
}

/// Rows grouped by a label column, in order of first appearance.
fn groups(labels: &[String]) -> Vec<(String, Vec<usize>)> {
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match out.iter_mut().find(|g| &g.0 == l) {
            Some(g) => g.1.push(i),
            None => out.push((l.clone(), vec![i])),
        }
    }
    out
}

type Guide = (String, Box<dyn Fn(f64) -> f64>);

/// Guides through the anchor point (n0, d0): n^{−1/2} always, and the
/// slower q-rate when 2 < q < 4.
fn rate_guides(n0: f64, d0: f64, q: Option<f64>) -> Vec<Guide> {
    let mut g: Vec<Guide> = vec![("n^-1/2".into(), Box::new(move |n: f64| d0 * (n0 / n).sqrt()))];
    if let Some(q) = q.filter(|&q| q > 2.0 && q < 4.0) {
        let model = if q <= 3.0 { RateModel::PaperQRate } else { RateModel::PaperQ34Rate };
        let base = model.rate(n0, q);
        let label = if q <= 3.0 { format!("((log n)/n)^{:.3}", q / 2.0 - 1.0) } else { format!("(log n)^{:.3}/sqrt(n)", (4.0 - q) / 2.0) };
        g.push((label, Box::new(move |n: f64| d0 * model.rate(n, q) / base)));
    }
    g
}

fn log_grid(lo: f64, hi: f64) -> Vec<f64> {
    (0..=64).map(|i| lo * (hi / lo).powf(i as f64 / 64.0)).collect()
}

fn be_curve(t: &Table, q: Option<f64>) -> Result<String, CliError> {
    let obs = t.str_column("observable")?;
    let n = t.f64_column("n")?;
    let d = t.f64_column("D_n")?;
    let gs = groups(&obs);
    let (n0, d0) = (n[0], d[0]);
    let (nlo, nhi) = n.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let guides = if n0 > 0.0 && d0 > 0.0 { rate_guides(n0, d0, q) } else { Vec::new() };
    let xs = log_grid(nlo, nhi);
    let mut ys: Vec<f64> = d.clone();
    for (_, f) in &guides {
        ys.extend(xs.iter().map(|&x| f(x)));
    }
    let mut c = Canvas { x: Axis::fit(n.iter().copied(), true), y: Axis::fit(ys.into_iter(), true), body: String::new() };
    for (gi, (name, rows)) in gs.iter().enumerate() {
        let color = COLORS[gi % COLORS.len()];
        let pts: Vec<(f64, f64)> = rows.iter().map(|&i| (n[i], d[i])).collect();
        c.polyline("series", &pts, &format!(r#"stroke="{color}""#));
        for &(x, y) in &pts {
            c.marker(x, y, color);
        }
        c.label(LEFT + 10.0, TOP + 14.0 * (gi as f64 + 1.0), &format!("● {name}"));
    }
    for (gi, (label, f)) in guides.iter().enumerate() {
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, f(x))).collect();
        c.polyline("reference", &pts, r##"stroke="#555" stroke-dasharray="5,4""##);
        c.label(W - 200.0, TOP + 14.0 * (gi as f64 + 1.0), &format!("--- {label}"));
    }
    Ok(c.finish("Kolmogorov distance to the Gaussian limit", "n", "D_n", None))
}

fn depcoef(t: &Table, q: Option<f64>) -> Result<String, CliError> {
    let p = t.str_column("p")?;
    let k = t.f64_column("k")?;
    let v = t.f64_column("delta_hat")?;
    let gs = groups(&p);
    let (klo, khi) = k.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let xs = log_grid(klo, khi);
    let mut guides: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    if let Some(q) = q {
        for (label, rows) in &gs {
            let pv: f64 = label.parse().map_err(|_| Error::Schema(format!("bad p {label:?}")))?;
            let e = q / pv - 1.0;
            if let Some(&i) = rows.iter().find(|&&i| v[i] > 0.0) {
                let (k0, d0) = (k[i], v[i]);
                guides.push((format!("k^-{e:.3} (p = {label})"), xs.iter().map(|&x| (x, d0 * (k0 / x).powf(e))).collect()));
            }
        }
    }
    let ys = v.iter().copied().chain(guides.iter().flat_map(|g| g.1.iter().map(|p| p.1)));
    let mut c = Canvas { x: Axis::fit(k.iter().copied(), true), y: Axis::fit(ys, true), body: String::new() };
    for (gi, (label, rows)) in gs.iter().enumerate() {
        let color = COLORS[gi % COLORS.len()];
        let pts: Vec<(f64, f64)> = rows.iter().map(|&i| (k[i], v[i])).collect();
        c.polyline("series", &pts, &format!(r#"stroke="{color}""#));
        for &(x, y) in &pts {
            c.marker(x, y, color);
        }
        c.label(LEFT + 10.0, TOP + 14.0 * (gi as f64 + 1.0), &format!("● p = {label}"));
    }
    for (gi, (label, pts)) in guides.iter().enumerate() {
        c.polyline("reference", pts, r##"stroke="#555" stroke-dasharray="5,4""##);
        c.label(W - 200.0, TOP + 14.0 * (gi as f64 + 1.0), &format!("--- {label}"));
    }
    Ok(c.finish("Coupling estimate of the dependence coefficients", "k", "delta_hat", None))
}

fn gap(t: &Table) -> Result<String, CliError> {
    let n = t.f64_column("n")?;
    let mx = t.f64_column("max_gap")?;
    let mean = t.f64_column("mean_gap")?;
    let ys = mx.iter().chain(&mean).copied().chain([0.0]);
    let mut c = Canvas { x: Axis::fit(n.iter().copied(), true), y: Axis::fit(ys, false), body: String::new() };
    for (gi, (name, col)) in [("max over paths", &mx), ("mean over paths", &mean)].into_iter().enumerate() {
        let color = COLORS[gi];
        let pts: Vec<(f64, f64)> = n.iter().copied().zip(col.iter().copied()).collect();
        c.polyline("series", &pts, &format!(r#"stroke="{color}""#));
        for &(x, y) in &pts {
            c.marker(x, y, color);
        }
        c.label(LEFT + 10.0, TOP + 14.0 * (gi as f64 + 1.0), &format!("● {name}"));
    }
    let (lo, hi) = n.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    c.polyline("reference", &[(lo, 0.0), (hi, 0.0)], r##"stroke="#555" stroke-dasharray="5,4""##);
    Ok(c.finish("log||A_n|| minus the nu-average of log||A_n u||", "n", "gap_n", None))
}

fn rate_fit(t: &Table) -> Result<String, CliError> {
    let obs = t.str_column("observable")?;
    let model = t.str_column("model")?;
    let slope = t.f64_column("slope")?;
    let lo = t.f64_column("ci_lo")?;
    let hi = t.f64_column("ci_hi")?;
    let k = slope.len();
    let xs: Vec<f64> = (1..=k).map(|i| i as f64).collect();
    let ys = slope.iter().chain(&lo).chain(&hi).copied().chain([1.0]);
    let mut c = Canvas { x: Axis { log: false, lo: 0.5, hi: k as f64 + 0.5 }, y: Axis::fit(ys, false), body: String::new() };
    for i in 0..k {
        c.whisker(xs[i], lo[i], hi[i]);
        c.marker(xs[i], slope[i], COLORS[0]);
    }
    c.polyline("reference", &[(0.5, 1.0), (k as f64 + 0.5, 1.0)], r##"stroke="#555" stroke-dasharray="5,4""##);
    let ticks = (0..k).map(|i| (xs[i], format!("{}:{}", obs[i], model[i]))).collect();
    Ok(c.finish("Rate-fit slopes with bootstrap intervals (unit slope dashed)", "observable:model", "slope", Some(ticks)))
}

/// Renders a report table; `kind` defaults to the table's schema kind.
pub fn render(text: &str, kind: Option<PlotKind>, q: Option<f64>) -> Result<String, CliError> {
    let t = Table::parse(text, kind.map(|k| k.name()))?;
    let kind = match kind {
        Some(k) => k,
        None => PlotKind::parse(&t.kind).ok_or_else(|| Error::Schema(format!("no plot for {} tables", t.kind)))?,
    };
    non_empty(&t)?;
    match kind {
        PlotKind::BeCurve => be_curve(&t, q),
        PlotKind::RateFit => rate_fit(&t),
        PlotKind::DepCoef => depcoef(&t, q),
        PlotKind::Gap => gap(&t),
    }
}
