//! Self-contained SVG charts for iterate traces: suboptimality against
//! iteration count or wall time (log y-axis), and step sizes against
//! iteration count. No rendering dependencies; the output is plain SVG
//! text any browser or image tool opens.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use greedy_newton::data::TraceHeader;
use greedy_newton::solvers::{Branch, IterateTrace, Method};

/// Suboptimality floor: values of `f - f*` at or below this are drawn at
/// the floor so the log axis stays finite.
const SUBOPT_FLOOR: f64 = 1e-16;

/// Colorblind-friendly-ish line palette, cycled per curve.
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
];

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 460.0;
const BOX_LEFT: f64 = 68.0;
const BOX_RIGHT: f64 = 566.0;
const BOX_TOP: f64 = 44.0;
const BOX_BOTTOM: f64 = 404.0;
const LEGEND_X: f64 = 578.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// `f - f*` per iteration, log y.
    FVsIter,
    /// Accepted step size per iteration, log y.
    StepVsIter,
    /// `f - f*` against cumulative solver seconds, log y.
    FVsTime,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::FVsIter, PlotKind::StepVsIter, PlotKind::FVsTime];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::FVsIter => "f-vs-iter",
            PlotKind::StepVsIter => "step-vs-iter",
            PlotKind::FVsTime => "f-vs-time",
        }
    }

    /// Short tag used in output file names.
    pub fn file_tag(self) -> &'static str {
        match self {
            PlotKind::FVsIter => "f",
            PlotKind::StepVsIter => "steps",
            PlotKind::FVsTime => "time",
        }
    }
}

impl std::fmt::Display for PlotKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug)]
pub struct UnknownPlotKind(String);

impl std::fmt::Display for UnknownPlotKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "unknown chart kind {:?}; expected f-vs-iter, step-vs-iter, or f-vs-time",
            self.0
        )
    }
}

impl std::error::Error for UnknownPlotKind {}

impl FromStr for PlotKind {
    type Err = UnknownPlotKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownPlotKind(s.to_string()))
    }
}

/// One renderable line: data-space points (y already in log10) plus
/// emphasized marker points (gradient-branch steps).
struct Curve {
    label: String,
    color: &'static str,
    points: Vec<(f64, f64)>,
    markers: Vec<(f64, f64)>,
}

/// Legend label for a trace: the method name, refined with the
/// backtracking initialization when the config echo shows a non-default
/// one.
pub fn curve_label(header: &TraceHeader, trace: &IterateTrace) -> String {
    if trace.method == Method::ArmijoNewton {
        if let Some(init) = header
            .config
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix("armijo_init="))
        {
            if init != "1" {
                return format!("{} (init {init})", trace.method);
            }
        }
    }
    trace.method.to_string()
}

/// Sanitize a dataset id or curve label into a file-name stem: every
/// run of non-filename characters becomes one dash.
pub fn slug(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c.is_ascii_alphanumeric() || c == '.' {
            out.push(c);
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

/// Regularization strength as it appears in file names: integers bare,
/// anything else in its shortest float form.
pub fn fmt_reg(l: f64) -> String {
    if l == l.trunc() && l.abs() < 1e15 {
        format!("{}", l as i64)
    } else {
        format!("{l}")
    }
}

pub fn chart_file_name(dataset: &str, reg: f64, kind: PlotKind) -> String {
    format!(
        "{}_reg{}_{}.svg",
        slug(dataset),
        fmt_reg(reg),
        kind.file_tag()
    )
}

fn build_curves(kind: PlotKind, entries: &[(TraceHeader, IterateTrace)]) -> Vec<Curve> {
    // The reference value for suboptimality plots: best f any compared
    // trace reached, nudged down so the winner's last point stays on
    // the log axis.
    let f_star = entries
        .iter()
        .filter_map(|(_, t)| t.records.last().map(|r| r.f))
        .fold(f64::INFINITY, f64::min)
        - SUBOPT_FLOOR;
    let mut used = Vec::new();
    let mut curves = Vec::new();
    for (i, (header, trace)) in entries.iter().enumerate() {
        let mut label = curve_label(header, trace);
        if used.contains(&label) {
            label = format!("{label} ({})", i + 1);
        }
        used.push(label.clone());
        let mut points = Vec::new();
        let mut markers = Vec::new();
        for r in &trace.records {
            let (x, y) = match kind {
                PlotKind::FVsIter => (f64::from(r.k), (r.f - f_star).max(SUBOPT_FLOOR)),
                PlotKind::FVsTime => (r.cum_time_s, (r.f - f_star).max(SUBOPT_FLOOR)),
                PlotKind::StepVsIter => {
                    if r.k == 0 || r.step_size <= 0.0 {
                        continue;
                    }
                    (f64::from(r.k), r.step_size)
                }
            };
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            let p = (x, y.log10());
            points.push(p);
            if kind == PlotKind::StepVsIter && r.branch == Some(Branch::Gradient) {
                markers.push(p);
            }
        }
        curves.push(Curve {
            label,
            color: PALETTE[i % PALETTE.len()],
            points,
            markers,
        });
    }
    curves
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn nice_step(range: f64, target: usize) -> f64 {
    let raw = range / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    for mult in [1.0, 2.0, 5.0] {
        if mult * mag >= raw {
            return mult * mag;
        }
    }
    10.0 * mag
}

fn fmt_x_tick(v: f64, step: f64) -> String {
    if v.abs() < 1e-300 {
        "0".to_string()
    } else if step >= 1.0 {
        format!("{v:.0}")
    } else if step >= 0.01 {
        format!("{v:.2}")
    } else {
        format!("{v:.1e}")
    }
}

fn fmt_decade(d: i64) -> String {
    match d {
        0 => "1".to_string(),
        1 => "10".to_string(),
        _ => format!("1e{d}"),
    }
}

/// Render one chart. `None` when no curve has a drawable point.
fn render(
    title: &str,
    x_label: &str,
    y_label: &str,
    curves: &[Curve],
    marker_note: bool,
) -> Option<String> {
    let xs: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.0))
        .collect();
    let ys: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.1))
        .collect();
    if xs.is_empty() {
        return None;
    }
    let mut x_min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut x_max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if x_max - x_min < 1e-12 {
        x_max = x_min + 1.0;
        x_min -= f64::from(u8::from(x_min > 0.0));
    }
    let y_lo = ys.iter().cloned().fold(f64::INFINITY, f64::min).floor() as i64;
    let mut y_hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
    if y_hi == y_lo {
        y_hi += 1;
    }

    let px = |x: f64| BOX_LEFT + (x - x_min) / (x_max - x_min) * (BOX_RIGHT - BOX_LEFT);
    let py =
        |y: f64| BOX_BOTTOM - (y - y_lo as f64) / (y_hi - y_lo) as f64 * (BOX_BOTTOM - BOX_TOP);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="Helvetica, Arial, sans-serif">"##
    );
    svg.push_str(r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = write!(
        svg,
        r##"<text x="{:.1}" y="26" font-size="14" text-anchor="middle" fill="#111">{}</text>"##,
        (BOX_LEFT + BOX_RIGHT) / 2.0,
        esc(title)
    );

    // Gridlines and ticks.
    let decade_step = (((y_hi - y_lo) as usize).div_ceil(9)).max(1) as i64;
    let mut d = y_lo;
    while d <= y_hi {
        let y = py(d as f64);
        let _ = write!(
            svg,
            r##"<line x1="{BOX_LEFT}" y1="{y:.1}" x2="{BOX_RIGHT}" y2="{y:.1}" stroke="#dddddd" stroke-width="1"/>"##
        );
        let _ = write!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end" fill="#333">{}</text>"##,
            BOX_LEFT - 7.0,
            y + 4.0,
            fmt_decade(d)
        );
        d += decade_step;
    }
    let step = nice_step(x_max - x_min, 6);
    let mut t = (x_min / step).ceil() * step;
    while t <= x_max + step * 1e-9 {
        let x = px(t);
        let _ = write!(
            svg,
            r##"<line x1="{x:.1}" y1="{BOX_TOP}" x2="{x:.1}" y2="{BOX_BOTTOM}" stroke="#eeeeee" stroke-width="1"/>"##
        );
        let _ = write!(
            svg,
            r##"<line x1="{x:.1}" y1="{BOX_BOTTOM}" x2="{x:.1}" y2="{:.1}" stroke="#333" stroke-width="1"/>"##,
            BOX_BOTTOM + 4.0
        );
        let _ = write!(
            svg,
            r##"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle" fill="#333">{}</text>"##,
            BOX_BOTTOM + 17.0,
            fmt_x_tick(t, step)
        );
        t += step;
    }

    // Plot box and axis labels.
    let _ = write!(
        svg,
        r##"<rect x="{BOX_LEFT}" y="{BOX_TOP}" width="{:.1}" height="{:.1}" fill="none" stroke="#333" stroke-width="1"/>"##,
        BOX_RIGHT - BOX_LEFT,
        BOX_BOTTOM - BOX_TOP
    );
    let _ = write!(
        svg,
        r##"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle" fill="#111">{}</text>"##,
        (BOX_LEFT + BOX_RIGHT) / 2.0,
        BOX_BOTTOM + 38.0,
        esc(x_label)
    );
    let _ = write!(
        svg,
        r##"<text transform="rotate(-90)" x="{:.1}" y="18" font-size="12" text-anchor="middle" fill="#111">{}</text>"##,
        -(BOX_TOP + BOX_BOTTOM) / 2.0,
        esc(y_label)
    );

    // Curves.
    for curve in curves {
        if curve.points.is_empty() {
            continue;
        }
        if curve.points.len() == 1 {
            let (x, y) = curve.points[0];
            let _ = write!(
                svg,
                r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"##,
                px(x),
                py(y),
                curve.color
            );
        } else {
            let pts: Vec<String> = curve
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = write!(
                svg,
                r##"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.8" stroke-linejoin="round"/>"##,
                pts.join(" "),
                curve.color
            );
        }
        for &(x, y) in &curve.markers {
            let _ = write!(
                svg,
                r##"<circle cx="{:.2}" cy="{:.2}" r="3.2" fill="{}" stroke="#ffffff" stroke-width="0.9"/>"##,
                px(x),
                py(y),
                curve.color
            );
        }
    }

    // Legend.
    let mut ly = BOX_TOP + 8.0;
    for curve in curves {
        let _ = write!(
            svg,
            r##"<line x1="{LEGEND_X}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2.4"/>"##,
            LEGEND_X + 22.0,
            curve.color
        );
        let _ = write!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" font-size="11" fill="#111">{}</text>"##,
            LEGEND_X + 27.0,
            ly + 4.0,
            esc(&curve.label)
        );
        ly += 18.0;
    }
    if marker_note {
        let _ = write!(
            svg,
            r##"<circle cx="{:.1}" cy="{ly:.1}" r="3.2" fill="#777" stroke="#ffffff" stroke-width="0.9"/>"##,
            LEGEND_X + 11.0
        );
        let _ = write!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" font-size="11" fill="#111">gradient step taken</text>"##,
            LEGEND_X + 27.0,
            ly + 4.0
        );
    }

    svg.push_str("</svg>\n");
    Some(svg)
}

/// Render one chart per (dataset, reg) group found in `entries` and
/// write it under `out_dir`. Returns the files written; groups with no
/// drawable points are skipped with a warning on stderr.
pub fn emit_grouped(
    kind: PlotKind,
    entries: &[(TraceHeader, IterateTrace)],
    out_dir: &Path,
) -> std::io::Result<Vec<PathBuf>> {
    // Group by (dataset, reg) preserving first-seen order.
    let mut groups: Vec<((String, String), Vec<usize>)> = Vec::new();
    for (i, (header, _)) in entries.iter().enumerate() {
        let key = (header.dataset.clone(), fmt_reg(header.lambda));
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, idxs)) => idxs.push(i),
            None => groups.push((key, vec![i])),
        }
    }

    let mut written = Vec::new();
    for ((dataset, reg), idxs) in groups {
        let members: Vec<(TraceHeader, IterateTrace)> =
            idxs.iter().map(|&i| entries[i].clone()).collect();
        let curves = build_curves(kind, &members);
        let any_markers = curves.iter().any(|c| !c.markers.is_empty());
        let title = format!("{dataset}  reg={reg}  ({kind})");
        let (x_label, y_label) = match kind {
            PlotKind::FVsIter => ("iteration k", "f - f* (log scale)"),
            PlotKind::StepVsIter => ("iteration k", "accepted step size (log scale)"),
            PlotKind::FVsTime => ("cumulative solver seconds", "f - f* (log scale)"),
        };
        let Some(svg) = render(&title, x_label, y_label, &curves, any_markers) else {
            eprintln!("warning: {dataset} reg={reg}: no drawable points for {kind}; skipped");
            continue;
        };
        let path = out_dir.join(chart_file_name(&dataset, members[0].0.lambda, kind));
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use greedy_newton::data::TraceHeader;
    use greedy_newton::solvers::{IterateRecord, Method, StopReason};

    fn fake_trace(method: Method, fs: &[f64]) -> (TraceHeader, IterateTrace) {
        let records: Vec<IterateRecord> = fs
            .iter()
            .enumerate()
            .map(|(k, &f)| IterateRecord {
                k: k as u32,
                f,
                grad_norm: 1.0,
                step_size: if k == 0 { 0.0 } else { 1.5 },
                probes: 3,
                jitter: 0.0,
                branch: if k % 2 == 0 {
                    Some(Branch::Gradient)
                } else {
                    Some(Branch::Newton)
                },
                cum_time_s: k as f64 * 0.25,
            })
            .collect();
        let header = TraceHeader {
            dataset: "unit:test".to_string(),
            lambda: 1.0,
            seed: None,
            config: "budget=5 armijo_init=8".to_string(),
        };
        let trace = IterateTrace {
            method,
            records,
            iterates: None,
            stop: StopReason::MaxIterations,
        };
        (header, trace)
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in PlotKind::ALL {
            assert_eq!(kind.name().parse::<PlotKind>().unwrap(), kind);
        }
        assert!("bar-chart".parse::<PlotKind>().is_err());
    }

    #[test]
    fn labels_show_nondefault_armijo_init() {
        let (h, t) = fake_trace(Method::ArmijoNewton, &[4.0, 2.0]);
        assert_eq!(curve_label(&h, &t), "armijo-newton (init 8)");
        let (h, t) = fake_trace(Method::GreedyNewton, &[4.0, 2.0]);
        assert_eq!(curve_label(&h, &t), "greedy-newton");
    }

    #[test]
    fn file_names_are_sanitized() {
        assert_eq!(
            chart_file_name(
                "synthetic:strongly-convex:m=500:seed=42",
                1.0,
                PlotKind::FVsIter
            ),
            "synthetic-strongly-convex-m-500-seed-42_reg1_f.svg"
        );
        assert_eq!(
            chart_file_name("a/b c", 0.5, PlotKind::StepVsIter),
            "a-b-c_reg0.5_steps.svg"
        );
    }

    #[test]
    fn suboptimality_is_clamped_to_floor() {
        // f* = 4.0 - 1e-16 rounds back to 4.0 in f64, so the winner's last
        // point computes f - f* = 0.0; without the clamp it would fall off
        // the log axis as -inf.
        let (h, t) = fake_trace(Method::GreedyNewton, &[8.0, 6.0, 4.0]);
        let curves = build_curves(PlotKind::FVsIter, &[(h, t)]);
        assert_eq!(curves[0].points.len(), 3);
        let last = curves[0].points.last().unwrap();
        assert_eq!(last.1, SUBOPT_FLOOR.log10());
        assert!(curves[0].points.iter().all(|p| p.1.is_finite()));
    }

    #[test]
    fn step_curves_skip_k0_and_mark_gradient_branches() {
        let (h, t) = fake_trace(Method::Hybrid, &[8.0, 4.0, 2.0, 1.0]);
        let curves = build_curves(PlotKind::StepVsIter, &[(h, t)]);
        // k=0 dropped, three step rows remain; k=2 is the even gradient row.
        assert_eq!(curves[0].points.len(), 3);
        assert_eq!(curves[0].markers.len(), 1);
        assert_eq!(curves[0].markers[0].0, 2.0);
    }

    #[test]
    fn render_produces_polylines_and_legend() {
        let a = fake_trace(Method::GreedyNewton, &[8.0, 2.0, 0.5]);
        let b = fake_trace(Method::ArmijoNewton, &[8.0, 4.0, 2.0]);
        let curves = build_curves(PlotKind::FVsIter, &[a, b]);
        let svg = render("t", "x", "y", &curves, false).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("greedy-newton"));
        assert!(svg.contains("armijo-newton (init 8)"));
        assert!(svg.contains("<svg"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn empty_input_renders_nothing() {
        assert!(render("t", "x", "y", &[], false).is_none());
        let (h, mut t) = fake_trace(Method::GreedyNewton, &[8.0]);
        t.records.clear();
        let curves = build_curves(PlotKind::FVsIter, &[(h, t)]);
        assert!(render("t", "x", "y", &curves, false).is_none());
    }

    #[test]
    fn grouped_emission_writes_one_file_per_group() {
        let dir = tempfile::tempdir().unwrap();
        let (ha, ta) = fake_trace(Method::GreedyNewton, &[8.0, 2.0]);
        let (mut hb, tb) = fake_trace(Method::ArmijoNewton, &[8.0, 4.0]);
        hb.lambda = 0.0;
        let written = emit_grouped(PlotKind::FVsIter, &[(ha, ta), (hb, tb)], dir.path()).unwrap();
        assert_eq!(written.len(), 2);
        for path in &written {
            let text = std::fs::read_to_string(path).unwrap();
            assert!(text.starts_with("<svg"));
        }
        assert!(written[0]
            .file_name()
            .unwrap()
            .to_str()
            .unwrap()
            .contains("_reg1_"));
        assert!(written[1]
            .file_name()
            .unwrap()
            .to_str()
            .unwrap()
            .contains("_reg0_"));
    }
}
