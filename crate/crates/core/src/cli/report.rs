//! Summary text and line plots generated from the CSVs of a run.

use super::output::{sha256_hex, Artifact, RunManifest, Table};
use crate::error::{Error, Result};
use plotters::prelude::*;
use std::fmt::Write as _;
use std::path::Path;

pub const SUMMARY: &str = "summary.txt";

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    dashed: bool,
}

#[derive(Clone, Copy)]
enum Scale {
    Linear,
    Log10,
}

impl Scale {
    fn map(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log10 => v.log10(),
        }
    }

    fn label(self, name: &str) -> String {
        match self {
            Scale::Linear => name.to_string(),
            Scale::Log10 => format!("log10 {name}"),
        }
    }
}

struct Plot<'a> {
    title: &'a str,
    x: (&'a str, Scale),
    y: (&'a str, Scale),
    series: Vec<Series>,
}

const COLORS: [RGBColor; 6] = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];

fn render(plot: &Plot) -> Result<Option<String>> {
    let mapped: Vec<(usize, Vec<(f64, f64)>)> = plot
        .series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pts = s
                .points
                .iter()
                .map(|&(x, y)| (plot.x.1.map(x), plot.y.1.map(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect();
            (i, pts)
        })
        .collect();
    let all: Vec<(f64, f64)> = mapped.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    if all.is_empty() {
        return Ok(None);
    }
    let span = |v: Vec<f64>| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
        (lo - pad)..(hi + pad)
    };
    let xr = span(all.iter().map(|p| p.0).collect());
    let yr = span(all.iter().map(|p| p.1).collect());
    let err = |e: String| Error::Io(std::io::Error::other(e));
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(plot.title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(xr, yr)
            .map_err(|e| err(e.to_string()))?;
        chart
            .configure_mesh()
            .x_desc(plot.x.1.label(plot.x.0))
            .y_desc(plot.y.1.label(plot.y.0))
            .draw()
            .map_err(|e| err(e.to_string()))?;
        for (i, pts) in mapped {
            let s = &plot.series[i];
            let color = COLORS[i % COLORS.len()];
            let style = if s.dashed { color.stroke_width(1) } else { color.stroke_width(2) };
            let drawn = if s.dashed {
                chart.draw_series(DashedLineSeries::new(pts.clone(), 6, 4, style))
            } else {
                chart.draw_series(LineSeries::new(pts.clone(), style))
            };
            drawn
                .map_err(|e| err(e.to_string()))?
                .label(s.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
            if !s.dashed {
                chart
                    .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
                    .map_err(|e| err(e.to_string()))?;
            }
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| err(e.to_string()))?;
        root.present().map_err(|e| err(e.to_string()))?;
    }
    Ok(Some(svg))
}

fn load(root: &Path, m: &RunManifest, name: &str) -> Option<Table> {
    m.artifact(name)?;
    Table::read(&root.join(name)).ok()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max)
}

fn group(t: &Table, key: &str, x: &str, y: &str) -> Vec<(String, Vec<(f64, f64)>)> {
    let (Some(k), Some(xs), Some(ys)) = (t.strings(key), t.floats(x), t.floats(y)) else { return vec![] };
    let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for i in 0..k.len() {
        match out.iter_mut().find(|(l, _)| *l == k[i]) {
            Some((_, v)) => v.push((xs[i], ys[i])),
            None => out.push((k[i].clone(), vec![(xs[i], ys[i])])),
        }
    }
    out
}

/// Writes `summary.txt` and the SVG plots next to the CSVs of `manifest` and
/// returns the new artifacts. Missing series are skipped with a notice.
pub fn emit_report(manifest: &RunManifest, root: &Path) -> Result<Vec<Artifact>> {
    let mut text = String::new();
    let mut plots: Vec<(&str, Plot)> = Vec::new();
    let _ = writeln!(text, "run: {} (status {})", manifest.subcommand, manifest.status);
    if let Some(e) = &manifest.error {
        let _ = writeln!(text, "error: {e}");
    }
    let section = |text: &mut String, title: &str| {
        let _ = writeln!(text, "\n== {title} ==");
    };

    section(&mut text, "cutoffs");
    match (load(root, manifest, "cutoff_params.csv"), load(root, manifest, "cutoff_verification.csv")) {
        (Some(p), v) => {
            for h in ["sigma", "sharpness", "zeta_l2sq"] {
                if let Some(x) = p.floats(h) {
                    let _ = writeln!(text, "{h} = {:.12}", x[0]);
                }
            }
            if let Some(v) = v.and_then(|v| v.strings("passed")) {
                let _ = writeln!(text, "family verified at {} of {} levels", v.iter().filter(|s| *s == "true").count(), v.len());
            }
        }
        _ => text.push_str("no data\n"),
    }

    section(&mut text, "schedule");
    match load(root, manifest, "schedule.csv") {
        Some(t) => {
            let _ = writeln!(text, "{}", t.header.join("  "));
            for r in &t.rows {
                let _ = writeln!(text, "{}", r.join("  "));
            }
            if let Some(c) = load(root, manifest, "schedule_checks.csv").and_then(|c| c.strings("status")) {
                let fails = c.iter().filter(|s| *s == "fail").count();
                let _ = writeln!(text, "{} checks, {fails} failed", c.len());
            }
        }
        None => text.push_str("no data\n"),
    }

    section(&mut text, "field");
    match load(root, manifest, "field_summary.csv") {
        Some(t) => {
            if let (Some(d), Some(s)) = (t.floats("divergence_ratio"), t.floats("max_speed")) {
                let _ = writeln!(text, "snapshots: {}, max divergence ratio {:.3e}, max speed {:.4}", d.len(), max_of(&d), max_of(&s));
            }
        }
        None => text.push_str("no data\n"),
    }
    if let Some(h) = load(root, manifest, "holder.csv") {
        if let (Some(d), Some(s)) = (h.strings("depth"), h.floats("spatial")) {
            for (d, s) in d.iter().zip(&s) {
                let _ = writeln!(text, "holder quotient at depth {d}: {s:.4}");
            }
        }
    }

    section(&mut text, "flow windows");
    match load(root, manifest, "flow_windows.csv") {
        Some(t) => {
            let g = |c: &str| t.floats(c).map(|v| max_of(&v)).unwrap_or(f64::NAN);
            let _ = writeln!(
                text,
                "windows: {}, max |det - 1| {:.3e}, max node composition error {:.3e}, max interpolated composition error {:.3e}, max bound ratio {:.3e}",
                t.rows.len(),
                g("max_det_error"),
                g("node_composition_error"),
                g("composition_error"),
                g("bound_ratio")
            );
        }
        None => text.push_str("no data\n"),
    }

    section(&mut text, "correctors");
    match load(root, manifest, "correctors_summary.csv") {
        Some(t) => {
            let g = |c: &str| t.floats(c).map(|v| v[0]).unwrap_or(f64::NAN);
            let _ = writeln!(
                text,
                "kappa {:.6e}: Kbar {:.10e}, reference {:.10e} (relative gap {:.3e}), envelope constant {:.4}, residual {:.3e}",
                g("kappa"),
                g("kbar"),
                g("reference"),
                (g("kbar") / g("reference") - 1.0).abs(),
                g("envelope_constant"),
                g("residual")
            );
        }
        None => text.push_str("no data\n"),
    }
    if let Some(t) = load(root, manifest, "correctors.csv") {
        let mut series = Vec::new();
        for c in ["J11", "J22", "K11"] {
            if let (Some(x), Some(y)) = (t.floats("t"), t.floats(c)) {
                series.push(Series { label: c.into(), points: x.into_iter().zip(y).collect(), dashed: c == "K11" });
            }
        }
        plots.push(("correctors.svg", Plot { title: "averaged flux", x: ("t", Scale::Linear), y: ("flux", Scale::Linear), series }));
    }

    section(&mut text, "cascade");
    match (load(root, manifest, "cascade_summary.csv"), load(root, manifest, "cascade.csv")) {
        (Some(s), c) => {
            for r in &s.rows {
                let _ = writeln!(text, "{}", s.header.iter().zip(r).map(|(h, v)| format!("{h}={v}")).collect::<Vec<_>>().join(" "));
            }
            if let Some(c) = c {
                let series = group(&c, "kappa_start", "m", "kappa")
                    .into_iter()
                    .map(|(l, p)| Series { label: format!("start {l}"), points: p, dashed: false })
                    .collect();
                plots.push(("cascade.svg", Plot { title: "renormalized diffusivities", x: ("m", Scale::Linear), y: ("kappa_m", Scale::Log10), series }));
            }
        }
        _ => text.push_str("no data\n"),
    }

    section(&mut text, "solve");
    match load(root, manifest, "diagnostics.csv") {
        Some(t) => {
            if let (Some(tt), Some(l), Some(c), Some(r)) = (t.floats("t"), t.floats("l2sq"), t.floats("cum_diss"), t.floats("residual")) {
                let last = tt.len() - 1;
                let _ = writeln!(
                    text,
                    "t_end {:.6}: l2sq {:.10e}, cumulative dissipation {:.10e}, max balance residual {:.3e}",
                    tt[last], l[last], c[last], max_of(&r)
                );
                plots.push((
                    "diagnostics.svg",
                    Plot { title: "scalar variance", x: ("t", Scale::Linear), y: ("||theta||^2", Scale::Linear), series: vec![Series { label: "l2sq".into(), points: tt.into_iter().zip(l).collect(), dashed: false }] },
                ));
            }
        }
        None => text.push_str("no data\n"),
    }

    section(&mut text, "step-down");
    match load(root, manifest, "stepdown.csv") {
        Some(t) => {
            if let (Some(run), Some(ratio)) = (t.strings("run"), t.floats("ratio")) {
                for (r, x) in run.iter().zip(&ratio) {
                    let _ = writeln!(text, "{r}: ratio {x:.6}, departure {:.4}", (x - 1.0).abs());
                }
            }
            if let Some(a) = load(root, manifest, "ansatz.csv") {
                if let (Some(tt), Some(e), Some(g)) = (a.floats("t"), a.floats("l2_error"), a.floats("l2_gap")) {
                    let _ = writeln!(text, "ansatz: sup error {:.4e}, sup corrector-free gap {:.4e}", max_of(&e), max_of(&g));
                    plots.push((
                        "ansatz.svg",
                        Plot {
                            title: "two-scale ansatz",
                            x: ("t", Scale::Linear),
                            y: ("relative L2 distance", Scale::Linear),
                            series: vec![
                                Series { label: "with corrector".into(), points: tt.iter().copied().zip(e).collect(), dashed: false },
                                Series { label: "without corrector".into(), points: tt.into_iter().zip(g).collect(), dashed: true },
                            ],
                        },
                    ));
                }
            }
        }
        None => text.push_str("no data\n"),
    }

    section(&mut text, "sweep");
    match load(root, manifest, "sweep.csv") {
        Some(t) => {
            if let (Some(k), Some(d), Some(b)) = (t.floats("kappa"), t.floats("dissipation"), t.floats("baseline_dissipation")) {
                for i in 0..k.len() {
                    let _ = writeln!(text, "kappa {:.6e}: dissipation {:.6e}, without flow {:.6e}", k[i], d[i], b[i]);
                }
                let mut series = vec![Series { label: "field".into(), points: k.iter().copied().zip(d).collect(), dashed: false }];
                if b.iter().any(|x| x.is_finite()) {
                    series.push(Series { label: "no flow".into(), points: k.into_iter().zip(b).collect(), dashed: true });
                }
                plots.push(("sweep.svg", Plot { title: "dissipation", x: ("kappa", Scale::Log10), y: ("kappa int |grad theta|^2", Scale::Linear), series }));
            }
        }
        None => text.push_str("no data\n"),
    }

    section(&mut text, "ergodic decay");
    match load(root, manifest, "ergodic.csv") {
        Some(t) => {
            let mut series = Vec::new();
            let rates = group(&t, "series", "N", "fit_rate");
            let pref = group(&t, "series", "N", "fit_prefactor");
            let r2 = group(&t, "series", "N", "fit_r2");
            for (i, (label, pts)) in group(&t, "series", "N", "gap").into_iter().enumerate() {
                let rate = rates[i].1[0].1;
                let p = pref[i].1[0].1;
                let _ = writeln!(text, "{label}: rate {rate:.6}, prefactor {p:.6e}, R^2 {:.6}", r2[i].1[0].1);
                let loglog = label == "hminus1";
                let fit: Vec<(f64, f64)> = pts.iter().map(|&(n, _)| (n, p * if loglog { n.powf(rate) } else { (rate * n).exp() })).collect();
                series.push(Series { label: label.clone(), points: pts, dashed: false });
                series.push(Series { label: format!("{label} fit"), points: fit, dashed: true });
            }
            plots.push(("ergodic.svg", Plot { title: "ergodic gap", x: ("N", Scale::Linear), y: ("gap", Scale::Log10), series }));
            if let Some(fl) = load(root, manifest, "ergodic_flow.csv") {
                let g = |c: &str| fl.strings(c).map(|v| v[0].clone()).unwrap_or_default();
                let _ = writeln!(text, "flow: fitted factor {}, predicted factor {}, passed {}", g("fitted_factor"), g("predicted_factor"), g("passed"));
            }
            if let Some(w) = load(root, manifest, "ergodic_warnings.csv") {
                for r in &w.rows {
                    let _ = writeln!(text, "warning: {}", r[0]);
                }
            }
        }
        None => text.push_str("no data\n"),
    }

    section(&mut text, "drift");
    match load(root, manifest, "drift.csv") {
        Some(t) => {
            if let (Some(v), Some(e), Some(c), Some(err), Some(s)) =
                (t.floats("v"), t.floats("enhancement"), t.floats("closed_form"), t.floats("relative_error"), t.floats("slope"))
            {
                let _ = writeln!(text, "slope {:.6}, max relative error against the closed form {:.3e}", s[0], max_of(&err));
                plots.push((
                    "drift.svg",
                    Plot {
                        title: "drift suppression",
                        x: ("v", Scale::Log10),
                        y: ("enhancement", Scale::Log10),
                        series: vec![
                            Series { label: "cell problem".into(), points: v.iter().copied().zip(e).collect(), dashed: false },
                            Series { label: "closed form".into(), points: v.into_iter().zip(c).collect(), dashed: true },
                        ],
                    },
                ));
            }
        }
        None => text.push_str("no data\n"),
    }

    section(&mut text, "euler residual");
    match load(root, manifest, "euler_summary.csv") {
        Some(t) => {
            if let (Some(l), Some(m)) = (t.strings("lambda"), t.floats("mean")) {
                for (l, m) in l.iter().zip(&m) {
                    let _ = writeln!(text, "lambda {l}: period mean {m:.6e}");
                }
            }
            if let Some(e) = load(root, manifest, "euler.csv") {
                let series = group(&e, "lambda", "t", "residual")
                    .into_iter()
                    .map(|(l, p)| Series { label: format!("lambda {l}"), points: p, dashed: false })
                    .collect();
                plots.push(("euler.svg", Plot { title: "Euler residual", x: ("t", Scale::Linear), y: ("residual", Scale::Linear), series }));
            }
        }
        None => text.push_str("no data\n"),
    }

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    text.push_str("\n== plots ==\n");
    for (name, p) in &plots {
        match render(p)? {
            Some(svg) => {
                let _ = writeln!(text, "{name}");
                files.push((name.to_string(), svg.into_bytes()));
            }
            None => {
                let _ = writeln!(text, "{name}: skipped, no finite points");
            }
        }
    }
    if plots.is_empty() {
        text.push_str("no data\n");
    }
    files.push((SUMMARY.to_string(), text.into_bytes()));
    let mut out = Vec::new();
    for (name, bytes) in files {
        std::fs::write(root.join(&name), &bytes)?;
        out.push(Artifact { path: name, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
    }
    Ok(out)
}
