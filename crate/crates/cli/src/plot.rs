//! Static SVG line charts and the CSV series behind them.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use trajalign::io::atomic_write;
use trajalign::Trajectory;

use crate::commands::MetricsReport;
use crate::error::CliResult;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// One named polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub markers: bool,
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Renders `series` on shared axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], equal_aspect: bool) -> String {
    let (mut x0, mut x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (mut y0, mut y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    if equal_aspect {
        let scale = ((x1 - x0) / pw).max((y1 - y0) / ph);
        let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        (x0, x1) = (cx - scale * pw / 2.0, cx + scale * pw / 2.0);
        (y0, y1) = (cy - scale * ph / 2.0, cy + scale * ph / 2.0);
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(fx),
            HEIGHT - MARGIN + 16.0,
            tick(fx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        if ser.markers {
            for &(x, y) in &ser.points {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    sx(x),
                    sy(y)
                );
            }
        }
        let ly = MARGIN + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            MARGIN + 10.0,
            MARGIN + 30.0,
            MARGIN + 36.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let r = format!("{v:.2}");
    if r == "-0.00" {
        "0.00".into()
    } else {
        r
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    atomic_write(path, |w| Ok(w.write_all(text.as_bytes())?))?;
    Ok(())
}

/// `E_h` against `h` per method.
pub fn write_error_plots(dir: &Path, report: &MetricsReport) -> CliResult<()> {
    let mut csv = String::from("method,horizon,euclidean\n");
    let mut series = Vec::new();
    for (name, m) in &report.methods {
        let points: Vec<(f64, f64)> = m.horizons.iter().map(|h| (h.horizon, h.euclidean)).collect();
        for (h, e) in &points {
            let _ = writeln!(csv, "{name},{h},{e}");
        }
        series.push(Series {
            name: name.clone(),
            points,
            markers: true,
        });
    }
    write_text(&dir.join("error_vs_horizon.csv"), &csv)?;
    write_text(
        &dir.join("error_vs_horizon.svg"),
        &line_chart(
            "Forecast error vs. horizon",
            "horizon (s)",
            "RMSE of Euclidean error (m)",
            &series,
            false,
        ),
    )
}

/// xy, xz and yz projections of the extracted trajectory and, if given,
/// the ground truth.
pub fn write_trajectory_plots(dir: &Path, traj: &Trajectory, truth: Option<&Trajectory>) -> CliResult<()> {
    let mut sources = vec![("extracted", traj)];
    if let Some(t) = truth {
        sources.push(("truth", t));
    }
    let mut csv = String::from("source,t,x,y,z\n");
    for (name, tr) in &sources {
        for s in tr.samples() {
            let _ = writeln!(csv, "{name},{},{},{},{}", s.t, s.position.x, s.position.y, s.position.z);
        }
    }
    write_text(&dir.join("trajectory_series.csv"), &csv)?;
    for (file, (a, b), (la, lb)) in [
        ("trajectory_xy.svg", (0, 1), ("x (m)", "y (m)")),
        ("trajectory_xz.svg", (0, 2), ("x (m)", "z (m)")),
        ("trajectory_yz.svg", (1, 2), ("y (m)", "z (m)")),
    ] {
        let series: Vec<Series> = sources
            .iter()
            .map(|(name, tr)| Series {
                name: name.to_string(),
                points: tr.samples().iter().map(|s| (s.position[a], s.position[b])).collect(),
                markers: false,
            })
            .collect();
        let title = format!("Trajectory, {} / {} projection", &la[..1], &lb[..1]);
        write_text(&dir.join(file), &line_chart(&title, la, lb, &series, true))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_is_well_formed() {
        let svg = line_chart(
            "a < b",
            "x",
            "y",
            &[Series {
                name: "s".into(),
                points: vec![(0.0, 1.0), (1.0, 2.0), (5.0, 3.0)],
                markers: true,
            }],
            false,
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<circle").count(), 3);
    }

    #[test]
    fn empty_and_flat_series_do_not_divide_by_zero() {
        let svg = line_chart(
            "t",
            "x",
            "y",
            &[Series {
                name: "s".into(),
                points: vec![(1.0, 1.0)],
                markers: false,
            }],
            true,
        );
        assert!(!svg.contains("NaN"));
        let svg = line_chart("t", "x", "y", &[], false);
        assert!(!svg.contains("NaN"));
    }
}
