//! File emission: RFC-4180 CSV with `%.17g` numeric formatting, JSON event
//! sidecars, and minimal native SVG polyline/scatter plots.

use crate::analysis::SweepResult;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::phase::PhaseMap;
use std::io::Write;
use std::path::Path;

/// Format a double the way C's `%.17g` does: 17 significant digits, fixed
/// or scientific notation by exponent, trailing zeros trimmed only in the
/// scientific mantissa (printf trims neither style unless they round away;
/// `%g` removes trailing zeros in both styles).
pub fn format_g17(x: f64) -> String {
    const P: i32 = 17;
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x < 0.0 { "-inf".into() } else { "inf".into() };
    }
    // round to 17 significant digits via the scientific form
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').expect("scientific form");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= P {
        // %e style with trimmed mantissa and 2+ digit exponent
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mant}e{sign}{:02}", exp.abs());
    }
    // %f style with P-1-exp digits after the point, then trim
    let prec = (P - 1 - exp).max(0) as usize;
    let fixed = format!("{x:.prec$}");
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(path)?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(file))
}

fn finish(mut w: csv::Writer<std::fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

/// Trajectory CSV: `t,v_in,v_out,region`.
pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "v_in", "v_out", "region"])
        .map_err(|e| Error::Io(e.to_string()))?;
    for s in &traj.samples {
        w.write_record([
            format_g17(s.t),
            format_g17(s.v_in),
            format_g17(s.v_out),
            s.region.as_str().to_string(),
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    finish(w)
}

/// JSON sidecar with the trajectory's event annotations.
pub fn write_events_json(traj: &Trajectory, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(file, &traj.events)
        .map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

/// Sweep CSV: `epsilon,d2_pred,d3_pred,total_pred,measured`.
pub fn write_sweep_csv(sweep: &SweepResult, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["epsilon", "d2_pred", "d3_pred", "total_pred", "measured"])
        .map_err(|e| Error::Io(e.to_string()))?;
    for r in &sweep.rows {
        w.write_record([
            format_g17(r.epsilon),
            format_g17(r.d2_pred),
            format_g17(r.d3_pred),
            format_g17(r.total_pred),
            format_g17(r.measured),
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    finish(w)
}

/// Phase-map grid CSV: `v_in,v_out,dvout_dt`.
pub fn write_phase_map_csv(map: &PhaseMap, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["v_in", "v_out", "dvout_dt"])
        .map_err(|e| Error::Io(e.to_string()))?;
    for p in &map.grid {
        w.write_record([
            format_g17(p.v_in),
            format_g17(p.v_out),
            format_g17(p.dvout_dt),
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    finish(w)
}

/// One curve as a `v_in,v_out` CSV.
pub fn write_curve_csv(points: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["v_in", "v_out"])
        .map_err(|e| Error::Io(e.to_string()))?;
    for (v_in, v_out) in points {
        w.write_record([format_g17(*v_in), format_g17(*v_out)])
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    finish(w)
}

// ---------------------------------------------------------------------------
// SVG plotting (presentation only)
// ---------------------------------------------------------------------------

const SVG_W: f64 = 860.0;
const SVG_H: f64 = 540.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn from_bounds(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Frame {
        let mut x0 = f64::INFINITY;
        let mut x1 = f64::NEG_INFINITY;
        for x in xs {
            if x.is_finite() {
                x0 = x0.min(x);
                x1 = x1.max(x);
            }
        }
        let mut y0 = f64::INFINITY;
        let mut y1 = f64::NEG_INFINITY;
        for y in ys {
            if y.is_finite() {
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        if !(x1 > x0) {
            x1 = x0 + 1.0;
        }
        if !(y1 > y0) {
            y1 = y0 + 1.0;
        }
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (SVG_W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        SVG_H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (SVG_H - 2.0 * MARGIN)
    }
}

fn svg_header(title: &str, x_label: &str, y_label: &str, frame: &Frame) -> String {
    let mut s = format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>
"##,
        SVG_W / 2.0,
        xml_escape(title)
    );
    // axes box and corner labels
    s.push_str(&format!(
        r##"<rect x="{m}" y="{m}" width="{w}" height="{h}" fill="none" stroke="#444"/>
<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>
<text x="16" y="{}" transform="rotate(-90 16 {cy})" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>
<text x="{m}" y="{ylab}" font-family="monospace" font-size="10">{}</text>
<text x="{xr}" y="{ylab}" text-anchor="end" font-family="monospace" font-size="10">{}</text>
<text x="{m2}" y="{yb}" font-family="monospace" font-size="10">{}</text>
<text x="{m2}" y="{yt}" font-family="monospace" font-size="10">{}</text>
"##,
        SVG_W / 2.0,
        SVG_H - 18.0,
        xml_escape(x_label),
        (SVG_H) / 2.0,
        xml_escape(y_label),
        format_short(frame.x0),
        format_short(frame.x1),
        format_short(frame.y0),
        format_short(frame.y1),
        m = MARGIN,
        m2 = 6.0,
        w = SVG_W - 2.0 * MARGIN,
        h = SVG_H - 2.0 * MARGIN,
        cy = SVG_H / 2.0,
        ylab = SVG_H - MARGIN + 16.0,
        xr = SVG_W - MARGIN,
        yb = SVG_H - MARGIN,
        yt = MARGIN + 4.0,
    ));
    s
}

fn format_short(x: f64) -> String {
    format!("{x:.4e}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Polyline plot of one or more labelled series.
pub fn write_svg_series(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, Vec<(f64, f64)>)],
) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let frame = Frame::from_bounds(
        series.iter().flat_map(|s| s.1.iter().map(|p| p.0)),
        series.iter().flat_map(|s| s.1.iter().map(|p| p.1)),
    );
    let mut out = svg_header(title, x_label, y_label, &frame);
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut d = String::new();
        for (j, (x, y)) in pts.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            d.push_str(if j == 0 { "M" } else { "L" });
            d.push_str(&format!("{:.2},{:.2} ", frame.px(*x), frame.py(*y)));
        }
        out.push_str(&format!(
            r##"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.4"/>
<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>
"##,
            SVG_W - MARGIN - 150.0,
            MARGIN + 18.0 + 16.0 * i as f64,
            xml_escape(label)
        ));
    }
    out.push_str("</svg>\n");
    std::fs::write(path, out)?;
    Ok(())
}

/// Phase-map plot: field samples as gray (positive) and black (negative)
/// dots sized by magnitude, with the rest-line curves overlaid.
pub fn write_svg_phase_map(path: &Path, title: &str, map: &PhaseMap) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let frame = Frame::from_bounds(
        map.grid
            .iter()
            .map(|p| p.v_in)
            .chain(map.curves.iter().flat_map(|c| c.1.iter().map(|p| p.0))),
        map.grid
            .iter()
            .map(|p| p.v_out)
            .chain(map.curves.iter().flat_map(|c| c.1.iter().map(|p| p.1))),
    );
    let fmax = map
        .grid
        .iter()
        .map(|p| p.dvout_dt.abs())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut out = svg_header(title, "v_in [V]", "v_out [V]", &frame);
    for p in &map.grid {
        if !p.dvout_dt.is_finite() {
            continue;
        }
        let r = 0.6 + 3.4 * (p.dvout_dt.abs() / fmax).powf(1.0 / 3.0);
        let color = if p.dvout_dt > 0.0 { "#9a9a9a" } else { "#111111" };
        out.push_str(&format!(
            r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{color}"/>
"##,
            frame.px(p.v_in),
            frame.py(p.v_out),
            r
        ));
    }
    for (i, (label, pts)) in map.curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut d = String::new();
        for (j, (x, y)) in pts.iter().enumerate() {
            d.push_str(if j == 0 { "M" } else { "L" });
            d.push_str(&format!("{:.2},{:.2} ", frame.px(*x), frame.py(*y)));
        }
        out.push_str(&format!(
            r##"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.8"/>
<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>
"##,
            SVG_W - MARGIN - 90.0,
            MARGIN + 18.0 + 16.0 * i as f64,
            xml_escape(label)
        ));
    }
    out.push_str("</svg>\n");
    std::fs::write(path, out)?;
    Ok(())
}

/// Serialize any value as pretty JSON.
pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(file, value).map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf_fixtures() {
        // fixtures generated with C-compatible '%.17g'
        let cases: &[(f64, &str)] = &[
            (0.0, "0"),
            (-0.0, "-0"),
            (1.0, "1"),
            (-1.5, "-1.5"),
            (0.499, "0.499"),
            (0.25, "0.25"),
            (1e-9, "1.0000000000000001e-09"),
            (2.004008016032064e-12, "2.0040080160320642e-12"),
            (123456789.123456789, "123456789.12345679"),
            (1e17, "1e+17"),
            (1e16, "10000000000000000"),
            (9.9e16, "99000000000000000"),
            (1e-4, "0.0001"),
            (9.9999e-5, "9.9999000000000003e-05"),
            (0.0005, "0.00050000000000000001"),
            (-3.3e-300, "-3.3000000000000002e-300"),
            (1.7976931348623157e308, "1.7976931348623157e+308"),
            (0.1, "0.10000000000000001"),
            (2e-3, "0.002"),
            (6.931471805599453e-10, "6.9314718055994532e-10"),
            (1234.5, "1234.5"),
            (1e100, "1e+100"),
        ];
        for (x, want) in cases {
            assert_eq!(format_g17(*x), *want, "for {x:e}");
        }
    }

    #[test]
    fn g17_roundtrips() {
        for &x in &[1.0 / 3.0, 2e-12 / 499.0, -7.25e33, 5.5e-200] {
            let s = format_g17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s}");
        }
    }

    #[test]
    fn csv_files_have_headers_and_crlf() {
        let dir = tempfile::tempdir().unwrap();
        let m = crate::model::StModel::new(1000.0, 0.5, 1.0, 0.0, 1e-9).unwrap();
        let traj = crate::integrator::integrate(
            &m,
            &crate::waveform::Waveform::constant(0.6),
            1.0,
            (0.0, 1e-9),
            1e-9,
        )
        .unwrap();
        let path = dir.path().join("traj.csv");
        write_trajectory_csv(&traj, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,v_in,v_out,region\r\n"));
        assert!(text.contains("sat_"));

        let ev = dir.path().join("events.json");
        write_events_json(&traj, &ev).unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&ev).unwrap()).unwrap();
        assert!(parsed.is_array());
    }

    #[test]
    fn svg_emits_wellformed_plot() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.svg");
        write_svg_series(
            &path,
            "test",
            "x",
            "y",
            &[("a", vec![(0.0, 0.0), (1.0, 1.0)])],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.trim_end().ends_with("</svg>"));
    }
}
