//! SVG rendering of DET curves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mespot::evaluation::{reference_point, DetCurve, EvalError};
use thiserror::Error;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("nothing to plot")]
    NoCurves,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Legend entries `(label, miss at ref_x)` sorted by that miss rate, best first.
pub fn legend_order(curves: &[(String, DetCurve)], ref_x: f64) -> Result<Vec<(usize, f64)>, PlotError> {
    let mut order = curves
        .iter()
        .enumerate()
        .map(|(i, (_, c))| Ok((i, reference_point(c, ref_x)?)))
        .collect::<Result<Vec<_>, PlotError>>()?;
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(order)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders miss rate against false-positive rate, one polyline per curve.
pub fn render_det_svg(curves: &[(String, DetCurve)], ref_x: f64) -> Result<String, PlotError> {
    if curves.is_empty() {
        return Err(PlotError::NoCurves);
    }
    let order = legend_order(curves, ref_x)?;
    let x_max = curves
        .iter()
        .flat_map(|(_, c)| c.points.iter().map(|p| p.fp_rate))
        .filter(|x| x.is_finite())
        .fold(ref_x.max(1e-9), f64::max);
    let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let sx = |x: f64| MARGIN + x / x_max * pw;
    let sy = |y: f64| MARGIN + (1.0 - y) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.2}</text>"#,
            sx(f * x_max),
            HEIGHT - MARGIN + 16.0,
            f * x_max
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.2}</text>"#,
            MARGIN - 6.0,
            sy(f) + 4.0,
            f
        );
    }
    let kind = if curves[0].1.kind == mespot::evaluation::CurveKind::PerVideo {
        "FPPV"
    } else {
        "FPPW"
    };
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{kind}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">miss rate</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{0:.1}" y1="{MARGIN}" x2="{0:.1}" y2="{1:.1}" stroke="gray" stroke-dasharray="4 3"/>"#,
        sx(ref_x),
        HEIGHT - MARGIN
    );

    for (i, (_, c)) in curves.iter().enumerate() {
        let pts: Vec<String> = c
            .points
            .iter()
            .filter(|p| p.fp_rate.is_finite() && p.miss_rate.is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(p.fp_rate), sy(p.miss_rate)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            COLORS[i % COLORS.len()],
            pts.join(" ")
        );
    }

    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}">ordered by miss rate at {ref_x} (lower is better)</text>"#,
        MARGIN + 10.0,
        MARGIN + 16.0
    );
    for (rank, (i, miss)) in order.iter().enumerate() {
        let y = MARGIN + 34.0 + 16.0 * rank as f64;
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#,
            MARGIN + 10.0,
            y - 4.0,
            MARGIN + 30.0,
            y - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{y:.1}">{} ({:.2}%)</text>"#,
            MARGIN + 36.0,
            escape(&curves[*i].0),
            miss * 100.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_det_plot(curves: &[(String, DetCurve)], ref_x: f64, out_path: impl AsRef<Path>) -> Result<(), PlotError> {
    let svg = render_det_svg(curves, ref_x)?;
    fs::write(out_path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mespot::evaluation::{CurveKind, DetPoint};

    fn curve(points: &[(f64, f64)]) -> DetCurve {
        DetCurve::new(
            CurveKind::PerWindow,
            points
                .iter()
                .map(|&(x, y)| DetPoint {
                    threshold: f64::NAN,
                    fp_rate: x,
                    miss_rate: y,
                })
                .collect(),
        )
    }

    #[test]
    fn one_polyline_with_two_points() {
        let svg = render_det_svg(&[("diag".into(), curve(&[(0.0, 1.0), (1.0, 0.0)]))], 0.4).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 2);
        assert!(svg.contains("diag (60.00%)"));
    }

    #[test]
    fn legend_lists_lower_miss_first() {
        let curves = vec![
            ("worse".to_string(), curve(&[(0.0, 1.0), (1.0, 0.5)])),
            ("better".to_string(), curve(&[(0.0, 0.6), (1.0, 0.0)])),
        ];
        let order = legend_order(&curves, 0.4).unwrap();
        assert_eq!(order.iter().map(|o| o.0).collect::<Vec<_>>(), vec![1, 0]);
        let svg = render_det_svg(&curves, 0.4).unwrap();
        assert!(svg.find(">better (").unwrap() < svg.find(">worse (").unwrap());
    }

    #[test]
    fn empty_list_is_an_error() {
        assert!(matches!(render_det_svg(&[], 0.4), Err(PlotError::NoCurves)));
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_det_plot(&[], 1.0, dir.path().join("x.svg")).is_err());
    }
}
