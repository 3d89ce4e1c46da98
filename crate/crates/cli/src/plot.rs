//! Self-contained SVG line charts with a CSV sidecar of the plotted points.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 4] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"];

/// Writes `path` (SVG) and `path` with a `.csv` extension. Output bytes
/// depend only on the inputs.
pub fn emit_plot(predictions: &[(&str, &[f64])], truth: &[f64], path: &Path) -> CliResult<PathBuf> {
    if truth.is_empty() {
        return Err(CliError::Data("cannot plot an empty series".into()));
    }
    if predictions.is_empty() {
        return Err(CliError::Data("no prediction series to plot".into()));
    }
    for (name, p) in predictions {
        if p.len() != truth.len() {
            return Err(CliError::Data(format!(
                "series `{name}` has {} points, truth has {}",
                p.len(),
                truth.len()
            )));
        }
    }
    let all = predictions.iter().flat_map(|(_, p)| p.iter()).chain(truth);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in all {
        if !v.is_finite() {
            return Err(CliError::Data("cannot plot non-finite values".into()));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let n = truth.len();
    let x = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);
    let polyline = |s: &[f64], color: &str, dash: &str| {
        let pts: Vec<String> = s.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v))).collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>\n",
            pts.join(" ")
        )
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<g stroke=\"#444\" stroke-width=\"1\"><line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\"/><line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\"/></g>",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        svg,
        "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\"><text x=\"4\" y=\"{:.2}\">{hi:.3}</text><text x=\"4\" y=\"{:.2}\">{lo:.3}</text><text x=\"{:.2}\" y=\"{:.2}\">step</text></g>",
        MARGIN + 4.0,
        HEIGHT - MARGIN,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    svg.push_str(&polyline(truth, "#000000", ""));
    for (i, (_, p)) in predictions.iter().enumerate() {
        svg.push_str(&polyline(p, COLORS[i % COLORS.len()], " stroke-dasharray=\"5,3\""));
    }
    let legend: Vec<(&str, &str)> = std::iter::once(("truth", "#000000"))
        .chain(predictions.iter().enumerate().map(|(i, (name, _))| (*name, COLORS[i % COLORS.len()])))
        .collect();
    for (i, (name, color)) in legend.iter().enumerate() {
        let ly = 16.0 + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            "<g font-family=\"sans-serif\" font-size=\"11\"><line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text></g>",
            WIDTH - 150.0,
            ly - 4.0,
            WIDTH - 130.0,
            ly - 4.0,
            WIDTH - 124.0,
            ly,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| CliError::output(path, e))?;

    let csv_path = path.with_extension("csv");
    let mut csv = String::from("step,truth");
    for (name, _) in predictions {
        csv.push(',');
        csv.push_str(&name.replace(',', "_"));
    }
    csv.push('\n');
    for i in 0..n {
        let _ = write!(csv, "{i},{:?}", truth[i]);
        for (_, p) in predictions {
            let _ = write!(csv, ",{:?}", p[i]);
        }
        csv.push('\n');
    }
    std::fs::write(&csv_path, csv).map_err(|e| CliError::output(&csv_path, e))?;
    Ok(csv_path)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_series_give_equal_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.svg");
        let t = [1.0, 2.0, 0.5];
        let csv = emit_plot(&[("pred", &t)], &t, &p).unwrap();
        let text = std::fs::read_to_string(csv).unwrap();
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[1], cols[2]);
        }
        assert_eq!(text.lines().count(), 4);
        assert!(std::fs::read_to_string(&p).unwrap().matches("<polyline").count() == 2);
    }

    #[test]
    fn output_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
        let t: Vec<f64> = (0..96).map(|i| (i as f64 / 7.0).sin()).collect();
        let p: Vec<f64> = t.iter().map(|v| v * 0.9).collect();
        emit_plot(&[("model", &p)], &t, &a).unwrap();
        emit_plot(&[("model", &p)], &t, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(
            std::fs::read(a.with_extension("csv")).unwrap(),
            std::fs::read(b.with_extension("csv")).unwrap()
        );
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.svg");
        assert!(emit_plot(&[("p", &[])], &[], &p).is_err());
        assert!(emit_plot(&[("p", &[1.0])], &[1.0, 2.0], &p).is_err());
        assert!(!p.exists());
    }
}
