//! Revenue and regret charts from metrics CSVs.
//!
//! Every chart is written twice: as SVG and as a long-format CSV
//! (`series,epoch,value`) whose values are the input fields verbatim.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};
use crate::metrics::{read_metrics, MetricsTable};

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(epoch, value, original text)`.
    pub points: Vec<(f64, f64, String)>,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn column_series(label: &str, table: &MetricsTable, col: usize) -> Series {
    Series {
        label: label.to_string(),
        points: table
            .rows
            .iter()
            .map(|r| {
                let v = r.raw[col].parse::<f64>().expect("validated on read");
                (r.epoch as f64, v, r.raw[col].clone())
            })
            .collect(),
        dashed: false,
    }
}

/// Builds the revenue and regret charts. The SPA line spans the epochs seen
/// in any input and sits at `spa_revenue`.
pub fn build_charts(inputs: &[(String, MetricsTable)], spa_revenue: f64) -> (Chart, Chart) {
    let mut revenue = Chart {
        title: "Test revenue per epoch".into(),
        y_label: "revenue".into(),
        series: Vec::new(),
    };
    let mut regret = Chart {
        title: "Test regret per epoch".into(),
        y_label: "regret".into(),
        series: Vec::new(),
    };
    let mut epochs: Vec<usize> = Vec::new();
    for (label, table) in inputs {
        let col = table.column("revenue_test").expect("validated header");
        revenue.series.push(column_series(label, table, col));
        for i in 0..table.n_buyers() {
            let col = table.column(&format!("regret_b{i}")).expect("validated header");
            regret.series.push(column_series(&format!("{label}/b{i}"), table, col));
        }
        epochs.extend(table.rows.iter().map(|r| r.epoch));
    }
    epochs.sort_unstable();
    epochs.dedup();
    let text = spa_revenue.to_string();
    revenue.series.push(Series {
        label: "spa".into(),
        points: epochs.iter().map(|&e| (e as f64, spa_revenue, text.clone())).collect(),
        dashed: true,
    });
    (revenue, regret)
}

pub fn chart_csv(chart: &Chart) -> String {
    let mut s = String::from("series,epoch,value\n");
    for series in &chart.series {
        for (e, _, raw) in &series.points {
            let _ = writeln!(s, "{},{},{}", series.label, e, raw);
        }
    }
    s
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

pub fn chart_svg(chart: &Chart) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let pts = chart.series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y, _) in pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    let (x0, x1) = if !x0.is_finite() {
        (0.0, 1.0)
    } else if x1 > x0 {
        (x0, x1)
    } else {
        (x0 - 1.0, x1 + 1.0)
    };
    let (y0, y1) = nice_range(y0, y1);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, chart.title);
    let (ax0, ax1, ay0, ay1) = (px(x0), px(x1), py(y0), py(y1));
    let _ = writeln!(
        s,
        r#"<path d="M{ax0:.1},{ay1:.1} V{ay0:.1} H{ax1:.1}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let y = y0 + (y1 - y0) * k as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{ax0:.1}" x2="{ax1:.1}" y1="{yy:.1}" y2="{yy:.1}" stroke="#ddd"/><text x="{tx:.1}" y="{ty:.1}" text-anchor="end">{y:.3}</text>"##,
            yy = py(y),
            tx = ax0 - 6.0,
            ty = py(y) + 4.0
        );
        let x = x0 + (x1 - x0) * k as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.0}</text>"#,
            px(x),
            ay0 + 18.0,
            x
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">epoch</text>"#,
        (ax0 + ax1) / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0,
        chart.y_label
    );
    for (k, series) in chart.series.iter().enumerate() {
        let color = if series.dashed { "#555" } else { PALETTE[k % PALETTE.len()] };
        let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let path: Vec<String> = series.points.iter().map(|(x, y, _)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        if !path.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
                path.join(" ")
            );
        }
        let ly = top + 16.0 * k as f64 + 10.0;
        let lx = w - right + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            series.label
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Reads `(label, csv path)` inputs and writes `revenue.{svg,csv}` and
/// `regret.{svg,csv}` into `out_dir`.
pub fn emit_report(inputs: &[(String, PathBuf)], spa_revenue: f64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(HarnessError::Validation(vec!["report needs at least one metrics CSV".into()]));
    }
    let tables = inputs
        .iter()
        .map(|(label, p)| Ok((label.clone(), read_metrics(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let (revenue, regret) = build_charts(&tables, spa_revenue);
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut written = Vec::new();
    for (name, chart) in [("revenue", &revenue), ("regret", &regret)] {
        for (ext, body) in [("svg", chart_svg(chart)), ("csv", chart_csv(chart))] {
            let p = out_dir.join(format!("{name}.{ext}"));
            std::fs::write(&p, body).map_err(|e| HarnessError::io(&p, e))?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Label for a metrics file: its stem without a trailing `-metrics`.
pub fn label_for(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_suffix("-metrics").map(String::from).unwrap_or(stem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::header;

    fn write_csv(dir: &Path, name: &str, rows: &[&str]) -> PathBuf {
        let p = dir.join(name);
        let mut text = header(2).join(",") + "\n";
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn one_csv_gives_two_charts_with_verbatim_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(
            dir.path(),
            "dla-metrics.csv",
            &["1,0.5,0.30000000000000004,0.01,0.002,0,5.01,0", "2,0.7,1.6,0.003,1e-5,0,5.02,0"],
        );
        let files = emit_report(&[(label_for(&p), p)], 1.4938, dir.path()).unwrap();
        let svgs = files.iter().filter(|f| f.extension().unwrap() == "svg").count();
        assert_eq!(svgs, 2);
        let rev = std::fs::read_to_string(dir.path().join("revenue.csv")).unwrap();
        assert!(rev.contains("dla,1,0.30000000000000004\n"));
        assert!(rev.contains("dla,2,1.6\n"));
        assert!(rev.contains("spa,1,1.4938\nspa,2,1.4938\n"));
        let reg = std::fs::read_to_string(dir.path().join("regret.csv")).unwrap();
        assert!(reg.contains("dla/b1,2,1e-5\n"));
        let svg = std::fs::read_to_string(dir.path().join("revenue.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("stroke-dasharray"));
    }

    #[test]
    fn spa_line_is_horizontal() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(dir.path(), "a.csv", &["1,0.5,0.5,0,0,0,5,0", "3,0.5,0.9,0,0,0,5,0"]);
        let tables = vec![("a".to_string(), read_metrics(&a).unwrap())];
        let (rev, _) = build_charts(&tables, 1.25);
        let spa = rev.series.iter().find(|s| s.label == "spa").unwrap();
        assert_eq!(spa.points.len(), 2);
        assert!(spa.points.iter().all(|p| p.1 == 1.25));
    }

    #[test]
    fn malformed_input_is_a_line_numbered_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(dir.path(), "bad.csv", &["1,0.5,0.5,0,0,0,5,0", "2,0.5"]);
        let err = emit_report(&[("bad".into(), p)], 1.5, dir.path()).unwrap_err();
        assert!(err.to_string().contains(":3:"), "{err}");
        assert!(emit_report(&[], 1.5, dir.path()).is_err());
    }
}
