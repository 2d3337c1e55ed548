//! CSV, SVG and JSON output of a sweep.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::sweep::{ExperimentReport, ReportRow, SolverKind};

pub const CSV_HEADER: [&str; 7] = [
    "solver",
    "schedule",
    "s",
    "success_freq",
    "mean_time_s",
    "mean_iters",
    "failed_trials",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("malformed report CSV: {0}")]
    Parse(String),
    #[error("inconsistent report: {0}")]
    Inconsistent(String),
}

/// `printf("%.6g")`.
pub fn fmt_g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        trim_zeros(&format!("{x:.*}", (5 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` as it reads back after [`fmt_g6`].
pub fn round_g6(x: f64) -> f64 {
    fmt_g6(x).parse().unwrap_or(x)
}

impl ReportRow {
    /// The row with its real fields rounded as the CSV stores them.
    pub fn rounded(&self) -> Self {
        Self {
            success_freq: round_g6(self.success_freq),
            mean_time_s: round_g6(self.mean_time_s),
            mean_iters: round_g6(self.mean_iters),
            ..self.clone()
        }
    }
}

pub fn write_csv<W: io::Write>(rows: &[ReportRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.solver.to_string(),
            r.schedule.clone(),
            r.s.to_string(),
            fmt_g6(r.success_freq),
            fmt_g6(r.mean_time_s),
            fmt_g6(r.mean_iters),
            r.failed_trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[ReportRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

pub fn parse_csv<R: io::Read>(input: R) -> Result<Vec<ReportRow>, ReportError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| ReportError::Parse(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(ReportError::Parse(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ReportError::Parse(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let bad = |what: &str| ReportError::Parse(format!("row {}: bad {what}", line + 1));
        rows.push(ReportRow {
            solver: field(0).parse::<SolverKind>().map_err(|_| bad("solver"))?,
            schedule: field(1).to_string(),
            s: field(2).parse().map_err(|_| bad("s"))?,
            success_freq: field(3).parse().map_err(|_| bad("success_freq"))?,
            mean_time_s: field(4).parse().map_err(|_| bad("mean_time_s"))?,
            mean_iters: field(5).parse().map_err(|_| bad("mean_iters"))?,
            failed_trials: field(6).parse().map_err(|_| bad("failed_trials"))?,
        });
    }
    Ok(rows)
}

/// Recounts successes from the stored per-trial errors and checks them against the rows.
pub fn verify(r: &ExperimentReport) -> Result<(), ReportError> {
    let tol = r.spec.success_tol;
    for t in &r.trials {
        let within = t.rel_error.is_some_and(|e| e <= tol);
        if t.success != within {
            return Err(ReportError::Inconsistent(format!(
                "{} {} s={} trial {}: success flag {} but error {:?}",
                t.solver, t.schedule, t.s, t.trial, t.success, t.rel_error
            )));
        }
    }
    for row in &r.rows {
        let group: Vec<_> = r
            .trials
            .iter()
            .filter(|t| t.solver == row.solver && t.schedule == row.schedule && t.s == row.s)
            .collect();
        let ok = group.iter().filter(|t| t.rel_error.is_some_and(|e| e <= tol)).count();
        if group.len() != r.spec.trials || row.success_freq != ok as f64 / group.len() as f64 {
            return Err(ReportError::Inconsistent(format!(
                "{} {} s={}: frequency {} from {} of {} trials",
                row.solver,
                row.schedule,
                row.s,
                row.success_freq,
                ok,
                group.len()
            )));
        }
    }
    Ok(())
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart of one metric against `s`, one polyline per solver arm.
pub fn svg_chart(title: &str, y_label: &str, rows: &[ReportRow], metric: fn(&ReportRow) -> f64, y_max: Option<f64>) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 170.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 50.0;

    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        let name = format!("{} {}", r.solver, r.schedule);
        let point = (r.s as f64, metric(r));
        match series.iter_mut().find(|(n, _)| *n == name) {
            Some((_, pts)) => pts.push(point),
            None => series.push((name, vec![point])),
        }
    }
    let xs = rows.iter().map(|r| r.s as f64);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (x0, x1) = if x0.is_finite() { (x0, x1.max(x0 + 1.0)) } else { (0.0, 1.0) };
    let top = y_max.unwrap_or_else(|| rows.iter().map(metric).fold(0.0, f64::max) * 1.05);
    let top = if top > 0.0 { top } else { 1.0 };
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - y / top * (H - TOP - BOTTOM);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (LEFT + W - RIGHT) / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{LEFT},{TOP} V{} H{}" fill="none" stroke="black"/>"#,
        H - BOTTOM,
        W - RIGHT
    );
    for i in 0..=5 {
        let v = top * i as f64 / 5.0;
        let y = py(v);
        let _ = writeln!(svg, r#"<line x1="{}" y1="{y:.1}" x2="{LEFT}" y2="{y:.1}" stroke="black"/>"#, LEFT - 4.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 7.0, y + 4.0, fmt_g6(round_g6(v)));
    }
    let mut ticks: Vec<f64> = rows.iter().map(|r| r.s as f64).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    let stride = ticks.len().div_ceil(12).max(1);
    for &t in ticks.iter().step_by(stride) {
        let x = px(t);
        let _ = writeln!(svg, r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="black"/>"#, H - BOTTOM, H - BOTTOM + 4.0);
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{t}</text>"#, H - BOTTOM + 18.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">sparsity s</text>"#, (LEFT + W - RIGHT) / 2.0, H - 10.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        escape(y_label)
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = TOP + 18.0 * k as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(name));
    }
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFiles {
    pub csv: PathBuf,
    pub success_svg: PathBuf,
    pub runtime_svg: PathBuf,
    pub json: PathBuf,
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    #[serde(flatten)]
    report: &'a ExperimentReport,
}

/// Writes `results.csv`, `success.svg`, `runtime.svg` and `report.json` into `dir`.
pub fn emit_report(r: &ExperimentReport, dir: &Path) -> Result<EmittedFiles, ReportError> {
    verify(r)?;
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = EmittedFiles {
        csv: dir.join("results.csv"),
        success_svg: dir.join("success.svg"),
        runtime_svg: dir.join("runtime.svg"),
        json: dir.join("report.json"),
    };

    let out = fs::File::create(&files.csv).map_err(io_err(&files.csv))?;
    write_csv(&r.rows, io::BufWriter::new(out)).map_err(|source| ReportError::Csv {
        path: files.csv.clone(),
        source,
    })?;

    let success = svg_chart("Frequency of exact recovery", "success frequency", &r.rows, |r| r.success_freq, Some(1.0));
    fs::write(&files.success_svg, success).map_err(io_err(&files.success_svg))?;
    let runtime = svg_chart("Running time", "mean time per trial (s)", &r.rows, |r| r.mean_time_s, None);
    fs::write(&files.runtime_svg, runtime).map_err(io_err(&files.runtime_svg))?;

    let prov = Provenance {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        report: r,
    };
    let json = serde_json::to_vec_pretty(&prov).map_err(|source| ReportError::Json {
        path: files.json.clone(),
        source,
    })?;
    fs::write(&files.json, json).map_err(io_err(&files.json))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g6_formatting() {
        let cases = [
            (1.0, "1"),
            (0.5, "0.5"),
            (2.0 / 3.0, "0.666667"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (999999.5, "1e+06"),
            (-3.25, "-3.25"),
            (0.0, "0"),
            (42.0, "42"),
            (0.1 + 0.2, "0.3"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g6(x), want, "{x}");
        }
    }

    fn row(s: usize, f: f64) -> ReportRow {
        ReportRow {
            solver: SolverKind::Osnst,
            schedule: "table(1;2;3)".into(),
            s,
            success_freq: f,
            mean_time_s: 0.0123456789,
            mean_iters: 17.0 / 3.0,
            failed_trials: 1,
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(csv_string(&[]), "solver,schedule,s,success_freq,mean_time_s,mean_iters,failed_trials\n");
    }

    #[test]
    fn one_row_one_line() {
        let text = csv_string(&[row(5, 0.98)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "osnst,table(1;2;3),5,0.98,0.0123457,5.66667,1");
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row(1, 1.0), row(2, 1.0 / 3.0), row(3, 0.0)];
        let back = parse_csv(csv_string(&rows).as_bytes()).unwrap();
        let rounded: Vec<_> = rows.iter().map(ReportRow::rounded).collect();
        assert_eq!(back, rounded);
        assert!(parse_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn svg_has_one_polyline_per_arm() {
        let mut rows = vec![row(1, 1.0), row(2, 0.5)];
        rows.push(ReportRow {
            solver: SolverKind::Somp,
            schedule: "oracle_s".into(),
            ..row(1, 0.9)
        });
        let svg = svg_chart("t", "y", &rows, |r| r.success_freq, Some(1.0));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("somp oracle_s"));
    }
}
