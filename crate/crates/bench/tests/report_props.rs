use osnst_bench::report::{csv_string, fmt_g6, parse_csv, verify};
use osnst_bench::sweep::ReportRow;
use osnst_bench::{emit_report, run_sweep, ExperimentSpec, SolverKind, SparsityRange, SweepOptions};
use osnst_core::FeedbackSchedule;
use proptest::prelude::*;

fn spec() -> ExperimentSpec {
    let mut s = ExperimentSpec::new(16, 40, 2, SparsityRange { start: 2, end: 8, step: 3 }, 3, 0.5);
    s.solvers = vec![SolverKind::Osnst, SolverKind::Somp];
    s.schedules = vec![FeedbackSchedule::Linear(2), FeedbackSchedule::Table(vec![1, 3, 5])];
    s.seed = 77;
    s
}

proptest! {
    #[test]
    fn g6_keeps_six_significant_digits(x in -1e9f64..1e9) {
        prop_assume!(x != 0.0);
        let back: f64 = fmt_g6(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs());
    }

    #[test]
    fn csv_parse_back(rows in proptest::collection::vec((1usize..100, 0u32..=50, 0.0f64..10.0, 0.0f64..300.0, 0usize..50), 0..20)) {
        let rows: Vec<ReportRow> = rows
            .into_iter()
            .map(|(s, ok, t, it, failed)| ReportRow {
                solver: if s % 2 == 0 { SolverKind::Osnst } else { SolverKind::Somp },
                schedule: "linear(6)".into(),
                s,
                success_freq: ok as f64 / 50.0,
                mean_time_s: t,
                mean_iters: it,
                failed_trials: failed,
            })
            .collect();
        let back = parse_csv(csv_string(&rows).as_bytes()).unwrap();
        let rounded: Vec<_> = rows.iter().map(ReportRow::rounded).collect();
        prop_assert_eq!(back, rounded);
    }
}

#[test]
fn emitted_files_parse_back_and_verify() {
    let report = run_sweep(&spec(), SweepOptions::default()).unwrap();
    verify(&report).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path()).unwrap();
    let back = parse_csv(std::fs::File::open(&files.csv).unwrap()).unwrap();
    let rounded: Vec<_> = report.rows.iter().map(ReportRow::rounded).collect();
    assert_eq!(back, rounded);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&files.json).unwrap()).unwrap();
    assert_eq!(json["spec"]["seed"], 77);
    assert_eq!(json["trials"].as_array().unwrap().len(), 3 * 3 * 3);
    for svg in [&files.success_svg, &files.runtime_svg] {
        let text = std::fs::read_to_string(svg).unwrap();
        assert_eq!(text.matches("<polyline").count(), 3);
    }
}

#[test]
fn tampered_success_is_caught() {
    let mut report = run_sweep(&spec(), SweepOptions::default()).unwrap();
    let t = report.trials.iter_mut().find(|t| t.success).unwrap();
    t.rel_error = Some(1.0);
    assert!(verify(&report).is_err());
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_report(&report, dir.path()).is_err());
}

#[test]
fn single_trial_reruns_identical() {
    let mut s = spec();
    s.trials = 1;
    let opts = SweepOptions { threads: None, timing: false };
    let a = run_sweep(&s, opts).unwrap();
    let b = run_sweep(&s, opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(csv_string(&a.rows), csv_string(&b.rows));
}

#[test]
fn unwritable_destination_names_the_path() {
    let report = run_sweep(&spec(), SweepOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let err = emit_report(&report, &blocker.join("sub")).unwrap_err();
    assert!(err.to_string().contains("file"));
}
