//! Monte-Carlo sweeps over sparsity.

use std::fmt;
use std::time::Instant;

use log::{debug, info};
use osnst_core::model::relative_error;
use osnst_core::{osnst_solve, somp_solve, FeedbackSchedule, SolveStatus, SolverConfig, Tolerance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generate::{gen_problem, trial_seed};

/// Schedule column entry for SOMP, which is told the true sparsity.
pub const SOMP_LABEL: &str = "oracle_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Osnst,
    Somp,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Osnst => "osnst",
            SolverKind::Somp => "somp",
        })
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "osnst" => Ok(SolverKind::Osnst),
            "somp" => Ok(SolverKind::Somp),
            other => Err(format!("unknown solver {other:?}")),
        }
    }
}

/// Inclusive range `start, start + step, …, ≤ end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsityRange {
    pub start: usize,
    pub end: usize,
    #[serde(default = "one")]
    pub step: usize,
}

fn one() -> usize {
    1
}

impl SparsityRange {
    pub fn values(&self) -> Vec<usize> {
        (self.start..=self.end).step_by(self.step.max(1)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(rename = "M", alias = "m")]
    pub m: usize,
    #[serde(rename = "N", alias = "n")]
    pub n: usize,
    #[serde(rename = "L", alias = "l")]
    pub l: usize,
    pub sparsity_range: SparsityRange,
    pub trials: usize,
    pub beta: f64,
    #[serde(default = "default_schedules")]
    pub schedules: Vec<FeedbackSchedule>,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_success_tol")]
    pub success_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub epsilon: Tolerance,
}

fn default_schedules() -> Vec<FeedbackSchedule> {
    vec![FeedbackSchedule::Linear(6)]
}

fn default_solvers() -> Vec<SolverKind> {
    vec![SolverKind::Osnst]
}

fn default_success_tol() -> f64 {
    1e-4
}

fn default_max_iter() -> usize {
    300
}

impl ExperimentSpec {
    /// Spec with the default solver set, schedule and tolerances.
    pub fn new(m: usize, n: usize, l: usize, sparsity_range: SparsityRange, trials: usize, beta: f64) -> Self {
        Self {
            m,
            n,
            l,
            sparsity_range,
            trials,
            beta,
            schedules: default_schedules(),
            solvers: default_solvers(),
            seed: 0,
            success_tol: default_success_tol(),
            max_iter: default_max_iter(),
            epsilon: Tolerance::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |msg: String| Err(SweepError::Spec(msg));
        if !(self.l >= 1 && self.l < self.m && self.m < self.n) {
            return bad(format!("need 1 <= L < M < N, got L={} M={} N={}", self.l, self.m, self.n));
        }
        let r = self.sparsity_range;
        if r.step == 0 || r.start == 0 || r.start > r.end || r.end >= self.m {
            return bad(format!(
                "sparsity range {}..={} step {} must lie within [1, {}] with positive step",
                r.start,
                r.end,
                r.step,
                self.m - 1
            ));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad(format!("beta={} outside [0, 1)", self.beta));
        }
        if !(self.success_tol > 0.0) {
            return bad("success_tol must be positive".into());
        }
        if self.solvers.is_empty() {
            return bad("no solvers listed".into());
        }
        if self.solvers.contains(&SolverKind::Osnst) && self.schedules.is_empty() {
            return bad("osnst needs at least one schedule".into());
        }
        for sched in &self.schedules {
            sched.validate().map_err(|e| SweepError::Spec(e.to_string()))?;
        }
        self.solver_config(FeedbackSchedule::Linear(1))
            .validate()
            .map_err(|e| SweepError::Spec(e.to_string()))
    }

    fn solver_config(&self, schedule: FeedbackSchedule) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            ..SolverConfig::with_schedule(schedule)
        }
    }

    /// Solver/schedule combinations in report order.
    pub fn arms(&self) -> Vec<Arm> {
        let mut out = Vec::new();
        for &solver in &self.solvers {
            match solver {
                SolverKind::Osnst => out.extend(self.schedules.iter().map(|s| Arm {
                    solver,
                    schedule: Some(s.clone()),
                })),
                SolverKind::Somp => out.push(Arm { solver, schedule: None }),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub solver: SolverKind,
    pub schedule: Option<FeedbackSchedule>,
}

impl Arm {
    pub fn label(&self) -> String {
        self.schedule
            .as_ref()
            .map_or_else(|| SOMP_LABEL.to_string(), ToString::to_string)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Worker threads; `None` uses the ambient rayon pool.
    pub threads: Option<usize>,
    /// Record wall-clock times. Off, every time is written as 0 so output is reproducible
    /// byte for byte.
    pub timing: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            threads: None,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub solver: SolverKind,
    pub schedule: String,
    pub s: usize,
    pub trial: usize,
    pub seed: u64,
    /// `‖X − X̂‖_F / ‖X‖_F`; absent when the solver failed outright.
    pub rel_error: Option<f64>,
    pub success: bool,
    pub iterations: usize,
    pub wall_time: f64,
    pub status: String,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.rel_error.is_none() || self.status == "rank_failure"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub solver: SolverKind,
    pub schedule: String,
    pub s: usize,
    pub success_freq: f64,
    pub mean_time_s: f64,
    pub mean_iters: f64,
    pub failed_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub options: SweepOptions,
    pub rows: Vec<ReportRow>,
    pub trials: Vec<TrialRecord>,
    pub total_wall_time: f64,
}

impl ExperimentReport {
    pub fn rows_for<'a>(&'a self, solver: SolverKind, schedule: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.solver == solver && r.schedule == schedule)
    }

    /// Largest `s` whose success frequency is at least `level`, scanning upward until
    /// the first miss.
    pub fn critical_sparsity(&self, solver: SolverKind, schedule: &str, level: f64) -> Option<usize> {
        let mut best = None;
        for row in self.rows_for(solver, schedule) {
            if row.success_freq >= level {
                best = Some(row.s);
            } else {
                break;
            }
        }
        best
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("instance generation: {0}")]
    Generate(#[from] osnst_core::Error),
}

fn status_name(status: &SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "converged",
        SolveStatus::IterationLimit => "iteration_limit",
        SolveStatus::RankFailure { .. } => "rank_failure",
    }
}

fn run_trial(spec: &ExperimentSpec, arms: &[Arm], s: usize, trial: usize, timing: bool) -> Result<Vec<TrialRecord>, SweepError> {
    let seed = trial_seed(spec.seed, s, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = gen_problem(spec.m, spec.n, spec.l, s, spec.beta, &mut rng)?;
    let truth = problem.truth().expect("generated instances carry the truth");

    Ok(arms
        .iter()
        .map(|arm| {
            let outcome = match &arm.schedule {
                Some(sched) => osnst_solve(&problem, &spec.solver_config(sched.clone())),
                None => somp_solve(&problem, s),
            };
            let (rel_error, iterations, wall_time, status) = match outcome {
                Ok(r) => (
                    Some(relative_error(truth, &r.estimate)),
                    r.iterations,
                    r.wall_time,
                    status_name(&r.status).to_string(),
                ),
                Err(e) => (None, 0, 0.0, format!("error: {e}")),
            };
            let success = rel_error.is_some_and(|e| e <= spec.success_tol);
            debug!("{} {} s={s} trial={trial}: {status} err={rel_error:?}", arm.solver, arm.label());
            TrialRecord {
                solver: arm.solver,
                schedule: arm.label(),
                s,
                trial,
                seed,
                rel_error,
                success,
                iterations,
                wall_time: if timing { wall_time } else { 0.0 },
                status,
            }
        })
        .collect())
}

/// Runs every `(s, trial)` pair, in parallel, and aggregates per solver arm and `s`.
pub fn run_sweep(spec: &ExperimentSpec, opts: SweepOptions) -> Result<ExperimentReport, SweepError> {
    spec.validate()?;
    let arms = spec.arms();
    let grid: Vec<(usize, usize)> = spec
        .sparsity_range
        .values()
        .into_iter()
        .flat_map(|s| (0..spec.trials).map(move |t| (s, t)))
        .collect();
    info!(
        "sweep {}x{} L={}: {} sparsity levels x {} trials x {} arms",
        spec.m,
        spec.n,
        spec.l,
        spec.sparsity_range.values().len(),
        spec.trials,
        arms.len()
    );

    let start = Instant::now();
    let work = || -> Result<Vec<Vec<TrialRecord>>, SweepError> {
        grid.par_iter()
            .map(|&(s, t)| run_trial(spec, &arms, s, t, opts.timing))
            .collect()
    };
    let nested = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(work)?,
        None => work()?,
    };
    let elapsed = start.elapsed().as_secs_f64();

    let mut trials: Vec<TrialRecord> = nested.into_iter().flatten().collect();
    let arm_index = |r: &TrialRecord| {
        arms.iter()
            .position(|a| a.solver == r.solver && a.label() == r.schedule)
            .expect("record from a known arm")
    };
    trials.sort_by_key(|r| (arm_index(r), r.s, r.trial));

    let rows = trials
        .chunk_by(|a, b| a.solver == b.solver && a.schedule == b.schedule && a.s == b.s)
        .map(|group| {
            let n = group.len() as f64;
            let successes = group.iter().filter(|r| r.success).count();
            ReportRow {
                solver: group[0].solver,
                schedule: group[0].schedule.clone(),
                s: group[0].s,
                success_freq: successes as f64 / n,
                mean_time_s: group.iter().map(|r| r.wall_time).sum::<f64>() / n,
                mean_iters: group.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
                failed_trials: group.iter().filter(|r| r.failed()).count(),
            }
        })
        .collect();

    Ok(ExperimentReport {
        spec: spec.clone(),
        options: opts,
        rows,
        trials,
        total_wall_time: if opts.timing { elapsed } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(20, 50, 3, SparsityRange { start: 2, end: 6, step: 2 }, 4, 0.5);
        spec.solvers = vec![SolverKind::Osnst, SolverKind::Somp];
        spec.schedules = vec![FeedbackSchedule::Linear(1), FeedbackSchedule::Quadratic];
        spec.seed = 11;
        spec
    }

    #[test]
    fn spec_json_defaults_and_names() {
        let spec: ExperimentSpec = serde_json::from_str(
            r#"{"M": 60, "N": 200, "L": 5, "sparsity_range": {"start": 5, "end": 15}, "trials": 3, "beta": 0.5}"#,
        )
        .unwrap();
        assert_eq!(spec.success_tol, 1e-4);
        assert_eq!(spec.max_iter, 300);
        assert_eq!(spec.schedules, vec![FeedbackSchedule::Linear(6)]);
        assert_eq!(spec.solvers, vec![SolverKind::Osnst]);
        assert_eq!(spec.sparsity_range.values().len(), 11);
        let back: ExperimentSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<ExperimentSpec>(r#"{"M": 1, "extra": 0}"#).is_err());
    }

    #[test]
    fn validation() {
        let ok = small_spec();
        assert!(ok.validate().is_ok());
        let mut s = ok.clone();
        s.trials = 0;
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.sparsity_range.end = 20;
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.sparsity_range.start = 0;
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.beta = 1.0;
        assert!(s.validate().is_err());
        let mut s = ok;
        s.schedules.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn rows_cover_every_arm_and_level() {
        let spec = small_spec();
        let r = run_sweep(&spec, SweepOptions { threads: Some(2), timing: true }).unwrap();
        assert_eq!(r.rows.len(), 3 * 3);
        assert_eq!(r.trials.len(), 3 * 3 * 4);
        let labels: Vec<&str> = r.rows.iter().step_by(3).map(|r| r.schedule.as_str()).collect();
        assert_eq!(labels, ["linear(1)", "quadratic", SOMP_LABEL]);
        for row in &r.rows {
            let group: Vec<_> = r
                .trials
                .iter()
                .filter(|t| t.solver == row.solver && t.schedule == row.schedule && t.s == row.s)
                .collect();
            assert_eq!(group.len(), 4);
            let ok = group.iter().filter(|t| t.rel_error.unwrap() <= spec.success_tol).count();
            assert_eq!(row.success_freq, ok as f64 / 4.0);
        }
    }

    #[test]
    fn solvers_share_instances() {
        let r = run_sweep(&small_spec(), SweepOptions::default()).unwrap();
        for t in &r.trials {
            assert_eq!(t.seed, trial_seed(11, t.s, t.trial));
        }
    }

    #[test]
    fn easy_desk_point_is_always_recovered() {
        let mut spec = ExperimentSpec::new(60, 200, 5, SparsityRange { start: 5, end: 5, step: 1 }, 20, 0.5);
        spec.seed = 2024;
        let r = run_sweep(&spec, SweepOptions::default()).unwrap();
        assert_eq!(r.rows[0].success_freq, 1.0);
        assert!(r.trials.iter().all(|t| t.rel_error.unwrap() <= 1e-4));
    }

    #[test]
    fn critical_sparsity_stops_at_first_miss() {
        let row = |s, f| ReportRow {
            solver: SolverKind::Osnst,
            schedule: "x".into(),
            s,
            success_freq: f,
            mean_time_s: 0.0,
            mean_iters: 0.0,
            failed_trials: 0,
        };
        let report = ExperimentReport {
            spec: small_spec(),
            options: SweepOptions::default(),
            rows: vec![row(1, 1.0), row(2, 0.6), row(3, 0.2), row(4, 0.7)],
            trials: vec![],
            total_wall_time: 0.0,
        };
        assert_eq!(report.critical_sparsity(SolverKind::Osnst, "x", 0.5), Some(2));
        assert_eq!(report.critical_sparsity(SolverKind::Somp, "x", 0.5), None);
    }
}
