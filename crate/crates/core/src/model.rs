//! Problem instances, feedback schedules, solver configuration and results.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, Mat, ShapeStr, DEFAULT_RANK_TOL};

/// An MMV instance `Y = ΦX + E`.
///
/// `truth`, `true_support` and `noise` are known only for synthetic problems.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    phi: Mat,
    y: Mat,
    truth: Option<Mat>,
    true_support: Option<Vec<usize>>,
    noise: Option<Mat>,
}

impl ProblemInstance {
    /// Instance with observations only. Requires `L < M < N`.
    pub fn new(phi: Mat, y: Mat) -> Result<Self> {
        check_shapes(&phi, &y)?;
        ensure_finite(&phi, "ProblemInstance")?;
        ensure_finite(&y, "ProblemInstance")?;
        Ok(Self {
            phi,
            y,
            truth: None,
            true_support: None,
            noise: None,
        })
    }

    /// Synthesizes `Y = ΦX (+ E)` from a ground-truth signal.
    pub fn from_truth(phi: Mat, truth: Mat, noise: Option<Mat>) -> Result<Self> {
        if truth.nrows() != phi.ncols() {
            return Err(Error::dims(
                "ProblemInstance::from_truth",
                format!("{} rows in X", phi.ncols()),
                truth.shape_str(),
            ));
        }
        let mut y = &phi * &truth;
        if let Some(e) = &noise {
            if e.shape() != y.shape() {
                return Err(Error::dims("ProblemInstance::from_truth", y.shape_str(), e.shape_str()));
            }
            y += e;
        }
        Self::from_parts(phi, y, Some(truth), noise, None)
    }

    /// Assembles an instance from stored parts, checking `Y = ΦX + E` to 1e-12 relative
    /// when the truth is present. The support defaults to the nonzero rows of `truth`.
    pub fn from_parts(
        phi: Mat,
        y: Mat,
        truth: Option<Mat>,
        noise: Option<Mat>,
        true_support: Option<Vec<usize>>,
    ) -> Result<Self> {
        let mut inst = Self::new(phi, y)?;
        if let Some(e) = &noise {
            if e.shape() != inst.y.shape() {
                return Err(Error::dims("ProblemInstance", inst.y.shape_str(), e.shape_str()));
            }
            ensure_finite(e, "ProblemInstance")?;
        }
        if let Some(x) = &truth {
            if x.shape() != (inst.n(), inst.l()) {
                return Err(Error::dims(
                    "ProblemInstance",
                    format!("{}x{}", inst.n(), inst.l()),
                    x.shape_str(),
                ));
            }
            ensure_finite(x, "ProblemInstance")?;
            let mut model = &inst.phi * x;
            if let Some(e) = &noise {
                model += e;
            }
            let gap = (&model - &inst.y).norm();
            if gap > 1e-12 * inst.y.norm().max(model.norm()) {
                return Err(Error::Invalid(format!(
                    "observations disagree with phi * truth (+ noise) by {gap:e}"
                )));
            }
        }
        let support = match (true_support, &truth) {
            (Some(mut s), _) => {
                s.sort_unstable();
                s.dedup();
                if s.iter().any(|&i| i >= inst.n()) {
                    return Err(Error::Invalid("support index out of range".into()));
                }
                Some(s)
            }
            (None, Some(x)) => Some(row_support(x)),
            (None, None) => None,
        };
        inst.truth = truth;
        inst.noise = noise;
        inst.true_support = support;
        Ok(inst)
    }

    pub fn phi(&self) -> &Mat {
        &self.phi
    }

    pub fn y(&self) -> &Mat {
        &self.y
    }

    pub fn truth(&self) -> Option<&Mat> {
        self.truth.as_ref()
    }

    pub fn true_support(&self) -> Option<&[usize]> {
        self.true_support.as_deref()
    }

    pub fn noise(&self) -> Option<&Mat> {
        self.noise.as_ref()
    }

    /// Number of measurements.
    pub fn m(&self) -> usize {
        self.phi.nrows()
    }

    /// Signal dimension.
    pub fn n(&self) -> usize {
        self.phi.ncols()
    }

    /// Number of snapshots.
    pub fn l(&self) -> usize {
        self.y.ncols()
    }

    /// Largest admissible support size for the feedback least squares, `M − 1`.
    pub fn support_cap(&self) -> usize {
        self.m() - 1
    }
}

fn check_shapes(phi: &Mat, y: &Mat) -> Result<()> {
    let (m, n) = phi.shape();
    if y.nrows() != m {
        return Err(Error::dims("ProblemInstance", format!("{m} rows in Y"), y.shape_str()));
    }
    if m == 0 || y.ncols() == 0 {
        return Err(Error::Invalid("empty sensing matrix or observations".into()));
    }
    if m >= n {
        return Err(Error::Invalid(format!("need M < N, got M={m}, N={n}")));
    }
    if y.ncols() >= m {
        return Err(Error::Invalid(format!(
            "need L < M, got L={}, M={m}",
            y.ncols()
        )));
    }
    Ok(())
}

/// Indices of the nonzero rows of `x`.
pub fn row_support(x: &Mat) -> Vec<usize> {
    x.row_iter()
        .enumerate()
        .filter(|(_, r)| r.iter().any(|&v| v != 0.0))
        .map(|(i, _)| i)
        .collect()
}

/// `‖Y − ΦW‖_F`.
pub fn residual_norm(p: &ProblemInstance, w: &Mat) -> Result<f64> {
    if w.shape() != (p.n(), p.l()) {
        return Err(Error::dims(
            "residual_norm",
            format!("{}x{}", p.n(), p.l()),
            w.shape_str(),
        ));
    }
    Ok((p.y() - p.phi() * w).norm())
}

/// `‖X − X̂‖_F / ‖X‖_F`; the absolute error when `X = 0`.
pub fn relative_error(truth: &Mat, estimate: &Mat) -> f64 {
    let err = (truth - estimate).norm();
    let scale = truth.norm();
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

/// Number of rows kept at iteration `k`: a non-decreasing `f(k)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSchedule {
    /// `f(k) = c·k`.
    Linear(usize),
    /// `f(k) = k²`.
    Quadratic,
    /// Explicit values `f(1), f(2), …`; holds the last entry afterwards.
    Table(Vec<usize>),
}

impl FeedbackSchedule {
    pub fn table(values: Vec<usize>) -> Result<Self> {
        let s = FeedbackSchedule::Table(values);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FeedbackSchedule::Linear(0) => Err(Error::Invalid("linear slope must be positive".into())),
            FeedbackSchedule::Table(v) if v.is_empty() => {
                Err(Error::Invalid("schedule table is empty".into()))
            }
            FeedbackSchedule::Table(v) if v[0] == 0 => {
                Err(Error::Invalid("schedule table entries must be positive".into()))
            }
            FeedbackSchedule::Table(v) if v.windows(2).any(|w| w[1] < w[0]) => {
                Err(Error::Invalid("schedule table must be non-decreasing".into()))
            }
            _ => Ok(()),
        }
    }

    /// Unclamped `f(k)`, with `f(0) = 0` for the empty support of `W⁰`.
    pub fn value(&self, k: usize) -> usize {
        if k == 0 {
            return 0;
        }
        match self {
            FeedbackSchedule::Linear(c) => c.saturating_mul(k),
            FeedbackSchedule::Quadratic => k.saturating_mul(k),
            FeedbackSchedule::Table(v) => v[(k - 1).min(v.len() - 1)],
        }
    }

    /// `min(f(k), cap)`.
    pub fn eval(&self, k: usize, cap: usize) -> usize {
        self.value(k).min(cap)
    }
}

/// `min(f(k), cap)` for `k ≥ 1`.
pub fn eval_schedule(s: &FeedbackSchedule, k: usize, cap: usize) -> usize {
    s.eval(k, cap)
}

impl fmt::Display for FeedbackSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedbackSchedule::Linear(c) => write!(f, "linear({c})"),
            FeedbackSchedule::Quadratic => f.write_str("quadratic"),
            FeedbackSchedule::Table(v) => {
                f.write_str("table(")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl FromStr for FeedbackSchedule {
    type Err = Error;

    /// Accepts `linear(c)`, `cx` / `x`, `quadratic` / `x^2`, and `table(a;b;…)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Invalid(format!("unrecognized schedule '{s}'"));
        let parse_int = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        let sched = if s == "quadratic" || s == "x^2" || s == "x2" {
            FeedbackSchedule::Quadratic
        } else if s == "x" {
            FeedbackSchedule::Linear(1)
        } else if let Some(inner) = s.strip_prefix("linear(").and_then(|r| r.strip_suffix(')')) {
            FeedbackSchedule::Linear(parse_int(inner)?)
        } else if let Some(inner) = s.strip_prefix("table(").and_then(|r| r.strip_suffix(')')) {
            FeedbackSchedule::Table(inner.split(';').map(parse_int).collect::<Result<_>>()?)
        } else if let Some(c) = s.strip_suffix('x') {
            FeedbackSchedule::Linear(parse_int(c)?)
        } else {
            return Err(bad());
        };
        sched.validate()?;
        Ok(sched)
    }
}

/// Residual threshold of the loop guard `‖Y − ΦW‖_F > ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    /// `ε = r · ‖Y‖_F`.
    Relative(f64),
    Absolute(f64),
}

impl Tolerance {
    pub fn threshold(&self, y_norm: f64) -> f64 {
        match *self {
            Tolerance::Relative(r) => r * y_norm,
            Tolerance::Absolute(a) => a,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::Relative(1e-12)
    }
}

/// Ordering of rows with equal selection scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub epsilon: Tolerance,
    /// The loop runs while `k < max_iter`, so at most `max_iter − 1` iterations.
    pub max_iter: usize,
    pub schedule: FeedbackSchedule,
    pub rank_tol: f64,
    pub tie_break: TieBreak,
    /// Keep every `T_k` in the result; otherwise only the final support.
    pub record_supports: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: Tolerance::default(),
            max_iter: 300,
            schedule: FeedbackSchedule::Linear(6),
            rank_tol: DEFAULT_RANK_TOL,
            tie_break: TieBreak::LowestIndex,
            record_supports: false,
        }
    }
}

impl SolverConfig {
    pub fn with_schedule(schedule: FeedbackSchedule) -> Self {
        Self {
            schedule,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eps = match self.epsilon {
            Tolerance::Relative(v) | Tolerance::Absolute(v) => v,
        };
        if !(eps >= 0.0) {
            return Err(Error::Invalid("epsilon must be non-negative".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Invalid("max_iter must be at least 1".into()));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(Error::Invalid("rank_tol must lie in (0, 1)".into()));
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    /// The feedback least squares hit a rank-deficient column block.
    RankFailure { support: Vec<usize>, dependent: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryResult {
    #[serde(serialize_with = "serialize_row_sparse")]
    pub estimate: Mat,
    /// Final feedback support `T_k`; may include rows whose coefficients vanish numerically.
    pub support: Vec<usize>,
    /// Every `T_k`, when requested.
    pub support_history: Vec<Vec<usize>>,
    /// `‖Y − ΦW^k‖_F` after each iteration.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub status: SolveStatus,
    pub wall_time: f64,
    /// `f(k)` exceeded the support cap at some iteration.
    pub clamped: bool,
    /// Iterations at which the NST iterate had numerical rank below `L`.
    pub rank_drops: usize,
}

impl RecoveryResult {
    pub fn final_residual(&self) -> Option<f64> {
        self.residual_history.last().copied()
    }

    pub fn failed(&self) -> bool {
        matches!(self.status, SolveStatus::RankFailure { .. })
    }
}

/// Serializes a matrix by listing only its nonzero rows.
fn serialize_row_sparse<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Row {
        index: usize,
        values: Vec<f64>,
    }
    #[derive(Serialize)]
    struct RowSparse {
        rows: usize,
        cols: usize,
        nonzero_rows: Vec<Row>,
    }
    let nonzero_rows = row_support(m)
        .into_iter()
        .map(|i| Row {
            index: i,
            values: m.row(i).iter().copied().collect(),
        })
        .collect();
    RowSparse {
        rows: m.nrows(),
        cols: m.ncols(),
        nonzero_rows,
    }
    .serialize(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        assert_eq!(eval_schedule(&FeedbackSchedule::Linear(6), 3, 299), 18);
        assert_eq!(eval_schedule(&FeedbackSchedule::Quadratic, 4, 299), 16);
        assert_eq!(eval_schedule(&FeedbackSchedule::Linear(12), 30, 299), 299);
        let t = FeedbackSchedule::table(vec![1, 2, 2, 5]).unwrap();
        assert_eq!(t.eval(4, 100), 5);
        assert_eq!(t.eval(40, 100), 5);
        assert_eq!(t.value(0), 0);
    }

    #[test]
    fn schedule_validation() {
        assert!(FeedbackSchedule::table(vec![]).is_err());
        assert!(FeedbackSchedule::table(vec![0, 1]).is_err());
        assert!(FeedbackSchedule::table(vec![3, 2]).is_err());
        assert!(FeedbackSchedule::Linear(0).validate().is_err());
    }

    #[test]
    fn schedule_text_round_trip() {
        for s in [
            FeedbackSchedule::Linear(6),
            FeedbackSchedule::Quadratic,
            FeedbackSchedule::Table(vec![1, 3, 3]),
        ] {
            assert_eq!(s.to_string().parse::<FeedbackSchedule>().unwrap(), s);
        }
        assert_eq!("6x".parse::<FeedbackSchedule>().unwrap(), FeedbackSchedule::Linear(6));
        assert_eq!("x".parse::<FeedbackSchedule>().unwrap(), FeedbackSchedule::Linear(1));
        assert_eq!("x^2".parse::<FeedbackSchedule>().unwrap(), FeedbackSchedule::Quadratic);
        assert!("cubic".parse::<FeedbackSchedule>().is_err());
    }

    #[test]
    fn schedule_json_shape() {
        let v = serde_json::to_string(&vec![
            FeedbackSchedule::Linear(6),
            FeedbackSchedule::Quadratic,
            FeedbackSchedule::Table(vec![1, 2]),
        ])
        .unwrap();
        assert_eq!(v, r#"[{"linear":6},"quadratic",{"table":[1,2]}]"#);
    }

    fn small() -> (Mat, Mat) {
        let phi = Mat::from_fn(3, 5, |i, j| ((i * 5 + j) as f64).sin());
        let mut x = Mat::zeros(5, 2);
        x[(1, 0)] = 1.0;
        x[(1, 1)] = -2.0;
        x[(4, 0)] = 0.5;
        (phi, x)
    }

    #[test]
    fn instance_shape_rules() {
        let (phi, x) = small();
        assert!(ProblemInstance::new(phi.clone(), Mat::zeros(3, 3)).is_err()); // L = M
        assert!(ProblemInstance::new(phi.transpose(), Mat::zeros(5, 1)).is_err()); // M > N
        assert!(ProblemInstance::new(phi.clone(), Mat::zeros(2, 1)).is_err());
        let p = ProblemInstance::from_truth(phi, x, None).unwrap();
        assert_eq!(p.true_support(), Some(&[1, 4][..]));
        assert_eq!((p.m(), p.n(), p.l()), (3, 5, 2));
        assert_eq!(p.support_cap(), 2);
    }

    #[test]
    fn instance_rejects_inconsistent_truth() {
        let (phi, x) = small();
        let y = &phi * &x * 1.001;
        assert!(ProblemInstance::from_parts(phi, y, Some(x), None, None).is_err());
    }

    #[test]
    fn instance_keeps_noise_as_stored() {
        let (phi, x) = small();
        let e = Mat::from_element(3, 2, 1e-3);
        let p = ProblemInstance::from_truth(phi.clone(), x.clone(), Some(e.clone())).unwrap();
        assert_eq!(p.y(), &(&phi * &x + &e));
        assert_eq!(p.noise(), Some(&e));
    }

    #[test]
    fn residual_norm_cases() {
        let (phi, x) = small();
        let p = ProblemInstance::from_truth(phi, x.clone(), None).unwrap();
        assert!(residual_norm(&p, &x).unwrap() < 1e-12);
        assert_eq!(residual_norm(&p, &Mat::zeros(5, 2)).unwrap(), p.y().norm());
        assert!(residual_norm(&p, &Mat::zeros(4, 2)).is_err());
        // brute-force sum of squares
        let w = Mat::from_fn(5, 2, |i, j| (i as f64) - 0.3 * j as f64);
        let r = p.y() - p.phi() * &w;
        let brute: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((residual_norm(&p, &w).unwrap() - brute).abs() < 1e-12 * brute);
    }

    #[test]
    fn tolerance_threshold() {
        assert_eq!(Tolerance::Relative(1e-3).threshold(10.0), 1e-2);
        assert_eq!(Tolerance::Absolute(0.5).threshold(10.0), 0.5);
        assert!(SolverConfig {
            max_iter: 0,
            ..SolverConfig::default()
        }
        .validate()
        .is_err());
    }
}
