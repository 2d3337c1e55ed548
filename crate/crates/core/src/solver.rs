//! OSNST+HT+f-FB: null-space tuning, orthogonal-subspace row selection and
//! least-squares feedback, iterated until the residual falls below `ε`.
//!
//! One iteration, starting from `W⁰ = 0`:
//!
//! 1. `Xᵏ = Wᵏ⁻¹ + Φᵀ(ΦΦᵀ)⁻¹(Y − ΦWᵏ⁻¹)` — project onto `{X : ΦX = Y}`.
//! 2. `Qᵏ = orth(Xᵏ)`; keep the `f(k)` rows of largest `‖Qᵏ_i·‖₂` as `T_k`.
//! 3. `Wᵏ` solves `min ‖Φ_{T_k} Z − Y‖_F` on `T_k` and is zero elsewhere.
//!
//! Step 3 equals `X_T + (Φ_TᵀΦ_T)⁻¹Φ_TᵀΦ_{Tᶜ}X_{Tᶜ}` whenever `ΦXᵏ = Y`, which the
//! projection guarantees. A simultaneous OMP baseline is included for comparison.

use std::cmp::Ordering;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{
    ensure_finite, orth_basis, restricted_lsq, row_norms, scatter_rows, Mat, RowPseudoInverse,
    ShapeStr,
};
use crate::model::{ProblemInstance, RecoveryResult, SolveStatus, SolverConfig, Tolerance};

/// Rows chosen by [`select_support`], with the scores used to rank them.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Selected row indices, ascending.
    pub support: Vec<usize>,
    /// `‖Q_i·‖₂` for every row.
    pub scores: Vec<f64>,
    /// Numerical rank of the iterate (columns of `Q`).
    pub rank: usize,
}

/// `Wᵏ⁻¹ + Φᵀ(ΦΦᵀ)⁻¹(Y − ΦWᵏ⁻¹)`: the Euclidean projection of `w_prev` onto the
/// feasible set.
pub fn nst_project(p: &ProblemInstance, pinv: &RowPseudoInverse, w_prev: &Mat) -> Result<Mat> {
    if w_prev.shape() != (p.n(), p.l()) {
        return Err(Error::dims(
            "nst_project",
            format!("{}x{}", p.n(), p.l()),
            w_prev.shape_str(),
        ));
    }
    let residual = p.y() - p.phi() * w_prev;
    Ok(w_prev + pinv.apply(&residual)?)
}

/// Picks the `count` rows of largest orthonormal-basis row norm; ties go to the
/// lower index.
pub fn select_support(x: &Mat, count: usize, rank_tol: f64) -> Result<Selection> {
    if count == 0 || count > x.nrows() {
        return Err(Error::Invalid(format!(
            "cannot select {count} of {} rows",
            x.nrows()
        )));
    }
    let q = orth_basis(x, rank_tol)?;
    let scores = row_norms(&q);
    let support = top_rows(&scores, count);
    Ok(Selection {
        support,
        scores,
        rank: q.ncols(),
    })
}

/// Indices of the `count` largest scores (lowest index first among equals), ascending.
pub(crate) fn top_rows(scores: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(count);
    order.sort_unstable();
    order
}

/// Least-squares feedback on `support`: `W_T = argmin ‖Φ_T Z − Y‖_F`, `W_{Tᶜ} = 0`.
pub fn feedback_step(p: &ProblemInstance, support: &[usize]) -> Result<Mat> {
    let block = restricted_lsq(p.phi(), support, p.y())?;
    Ok(scatter_rows(p.n(), support, &block))
}

/// Everything produced by one pass of the loop body.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub k: usize,
    /// The feasible NST iterate `Xᵏ`.
    pub x: Mat,
    pub selection: Selection,
    /// `Wᵏ` after feedback.
    pub w: Mat,
    /// `‖Y − ΦWᵏ‖_F`.
    pub residual: f64,
    /// `f(k)` was cut to the support cap.
    pub clamped: bool,
}

/// Step-by-step driver of the iteration. Yields one [`IterationState`] per loop
/// pass and stops when the guard fails or an error occurs.
pub struct Osnst<'a> {
    problem: &'a ProblemInstance,
    config: &'a SolverConfig,
    pinv: RowPseudoInverse,
    w: Mat,
    residual: f64,
    threshold: f64,
    k: usize,
    finished: bool,
}

impl<'a> Osnst<'a> {
    pub fn new(problem: &'a ProblemInstance, config: &'a SolverConfig) -> Result<Self> {
        config.validate()?;
        let pinv = RowPseudoInverse::new(problem.phi())?;
        let y_norm = problem.y().norm();
        Ok(Self {
            problem,
            config,
            pinv,
            w: Mat::zeros(problem.n(), problem.l()),
            residual: y_norm,
            threshold: config.epsilon.threshold(y_norm),
            k: 1,
            finished: false,
        })
    }

    /// Current estimate `Wᵏ⁻¹`.
    pub fn estimate(&self) -> &Mat {
        &self.w
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Largest support the feedback step may use: `min(M − 1, N)`.
    pub fn cap(&self) -> usize {
        self.problem.support_cap().min(self.problem.n())
    }

    fn guard(&self) -> bool {
        self.residual > self.threshold && self.k < self.config.max_iter
    }

    fn step(&mut self) -> Result<IterationState> {
        let p = self.problem;
        let x = nst_project(p, &self.pinv, &self.w)?;
        ensure_finite(&x, "nst_project")?;

        let wanted = self.config.schedule.value(self.k);
        let count = wanted.min(self.cap());
        let selection = select_support(&x, count, self.config.rank_tol)?;
        let w = feedback_step(p, &selection.support)?;
        ensure_finite(&w, "feedback_step")?;

        let residual = (p.y() - p.phi() * &w).norm();
        self.w.clone_from(&w);
        self.residual = residual;
        let state = IterationState {
            k: self.k,
            x,
            selection,
            w,
            residual,
            clamped: wanted > count,
        };
        self.k += 1;
        Ok(state)
    }
}

impl Iterator for Osnst<'_> {
    type Item = Result<IterationState>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished || !self.guard() {
            self.finished = true;
            return None;
        }
        let out = self.step();
        if out.is_err() {
            self.finished = true;
        }
        Some(out)
    }
}

/// Runs the iteration to completion.
///
/// A rank-deficient feedback block ends the run with [`SolveStatus::RankFailure`];
/// non-finite iterates abort with [`Error::NonFinite`].
pub fn osnst_solve(p: &ProblemInstance, cfg: &SolverConfig) -> Result<RecoveryResult> {
    let start = Instant::now();
    let mut run = Osnst::new(p, cfg)?;
    let mut support_history = Vec::new();
    let mut residual_history = Vec::new();
    let mut support = Vec::new();
    let mut clamped = false;
    let mut rank_drops = 0;
    let mut failure = None;

    while let Some(step) = run.next() {
        match step {
            Ok(state) => {
                residual_history.push(state.residual);
                clamped |= state.clamped;
                if state.selection.rank < p.l() {
                    rank_drops += 1;
                    log::debug!(
                        "iteration {}: iterate rank {} below L = {}",
                        state.k,
                        state.selection.rank,
                        p.l()
                    );
                }
                if cfg.record_supports {
                    support_history.push(state.selection.support.clone());
                }
                support = state.selection.support;
            }
            Err(Error::RankDeficient { support, dependent }) => {
                failure = Some(SolveStatus::RankFailure { support, dependent });
            }
            Err(e) => return Err(e),
        }
    }
    if clamped {
        log::debug!("schedule clamped to support cap {}", run.cap());
    }

    let converged = run.residual() <= run.threshold();
    let status = match failure {
        Some(f) => f,
        None if converged => SolveStatus::Converged,
        None => SolveStatus::IterationLimit,
    };
    Ok(RecoveryResult {
        estimate: run.w,
        support,
        support_history,
        residual_history,
        iterations: run.k - 1,
        converged,
        status,
        wall_time: start.elapsed().as_secs_f64(),
        clamped,
        rank_drops,
    })
}

/// Simultaneous orthogonal matching pursuit with known sparsity `s`.
///
/// Each round adds the column whose correlation with the residual matrix has the
/// largest `ℓ₂` norm (lowest index among equals), then re-solves least squares on
/// the chosen columns.
pub fn somp_solve(p: &ProblemInstance, s: usize) -> Result<RecoveryResult> {
    if s == 0 || s > p.support_cap() {
        return Err(Error::Invalid(format!(
            "SOMP sparsity must lie in 1..={}, got {s}",
            p.support_cap()
        )));
    }
    let start = Instant::now();
    let phi = p.phi();
    let y = p.y();
    let threshold = Tolerance::default().threshold(y.norm());

    let mut chosen: Vec<usize> = Vec::with_capacity(s);
    let mut residual = y.clone();
    let mut w = Mat::zeros(p.n(), p.l());
    let mut support_history = Vec::with_capacity(s);
    let mut residual_history = Vec::with_capacity(s);
    let mut failure = None;

    for _ in 0..s {
        let mut scores = row_norms(&phi.tr_mul(&residual));
        for &j in &chosen {
            scores[j] = f64::NEG_INFINITY;
        }
        let next = top_rows(&scores, 1)[0];
        chosen.push(next);
        let mut support = chosen.clone();
        support.sort_unstable();

        let block = match restricted_lsq(phi, &support, y) {
            Ok(b) => b,
            Err(Error::RankDeficient { support, dependent }) => {
                failure = Some(SolveStatus::RankFailure { support, dependent });
                break;
            }
            Err(e) => return Err(e),
        };
        ensure_finite(&block, "somp_solve")?;
        residual = y - phi.select_columns(&support) * &block;
        w = scatter_rows(p.n(), &support, &block);
        residual_history.push(residual.norm());
        support_history.push(support);
    }

    let final_residual = residual.norm();
    let converged = final_residual <= threshold;
    let status = match failure {
        Some(f) => f,
        None if converged => SolveStatus::Converged,
        None => SolveStatus::IterationLimit,
    };
    Ok(RecoveryResult {
        estimate: w,
        support: support_history.last().cloned().unwrap_or_default(),
        iterations: residual_history.len(),
        support_history,
        residual_history,
        converged,
        status,
        wall_time: start.elapsed().as_secs_f64(),
        clamped: false,
        rank_drops: 0,
    })
}
