//! Brute-force restricted isometry constants and the contraction certificate.
//!
//! All quantities are computed by enumerating column subsets, so they are only
//! practical for small matrices. Enumeration stops at [`SUBSET_LIMIT`] subsets;
//! past that, [`rip_report`] can fall back to sampling, which yields lower bounds.
//!
//! For a symmetric Gram block `G_S` the isometry defect is
//! `‖I − G_S‖₂ = max(|1 − λ_min|, |λ_max − 1|)`, taken from a symmetric
//! eigendecomposition. By eigenvalue interlacing the maximum over `|S| ≤ s` is
//! attained at `|S| = s`, so only subsets of exactly that size are visited.

use itertools::Itertools;
use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, singular_values, Mat, RowPseudoInverse};
use crate::model::{row_support, FeedbackSchedule};

pub const SUBSET_LIMIT: u128 = 1_000_000;
pub const SAMPLED_SUBSETS: usize = 10_000;

/// Tolerance for the two evaluations of the preconditioned constant.
const PRIC_AGREEMENT: f64 = 1e-9;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| {
        acc.saturating_mul((n - i) as u128) / (i as u128 + 1)
    })
}

/// How column subsets are visited.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Enumeration {
    /// All subsets; refuse beyond [`SUBSET_LIMIT`].
    Exhaustive,
    /// All subsets when within the limit, otherwise `samples` random ones.
    Auto { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubsetMax {
    pub value: f64,
    pub subsets_examined: u128,
    /// `true` when obtained by sampling; `value` is then only a lower bound.
    pub lower_bound: bool,
}

/// `max_{|S| = s} ‖I − G_S‖₂` over principal blocks of the Gram matrix `gram`.
fn max_defect(gram: &Mat, s: usize, mode: Enumeration) -> Result<SubsetMax> {
    let n = gram.nrows();
    if s == 0 {
        return Ok(SubsetMax {
            value: 0.0,
            subsets_examined: 0,
            lower_bound: false,
        });
    }
    if s > n {
        return Err(Error::Invalid(format!("sparsity {s} exceeds {n} columns")));
    }
    let defect = |subset: &[usize]| isometry_defect(&gram.select_rows(subset).select_columns(subset));
    let total = binomial(n, s);
    if total <= SUBSET_LIMIT {
        let value = (0..n)
            .combinations(s)
            .par_bridge()
            .map(|subset| defect(&subset))
            .reduce(|| 0.0, f64::max);
        return Ok(SubsetMax {
            value,
            subsets_examined: total,
            lower_bound: false,
        });
    }
    match mode {
        Enumeration::Exhaustive => Err(Error::SubsetLimit {
            subsets: total,
            limit: SUBSET_LIMIT,
        }),
        Enumeration::Auto { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let subsets: Vec<Vec<usize>> = (0..samples)
                .map(|_| {
                    let mut v = rand::seq::index::sample(&mut rng, n, s).into_vec();
                    v.sort_unstable();
                    v
                })
                .collect();
            let value = subsets
                .par_iter()
                .map(|subset| defect(subset))
                .reduce(|| 0.0, f64::max);
            Ok(SubsetMax {
                value,
                subsets_examined: samples as u128,
                lower_bound: true,
            })
        }
    }
}

/// `‖I − G‖₂` for a symmetric `G`.
pub fn isometry_defect(gram: &Mat) -> f64 {
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let lo = eig.min();
    let hi = eig.max();
    (1.0 - lo).abs().max((hi - 1.0).abs())
}

/// Restricted isometry constant `δ_s` by exhaustive enumeration.
pub fn ric_bruteforce(phi: &Mat, s: usize) -> Result<f64> {
    Ok(max_defect(&phi.tr_mul(phi), s, Enumeration::Exhaustive)?.value)
}

/// `(ΦΦᵀ)^{-1/2} Φ`, the row-orthonormalized sensing matrix.
pub fn preconditioned(phi: &Mat) -> Result<Mat> {
    let eig = SymmetricEigen::new(phi * phi.transpose());
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::RankDeficient {
            support: (0..phi.nrows()).collect(),
            dependent: Vec::new(),
        });
    }
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let v = &eig.eigenvectors;
    Ok(v * Mat::from_diagonal(&inv_sqrt) * v.transpose() * phi)
}

/// Preconditioned constant `γ_s = max_{|S|≤s} ‖I − Φ_Sᵀ(ΦΦᵀ)⁻¹Φ_S‖₂`.
///
/// Also evaluates `δ_s((ΦΦᵀ)^{-1/2}Φ)` and fails with [`Error::Inconsistent`] if the
/// two disagree.
pub fn pric_bruteforce(phi: &Mat, s: usize) -> Result<f64> {
    pric_with(phi, s, Enumeration::Exhaustive).map(|m| m.value)
}

fn pric_with(phi: &Mat, s: usize, mode: Enumeration) -> Result<SubsetMax> {
    let projector = RowPseudoInverse::new(phi)?.row_space_projector();
    let direct = max_defect(&projector, s, mode)?;
    let a = preconditioned(phi)?;
    let via_sqrt = max_defect(&a.tr_mul(&a), s, mode)?;
    if (direct.value - via_sqrt.value).abs() > PRIC_AGREEMENT {
        return Err(Error::Inconsistent {
            what: "preconditioned RIC",
            a: direct.value,
            b: via_sqrt.value,
        });
    }
    Ok(direct)
}

/// `θ_t = δ_t((ΦΦᵀ)⁻¹Φ)`.
pub fn theta_bruteforce(phi: &Mat, t: usize) -> Result<f64> {
    theta_with(phi, t, Enumeration::Exhaustive).map(|m| m.value)
}

fn theta_with(phi: &Mat, t: usize, mode: Enumeration) -> Result<SubsetMax> {
    let b = RowPseudoInverse::new(phi)?.solve_gram(phi)?;
    max_defect(&b.tr_mul(&b), t, mode)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RipReport {
    pub s: usize,
    pub delta_s: f64,
    pub gamma_s: f64,
    pub theta_s: f64,
    pub subsets_examined: u128,
    /// Values came from sampled subsets and are lower bounds.
    pub lower_bound: bool,
}

pub fn rip_report(phi: &Mat, s: usize, mode: Enumeration) -> Result<RipReport> {
    let delta = max_defect(&phi.tr_mul(phi), s, mode)?;
    let gamma = pric_with(phi, s, mode)?;
    let theta = theta_with(phi, s, mode)?;
    Ok(RipReport {
        s,
        delta_s: delta.value,
        gamma_s: gamma.value,
        theta_s: theta.value,
        subsets_examined: delta.subsets_examined,
        lower_bound: delta.lower_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Uniqueness {
    pub spark: usize,
    pub rank_y: usize,
    /// `(spark + rank(Y) − 1) / 2`; row supports strictly smaller are unique.
    pub bound: f64,
}

/// Smallest number of linearly dependent columns of `phi`.
///
/// When no dependent subset of size at most `M` exists the result is `M + 1`.
pub fn spark(phi: &Mat, rank_tol: f64) -> Result<usize> {
    let (m, n) = phi.shape();
    let top = m.min(n);
    let total: u128 = (1..=top).map(|k| binomial(n, k)).sum();
    if total > SUBSET_LIMIT {
        return Err(Error::SubsetLimit {
            subsets: total,
            limit: SUBSET_LIMIT,
        });
    }
    for k in 1..=top {
        let dependent = (0..n).combinations(k).par_bridge().any(|subset| {
            let sigma = singular_values(&phi.select_columns(&subset));
            let hi = sigma.max();
            hi == 0.0 || sigma.min() <= rank_tol * hi
        });
        if dependent {
            return Ok(k);
        }
    }
    Ok(m + 1)
}

pub fn spark_and_uniqueness(phi: &Mat, y: &Mat, rank_tol: f64) -> Result<Uniqueness> {
    if y.nrows() != phi.nrows() {
        return Err(Error::dims(
            "spark_and_uniqueness",
            format!("{} rows in Y", phi.nrows()),
            format!("{}x{}", y.nrows(), y.ncols()),
        ));
    }
    let spark = spark(phi, rank_tol)?;
    let rank_y = numerical_rank(y, rank_tol);
    Ok(Uniqueness {
        spark,
        rank_y,
        bound: (spark as f64 + rank_y as f64 - 1.0) / 2.0,
    })
}

/// Ratio of the largest to the smallest nonzero singular value.
pub fn alpha_of(x: &Mat, rank_tol: f64) -> Result<f64> {
    let sigma = singular_values(x);
    let hi = sigma.max();
    if !(hi > 0.0) {
        return Err(Error::Degenerate("alpha_of"));
    }
    let lo = sigma
        .iter()
        .copied()
        .filter(|&s| s > rank_tol * hi)
        .fold(f64::INFINITY, f64::min);
    Ok(hi / lo)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceCertificate {
    /// `ℓ = s + f(k) + f(k − 1)`, capped at `N`.
    pub level: usize,
    pub delta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub alpha: f64,
    /// Contraction factor; `+∞` (JSON `null`) when `δ_ℓ ≥ 1`.
    pub rho: f64,
    /// Noise amplification; `+∞` (JSON `null`) when `δ_ℓ ≥ 1`.
    pub kappa: f64,
    /// `2α²γ_ℓ² + δ_ℓ² < 1`.
    pub satisfied: bool,
}

/// Assembles `ρ_ℓ` and `κ_ℓ` from constants already computed.
pub fn assemble_certificate(
    level: usize,
    delta: f64,
    gamma: f64,
    theta: f64,
    alpha: f64,
) -> ConvergenceCertificate {
    let a2 = alpha * alpha;
    let (rho, kappa) = if delta < 1.0 {
        let d2 = 1.0 - delta * delta;
        let rho = (2.0 * a2 * gamma * gamma / d2).sqrt();
        let kappa = (1.0 + delta).sqrt() / (1.0 - delta) + (2.0 * a2 * (1.0 + theta)).sqrt() / d2.sqrt();
        (rho, kappa)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    ConvergenceCertificate {
        level,
        delta,
        gamma,
        theta,
        alpha,
        rho,
        kappa,
        satisfied: 2.0 * a2 * gamma * gamma + delta * delta < 1.0,
    }
}

/// Level `ℓ = s + f(k) + f(k−1)` using the clamped support sizes the solver uses.
pub fn certificate_level(s: usize, schedule: &FeedbackSchedule, k: usize, m: usize, n: usize) -> usize {
    let cap = m.saturating_sub(1).min(n);
    let prev = if k > 1 { schedule.eval(k - 1, cap) } else { 0 };
    (s + schedule.eval(k, cap) + prev).min(n)
}

/// Contraction certificate for iteration `k` of a run on `phi` whose true signal is
/// `truth`. Uses `α(truth)` in place of the supremum over the feasible set.
pub fn certificate(
    phi: &Mat,
    truth: &Mat,
    schedule: &FeedbackSchedule,
    k: usize,
) -> Result<ConvergenceCertificate> {
    if truth.nrows() != phi.ncols() {
        return Err(Error::dims(
            "certificate",
            format!("{} rows in X", phi.ncols()),
            format!("{}x{}", truth.nrows(), truth.ncols()),
        ));
    }
    let s = row_support(truth).len();
    let level = certificate_level(s, schedule, k, phi.nrows(), phi.ncols());
    let alpha = alpha_of(truth, crate::linalg::DEFAULT_RANK_TOL)?;
    let delta = ric_bruteforce(phi, level)?;
    let gamma = pric_bruteforce(phi, level)?;
    let theta = theta_bruteforce(phi, level)?;
    Ok(assemble_certificate(level, delta, gamma, theta, alpha))
}

/// Right-hand side `ρᵏ e₀ + κ(1 − ρᵏ)/(1 − ρ)·‖E‖_F` of the error bound.
pub fn error_bound(cert: &ConvergenceCertificate, k: usize, initial_error: f64, noise_norm: f64) -> f64 {
    let rho = cert.rho;
    if !rho.is_finite() {
        return f64::INFINITY;
    }
    let rk = rho.powi(k as i32);
    let geometric = if (rho - 1.0).abs() < 1e-15 {
        k as f64
    } else {
        (1.0 - rk) / (1.0 - rho)
    };
    let noise_term = if noise_norm == 0.0 {
        0.0
    } else {
        cert.kappa * geometric * noise_norm
    };
    rk * initial_error + noise_term
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(8, 4), 70);
        assert_eq!(binomial(16, 0), 1);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(1000, 3), 166_167_000);
    }

    #[test]
    fn orthonormal_columns_have_zero_ric() {
        let q = gaussian(6, 4, 1).qr().q();
        for s in 1..=4 {
            assert!(ric_bruteforce(&q, s).unwrap() < 1e-12);
        }
    }

    #[test]
    fn scaled_column_ric() {
        let mut phi = Mat::identity(3, 3);
        phi[(1, 1)] = 2.0;
        assert!((ric_bruteforce(&phi, 1).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn guard_refuses_large_enumerations() {
        let phi = gaussian(10, 60, 2);
        assert!(matches!(
            ric_bruteforce(&phi, 6),
            Err(Error::SubsetLimit { .. })
        ));
        let r = rip_report(&phi, 6, Enumeration::Auto { samples: 200, seed: 3 }).unwrap();
        assert!(r.lower_bound);
        assert_eq!(r.subsets_examined, 200);
    }

    #[test]
    fn pric_equals_ric_for_orthonormal_rows() {
        let phi = gaussian(8, 4, 4).qr().q().transpose();
        for s in 1..=3 {
            let d = ric_bruteforce(&phi, s).unwrap();
            let g = pric_bruteforce(&phi, s).unwrap();
            let t = theta_bruteforce(&phi, s).unwrap();
            assert!((d - g).abs() < 1e-12 && (d - t).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_two_column_closed_form() {
        let (a, b) = (0.7, -1.9);
        let phi = Mat::from_row_slice(1, 2, &[a, b]);
        let q = a * a + b * b;
        let expected = ((a * a / (q * q)) - 1.0).abs().max(((b * b / (q * q)) - 1.0).abs());
        assert!((theta_bruteforce(&phi, 1).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn spark_conventions() {
        assert_eq!(spark(&Mat::identity(4, 4), 1e-10).unwrap(), 5);
        let mut phi = gaussian(4, 7, 5);
        let c = phi.column(2).into_owned();
        phi.set_column(5, &c);
        assert_eq!(spark(&phi, 1e-10).unwrap(), 2);
        let mut phi = gaussian(4, 7, 6);
        phi.column_mut(3).fill(0.0);
        assert_eq!(spark(&phi, 1e-10).unwrap(), 1);
    }

    #[test]
    fn uniqueness_bound() {
        let phi = gaussian(4, 8, 7);
        let y = gaussian(4, 2, 8);
        let u = spark_and_uniqueness(&phi, &y, 1e-10).unwrap();
        assert_eq!(u.spark, 5);
        assert_eq!(u.rank_y, 2);
        assert_eq!(u.bound, 3.0);
    }

    #[test]
    fn alpha_cases() {
        let q = gaussian(6, 3, 9).qr().q();
        assert!((alpha_of(&q, 1e-10).unwrap() - 1.0).abs() < 1e-12);
        let mut x = Mat::zeros(5, 2);
        x[(0, 0)] = 4.0;
        x[(1, 1)] = 2.0;
        assert_eq!(alpha_of(&x, 1e-10).unwrap(), 2.0);
        assert!(alpha_of(&Mat::zeros(3, 2), 1e-10).is_err());
    }

    #[test]
    fn certificate_for_identity() {
        let phi = Mat::identity(6, 6);
        let mut x = Mat::zeros(6, 2);
        x[(0, 0)] = 1.0;
        let c = certificate(&phi, &x, &FeedbackSchedule::Linear(1), 1).unwrap();
        assert_eq!(c.level, 2);
        assert_eq!((c.delta, c.gamma, c.rho), (0.0, 0.0, 0.0));
        assert!(c.satisfied);
    }

    #[test]
    fn certificate_unbounded_when_delta_at_least_one() {
        let c = assemble_certificate(3, 1.2, 0.4, 0.5, 1.0);
        assert!(!c.satisfied);
        assert!(c.rho.is_infinite() && c.kappa.is_infinite());
        assert_eq!(error_bound(&c, 2, 1.0, 0.0), f64::INFINITY);
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"rho\":null"));
    }

    #[test]
    fn certificate_formula_by_hand() {
        let phi = gaussian(6, 12, 11);
        let mut x = Mat::zeros(12, 2);
        x[(4, 0)] = 1.0;
        x[(4, 1)] = 0.5;
        let c = certificate(&phi, &x, &FeedbackSchedule::Linear(1), 1).unwrap();
        assert_eq!(c.level, 2);
        let d = ric_bruteforce(&phi, 2).unwrap();
        let g = pric_bruteforce(&phi, 2).unwrap();
        let t = theta_bruteforce(&phi, 2).unwrap();
        assert_eq!(c.alpha, 1.0);
        assert_eq!((c.delta, c.gamma, c.theta), (d, g, t));
        let sat = 2.0 * g * g + d * d < 1.0;
        assert_eq!(c.satisfied, sat);
        if d < 1.0 {
            let rho = (2.0 * g * g / (1.0 - d * d)).sqrt();
            let kappa = (1.0 + d).sqrt() / (1.0 - d) + (2.0 * (1.0 + t)).sqrt() / (1.0 - d * d).sqrt();
            assert!((c.rho - rho).abs() < 1e-14 && (c.kappa - kappa).abs() < 1e-14);
        }
    }

    #[test]
    fn certificate_levels_follow_clamped_schedule() {
        let f = FeedbackSchedule::Linear(6);
        assert_eq!(certificate_level(2, &f, 1, 20, 50), 8);
        assert_eq!(certificate_level(2, &f, 2, 20, 50), 2 + 12 + 6);
        assert_eq!(certificate_level(2, &f, 9, 20, 50), 2 + 19 + 19);
        assert_eq!(certificate_level(2, &f, 9, 20, 30), 30);
    }

    #[test]
    fn error_bound_geometric_sum() {
        let c = assemble_certificate(2, 0.1, 0.2, 0.3, 1.0);
        let k = 3;
        let expected = c.rho.powi(3) * 2.0 + c.kappa * (1.0 + c.rho + c.rho * c.rho) * 0.5;
        assert!((error_bound(&c, k, 2.0, 0.5) - expected).abs() < 1e-12);
    }
}
