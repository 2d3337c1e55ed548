//! Dense real-matrix kernels shared by the solver and the diagnostics.
//!
//! Everything here works on [`Mat`], a column-major `nalgebra` matrix of `f64`.
//! Transposes are plain transposes; the scalar field is real.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SVD};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Relative pivot threshold below which a restricted column block is treated as rank deficient.
pub const LSQ_RANK_TOL: f64 = 1e-10;

/// Default relative singular-value threshold for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Cap on power iterations in [`spectral_norm`].
pub const POWER_MAX_ITER: usize = 10_000;

/// Applies `Φᵀ(ΦΦᵀ)⁻¹` using a Cholesky factor of `ΦΦᵀ` computed once.
#[derive(Debug, Clone)]
pub struct RowPseudoInverse {
    phi: Mat,
    factor: Cholesky<f64, Dyn>,
}

impl RowPseudoInverse {
    /// Factors `ΦΦᵀ`. Fails when `Φ` is not numerically of full row rank.
    pub fn new(phi: &Mat) -> Result<Self> {
        ensure_finite(phi, "RowPseudoInverse::new")?;
        let m = phi.nrows();
        if m > phi.ncols() {
            return Err(Error::dims("RowPseudoInverse::new", "rows <= cols", phi.shape_str()));
        }
        let gram = phi * phi.transpose();
        let factor = Cholesky::new(gram).ok_or_else(|| row_rank_error(m))?;
        let diag = factor.l_dirty().diagonal();
        let max = diag.amax();
        let dependent: Vec<usize> = (0..m)
            .filter(|&i| diag[i] * diag[i] <= 1e-14 * max * max)
            .collect();
        if !dependent.is_empty() {
            return Err(Error::RankDeficient {
                support: (0..m).collect(),
                dependent,
            });
        }
        Ok(Self {
            phi: phi.clone(),
            factor,
        })
    }

    pub fn source(&self) -> &Mat {
        &self.phi
    }

    /// Solves `(ΦΦᵀ) Z = R` for `Z`.
    pub fn solve_gram(&self, r: &Mat) -> Result<Mat> {
        if r.nrows() != self.phi.nrows() {
            return Err(Error::dims(
                "pinv_apply",
                format!("{} rows", self.phi.nrows()),
                r.shape_str(),
            ));
        }
        Ok(self.factor.solve(r))
    }

    /// Returns `Φᵀ(ΦΦᵀ)⁻¹ R`. With `R = Y − ΦW`, `W + result` is feasible.
    pub fn apply(&self, r: &Mat) -> Result<Mat> {
        let z = self.solve_gram(r)?;
        Ok(self.phi.tr_mul(&z))
    }

    /// The `N×N` orthogonal projector onto the row space of `Φ`, `Φᵀ(ΦΦᵀ)⁻¹Φ`.
    pub fn row_space_projector(&self) -> Mat {
        let z = self.factor.solve(&self.phi);
        self.phi.tr_mul(&z)
    }
}

fn row_rank_error(m: usize) -> Error {
    Error::RankDeficient {
        support: (0..m).collect(),
        dependent: Vec::new(),
    }
}

/// Free-function form of [`RowPseudoInverse::apply`].
pub fn pinv_apply(p: &RowPseudoInverse, r: &Mat) -> Result<Mat> {
    p.apply(r)
}

/// Orthonormal basis of the column space of `x`, from a thin SVD.
///
/// Columns whose singular value is at most `rank_tol · σ_max` are dropped, so the
/// returned matrix is `N×r` with `r` the numerical rank.
pub fn orth_basis(x: &Mat, rank_tol: f64) -> Result<Mat> {
    ensure_finite(x, "orth_basis")?;
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("orth_basis"));
    }
    let svd = SVD::new(x.clone(), true, false);
    let sigma = &svd.singular_values;
    let cutoff = rank_tol * sigma[0];
    let rank = sigma.iter().take_while(|&&s| s > cutoff).count().max(1);
    let u = svd.u.expect("left singular vectors requested");
    Ok(u.columns(0, rank).into_owned())
}

/// Singular values in descending order.
pub fn singular_values(x: &Mat) -> DVector<f64> {
    SVD::new(x.clone(), false, false).singular_values
}

/// Numerical rank at threshold `rank_tol · σ_max`. Zero for the zero matrix.
pub fn numerical_rank(x: &Mat, rank_tol: f64) -> usize {
    let sigma = singular_values(x);
    if sigma.is_empty() || sigma[0] == 0.0 {
        return 0;
    }
    let cutoff = rank_tol * sigma[0];
    sigma.iter().filter(|&&s| s > cutoff).count()
}

/// Least-squares solution of `Φ_T Z ≈ B` by Householder QR of the column block `Φ_T`.
///
/// `Φ_T` must have full column rank; a pivot `|R_ii| ≤ LSQ_RANK_TOL · max|R_jj|` is
/// reported as [`Error::RankDeficient`].
pub fn restricted_lsq(phi: &Mat, support: &[usize], b: &Mat) -> Result<Mat> {
    let (m, n) = phi.shape();
    if b.nrows() != m {
        return Err(Error::dims("restricted_lsq", format!("{m} rows in B"), b.shape_str()));
    }
    if support.is_empty() {
        return Err(Error::Invalid("restricted_lsq on an empty support".into()));
    }
    if support.len() > m {
        return Err(Error::RankDeficient {
            support: support.to_vec(),
            dependent: support[m..].to_vec(),
        });
    }
    if let Some(&bad) = support.iter().find(|&&j| j >= n) {
        return Err(Error::dims("restricted_lsq", format!("column index < {n}"), bad));
    }

    let block = phi.select_columns(support);
    let t = support.len();
    let qr = block.qr();
    let r = qr.r();
    let pivots = r.diagonal();
    let largest = pivots.amax();
    let dependent: Vec<usize> = (0..t)
        .filter(|&i| !(pivots[i].abs() > LSQ_RANK_TOL * largest))
        .map(|i| support[i])
        .collect();
    if !dependent.is_empty() {
        return Err(Error::RankDeficient {
            support: support.to_vec(),
            dependent,
        });
    }

    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let rhs = qtb.rows(0, t).into_owned();
    r.solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::RankDeficient {
            support: support.to_vec(),
            dependent: Vec::new(),
        })
}

/// Spectral norm `‖A‖₂` by power iteration on `AᵀA`.
///
/// Starts from the normalized all-ones vector (falling back to the basis vector of
/// the largest column when that start is orthogonal to the row space) and stops
/// once the estimate changes by at most `tol` relative, or after
/// [`POWER_MAX_ITER`] iterations.
pub fn spectral_norm(a: &Mat, tol: f64) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    if (a * &v).norm() == 0.0 {
        let (j, norm) = a
            .column_iter()
            .map(|c| c.norm())
            .enumerate()
            .fold((0, 0.0), |best, (j, c)| if c > best.1 { (j, c) } else { best });
        if norm == 0.0 {
            return 0.0;
        }
        v = DVector::zeros(n);
        v[j] = 1.0;
    }

    let mut estimate = (a * &v).norm();
    for _ in 0..POWER_MAX_ITER {
        let av = a * &v;
        let mut next = a.tr_mul(&av);
        let len = next.norm();
        if len == 0.0 {
            break;
        }
        next /= len;
        v = next;
        let updated = (a * &v).norm();
        let done = (updated - estimate).abs() <= tol * updated;
        estimate = updated;
        if done {
            break;
        }
    }
    estimate
}

/// Euclidean norm of each row.
pub fn row_norms(x: &Mat) -> Vec<f64> {
    x.row_iter().map(|r| r.norm()).collect()
}

/// Indices in `0..n` that are not in the sorted set `support`.
pub fn complement(n: usize, support: &[usize]) -> Vec<usize> {
    let mut keep = vec![true; n];
    for &i in support {
        keep[i] = false;
    }
    (0..n).filter(|&i| keep[i]).collect()
}

/// Copies the rows listed in `support` into a `|support|×cols` matrix.
pub fn gather_rows(x: &Mat, support: &[usize]) -> Mat {
    x.select_rows(support)
}

/// Places the rows of `block` at positions `support` of an otherwise zero `n×cols` matrix.
pub fn scatter_rows(n: usize, support: &[usize], block: &Mat) -> Mat {
    let mut out = Mat::zeros(n, block.ncols());
    for (k, &i) in support.iter().enumerate() {
        out.set_row(i, &block.row(k));
    }
    out
}

pub(crate) fn ensure_finite(x: &Mat, op: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

pub(crate) trait ShapeStr {
    fn shape_str(&self) -> String;
}

impl ShapeStr for Mat {
    fn shape_str(&self) -> String {
        format!("{}x{}", self.nrows(), self.ncols())
    }
}
