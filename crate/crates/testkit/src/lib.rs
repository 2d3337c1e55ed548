//! Reference computations used to check the library from an independent route.
//!
//! Nothing here calls into `osnst-core`; the routines are deliberately simple
//! (explicit loops, Jacobi rotations, Gram–Schmidt) so they fail differently from
//! the QR/SVD/Cholesky paths they are compared against.

use nalgebra::DMatrix;
use rand::{seq::index::sample, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Mat = DMatrix<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `n×l` signal with `s` i.i.d. Gaussian rows on a uniformly random support.
pub fn sparse_signal(n: usize, l: usize, s: usize, rng: &mut ChaCha8Rng) -> (Mat, Vec<usize>) {
    let mut support = sample(rng, n, s).into_vec();
    support.sort_unstable();
    let mut x = Mat::zeros(n, l);
    for &i in &support {
        for j in 0..l {
            x[(i, j)] = rng.sample(StandardNormal);
        }
    }
    (x, support)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &Mat) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let scale: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    off += m[(p, q)] * m[(p, q)];
                }
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// `AᵀA` restricted to the columns in `subset`, by explicit dot products.
pub fn gram_block(a: &Mat, subset: &[usize]) -> Mat {
    let t = subset.len();
    Mat::from_fn(t, t, |i, j| {
        (0..a.nrows())
            .map(|r| a[(r, subset[i])] * a[(r, subset[j])])
            .sum()
    })
}

/// `max_{|S|=s} max(|1 − λ_min|, |λ_max − 1|)` over Gram blocks of `a`.
pub fn ric_oracle(a: &Mat, s: usize) -> f64 {
    subsets(a.ncols(), s)
        .iter()
        .map(|sub| {
            let eig = jacobi_eigenvalues(&gram_block(a, sub));
            (1.0 - eig[0]).abs().max((eig[eig.len() - 1] - 1.0).abs())
        })
        .fold(0.0, f64::max)
}

/// Inverse of a small square matrix by Gauss–Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &Mat) -> Option<Mat> {
    let n = a.nrows();
    let mut aug = Mat::zeros(n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, n)).fill_with_identity();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| aug[(i, col)].abs().partial_cmp(&aug[(j, col)].abs()).unwrap())?;
        if aug[(pivot, col)].abs() < 1e-300 {
            return None;
        }
        aug.swap_rows(pivot, col);
        let d = aug[(col, col)];
        for k in 0..2 * n {
            aug[(col, k)] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = aug[(r, col)];
                for k in 0..2 * n {
                    aug[(r, k)] -= f * aug[(col, k)];
                }
            }
        }
    }
    Some(aug.view((0, n), (n, n)).into_owned())
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(a: &Mat) -> f64 {
    let n = a.nrows();
    let mut m = a.clone();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().partial_cmp(&m[(j, col)].abs()).unwrap())
            .unwrap();
        if m[(pivot, col)] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap_rows(pivot, col);
            det = -det;
        }
        det *= m[(col, col)];
        for r in col + 1..n {
            let f = m[(r, col)] / m[(col, col)];
            for k in col..n {
                m[(r, k)] -= f * m[(col, k)];
            }
        }
    }
    det
}

/// Orthonormal basis of the column space by modified Gram–Schmidt; columns whose
/// remaining norm is below `tol` times the largest input column norm are dropped.
pub fn modified_gram_schmidt(x: &Mat, tol: f64) -> Mat {
    let scale = x.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    for c in x.column_iter() {
        let mut v = c.into_owned();
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        // second pass for stability
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        let norm = v.norm();
        if norm > tol * scale {
            basis.push(v / norm);
        }
    }
    Mat::from_columns(&basis)
}

/// The displayed feedback update
/// `W_T = X_T + (Φ_TᵀΦ_T)⁻¹ Φ_Tᵀ Φ_{Tᶜ} X_{Tᶜ}`, `W_{Tᶜ} = 0`.
pub fn feedback_formula(phi: &Mat, x: &Mat, support: &[usize]) -> Mat {
    let n = phi.ncols();
    let rest: Vec<usize> = (0..n).filter(|i| !support.contains(i)).collect();
    let phi_t = phi.select_columns(support);
    let phi_c = phi.select_columns(&rest);
    let gram_inv = gauss_jordan_inverse(&(phi_t.transpose() * &phi_t)).expect("invertible Gram block");
    let lambda = gram_inv * phi_t.transpose() * phi_c * x.select_rows(&rest);
    let w_t = x.select_rows(support) + lambda;
    let mut w = Mat::zeros(n, x.ncols());
    for (k, &i) in support.iter().enumerate() {
        w.set_row(i, &w_t.row(k));
    }
    w
}

/// Simultaneous OMP coded from the normal equations: returns the selection order.
pub fn somp_reference(phi: &Mat, y: &Mat, s: usize) -> Vec<usize> {
    let (m, n) = phi.shape();
    let mut chosen: Vec<usize> = Vec::new();
    let mut residual = y.clone();
    for _ in 0..s {
        let mut best = (usize::MAX, -1.0);
        for j in 0..n {
            if chosen.contains(&j) {
                continue;
            }
            let mut score = 0.0;
            for c in 0..y.ncols() {
                let dot: f64 = (0..m).map(|r| phi[(r, j)] * residual[(r, c)]).sum();
                score += dot * dot;
            }
            if score > best.1 {
                best = (j, score);
            }
        }
        chosen.push(best.0);
        let a = phi.select_columns(&chosen);
        let coef = gauss_jordan_inverse(&(a.transpose() * &a)).unwrap() * a.transpose() * y;
        residual = y - &a * coef;
    }
    chosen
}

/// Best single-column least-squares fit to `y`: `(index, coefficient row, residual)`.
pub fn best_single_column(phi: &Mat, y: &Mat) -> (usize, Vec<f64>, f64) {
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    for j in 0..phi.ncols() {
        let col = phi.column(j);
        let nn = col.dot(&col);
        let coef: Vec<f64> = (0..y.ncols()).map(|c| col.dot(&y.column(c)) / nn).collect();
        let mut res = 0.0;
        for c in 0..y.ncols() {
            for r in 0..phi.nrows() {
                let d = y[(r, c)] - col[r] * coef[c];
                res += d * d;
            }
        }
        if best.as_ref().is_none_or(|b| res < b.2) {
            best = Some((j, coef, res));
        }
    }
    let (j, coef, res) = best.unwrap();
    (j, coef, res.sqrt())
}

/// Unit-norm, nearly tight frame of `n` vectors in `R^m` with low mutual coherence,
/// by alternating projection between a clipped Gram matrix and rank-`m` tight frames
/// from a random Gaussian start.
pub fn incoherent_frame(m: usize, n: usize, target_mu: f64, iters: usize, rng: &mut ChaCha8Rng) -> Mat {
    let mut f = gaussian(m, n, rng);
    normalize_columns(&mut f);
    for _ in 0..iters {
        let mut g = f.transpose() * &f;
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] = if i == j { 1.0 } else { g[(i, j)].clamp(-target_mu, target_mu) };
            }
        }
        let eig = g.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        f = Mat::from_fn(m, n, |r, c| {
            let k = order[r];
            eig.eigenvalues[k].max(0.0).sqrt() * eig.eigenvectors[(c, k)]
        });
        let svd = f.clone().svd(true, true);
        f = svd.u.unwrap() * svd.v_t.unwrap() * (n as f64 / m as f64).sqrt();
        normalize_columns(&mut f);
    }
    f
}

fn normalize_columns(f: &mut Mat) {
    for mut c in f.column_iter_mut() {
        let norm = c.norm();
        c /= norm;
    }
}

/// Largest absolute inner product between distinct unit columns.
pub fn coherence(f: &Mat) -> f64 {
    let g = f.transpose() * f;
    let mut mu: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            if i != j {
                mu = mu.max(g[(i, j)].abs() / (g[(i, i)] * g[(j, j)]).sqrt());
            }
        }
    }
    mu
}
