//! Synthetic joint-sparse problems: Gaussian sensing matrix, random row support and
//! AR(1)-correlated snapshots.

use log::warn;
use osnst_core::{Error, Mat, ProblemInstance, Result};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

/// Matrix with i.i.d. standard normal entries, filled row by row.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_row_iterator(rows, cols, (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// `rows × l` block whose first column is N(0, 1) and whose later columns follow
/// `x_j = β x_{j−1} + (1 − β) ε_j`.
pub fn ar1_rows<R: Rng + ?Sized>(rows: usize, l: usize, beta: f64, rng: &mut R) -> Mat {
    let mut x = Mat::zeros(rows, l);
    for i in 0..rows {
        x[(i, 0)] = rng.sample(StandardNormal);
    }
    for j in 1..l {
        for i in 0..rows {
            let eps: f64 = rng.sample(StandardNormal);
            x[(i, j)] = beta * x[(i, j - 1)] + (1.0 - beta) * eps;
        }
    }
    x
}

/// Draws `(Φ, X, Y = ΦX)` with an `s`-row-sparse `X` of `l` snapshots.
///
/// The support is uniform over size-`s` subsets of `0..n`.
pub fn gen_problem<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    l: usize,
    s: usize,
    beta: f64,
    rng: &mut R,
) -> Result<ProblemInstance> {
    if s > n {
        return Err(Error::Invalid(format!("sparsity {s} exceeds N={n}")));
    }
    if l == 0 {
        return Err(Error::Invalid("need at least one snapshot".into()));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Invalid(format!("beta={beta} outside [0, 1]")));
    }
    if beta == 1.0 && l > 1 {
        warn!("beta = 1 repeats the first snapshot; rank(Y) = 1 < L = {l}");
    }
    let phi = gaussian_matrix(m, n, rng);
    let mut support = index::sample(rng, n, s).into_vec();
    support.sort_unstable();
    let rows = ar1_rows(s, l, beta, rng);
    let mut x = Mat::zeros(n, l);
    for (k, &i) in support.iter().enumerate() {
        x.set_row(i, &rows.row(k));
    }
    let y = &phi * &x;
    ProblemInstance::from_parts(phi, y, Some(x), None, Some(support))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at sparsity `s`. Every solver in a sweep sees the same instance.
pub fn trial_seed(seed: u64, s: usize, trial: usize) -> u64 {
    splitmix64(seed ^ splitmix64(((s as u64) << 32) ^ trial as u64))
}
