//! Randomized dependence coefficient.
//!
//! Each column is replaced by its empirical copula (average ranks over n),
//! augmented with a constant 1, projected through `k` Gaussian weights of
//! standard deviation `s` and passed through `sin`. The coefficient is the
//! largest canonical correlation between the two feature sets.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, forward_solve, symmetric_eigenvalues, transpose};
use crate::rng::{derive_seed, normal, seeded};

pub const DEFAULT_FEATURES: usize = 20;
pub const DEFAULT_SCALE: f64 = 1.0 / 6.0;
pub const RIDGE: f64 = 1e-9;

/// Average ranks divided by n; ties share the mean of their ranks.
pub fn copula(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Ranks are 1-based: positions i..=j hold ranks i+1..=j+1.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank / n as f64;
        }
        i = j + 1;
    }
    out
}

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Random sine features of a copula-transformed column, `n x k` row-major.
/// Returns `None` for a constant column.
pub fn sine_features(values: &[f64], k: usize, s: f64, seed: u64) -> Option<Vec<f64>> {
    if values.len() < 2 || is_constant(values) {
        return None;
    }
    let u = copula(values);
    let mut rng = seeded(seed);
    let w: Vec<(f64, f64)> = (0..k).map(|_| (s * normal(&mut rng), s * normal(&mut rng))).collect();
    let mut out = Vec::with_capacity(u.len() * k);
    for &x in &u {
        for &(a, b) in &w {
            out.push(libm::sin(a * x + b));
        }
    }
    Some(out)
}

fn centered(f: &[f64], n: usize, k: usize) -> Vec<f64> {
    let mut out = f.to_vec();
    for c in 0..k {
        let mean = (0..n).map(|r| f[r * k + c]).sum::<f64>() / n as f64;
        for r in 0..n {
            out[r * k + c] -= mean;
        }
    }
    out
}

/// `A' B / n` for centered `n x p` and `n x q` matrices.
fn cross(a: &[f64], p: usize, b: &[f64], q: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * q];
    for r in 0..n {
        let ar = &a[r * p..(r + 1) * p];
        let br = &b[r * q..(r + 1) * q];
        for i in 0..p {
            let ai = ar[i];
            for j in 0..q {
                out[i * q + j] += ai * br[j];
            }
        }
    }
    for v in &mut out {
        *v /= n as f64;
    }
    out
}

/// Largest canonical correlation between two feature sets with `n` rows.
pub fn max_canonical_correlation(f: &[f64], p: usize, g: &[f64], q: usize, n: usize) -> f64 {
    let fc = centered(f, n, p);
    let gc = centered(g, n, q);
    let mut cxx = cross(&fc, p, &fc, p, n);
    let mut cyy = cross(&gc, q, &gc, q, n);
    let cxy = cross(&fc, p, &gc, q, n);
    for i in 0..p {
        cxx[i * p + i] += RIDGE;
    }
    for i in 0..q {
        cyy[i * q + i] += RIDGE;
    }
    let (Some(lx), Some(ly)) = (cholesky(&cxx, p), cholesky(&cyy, q)) else {
        return 0.0;
    };
    // M = Lx^-1 Cxy Ly^-T, whose largest singular value is the answer.
    let a = forward_solve(&lx, p, &cxy, q); // p x q
    let at = transpose(&a, p, q); // q x p
    let mt = forward_solve(&ly, q, &at, p); // (Ly^-1 A')  = M'  (q x p)
    let m = transpose(&mt, q, p); // p x q
    let mut mmt = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            mmt[i * p + j] = (0..q).map(|c| m[i * q + c] * m[j * q + c]).sum();
        }
    }
    let top = symmetric_eigenvalues(&mmt, p).into_iter().fold(0.0f64, f64::max);
    libm::sqrt(top.max(0.0)).clamp(0.0, 1.0)
}

/// RDC of two equal-length columns, deterministic in `seed`.
pub fn rdc(x: &[f64], y: &[f64], k: usize, s: f64, seed: u64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: x.len(),
        });
    }
    let fx = sine_features(x, k, s, derive_seed(seed, &[0]));
    let fy = sine_features(y, k, s, derive_seed(seed, &[1]));
    Ok(match (fx, fy) {
        (Some(fx), Some(fy)) => max_canonical_correlation(&fx, k, &fy, k, x.len()),
        _ => 0.0,
    })
}

/// Symmetric pairwise RDC matrix (row-major, diagonal 1) over columns that
/// share one row sample. Column `i` draws its weights from `derive(seed, i)`.
pub fn rdc_matrix(columns: &[Vec<f64>], k: usize, s: f64, seed: u64) -> Vec<f64> {
    let m = columns.len();
    let n = columns.first().map_or(0, |c| c.len());
    let features: Vec<Option<Vec<f64>>> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| sine_features(c, k, s, derive_seed(seed, &[i as u64])))
        .collect();
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        out[i * m + i] = 1.0;
        for j in (i + 1)..m {
            let v = match (&features[i], &features[j]) {
                (Some(a), Some(b)) => max_canonical_correlation(a, k, b, k, n),
                _ => 0.0,
            };
            out[i * m + j] = v;
            out[j * m + i] = v;
        }
    }
    out
}
