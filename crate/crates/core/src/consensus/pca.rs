//! First principal component of a reputation-weighted claim matrix.

use alloc::vec;
use alloc::vec::Vec;

use super::ClaimMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("power iteration did not converge within {0} iterations")]
pub struct NoConvergence(pub u32);

/// Fills absent entries with the weighted mean of the present ones in the
/// same column and centers every column on its weighted mean.
pub(crate) fn centered(m: &ClaimMatrix) -> Vec<Vec<f64>> {
    let (rows, cols) = (m.rows.len(), m.cols.len());
    let mut out = vec![vec![0.0; cols]; rows];
    for j in 0..cols {
        let (mut sum, mut mass) = (0.0, 0.0);
        for (row, w) in m.entries.iter().zip(&m.weights) {
            if let Some(x) = row[j] {
                sum += w * x;
                mass += w;
            }
        }
        let mean = if mass > 0.0 { sum / mass } else { 0.0 };
        for (o, row) in out.iter_mut().zip(&m.entries) {
            o[j] = row[j].unwrap_or(mean) - mean;
        }
    }
    out
}

/// `C = X̃ᵀ · diag(w) · X̃`.
pub(crate) fn weighted_covariance(x: &[Vec<f64>], weights: &[f64], cols: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; cols]; cols];
    for (row, w) in x.iter().zip(weights) {
        for a in 0..cols {
            if row[a] == 0.0 {
                continue;
            }
            for b in 0..cols {
                c[a][b] += w * row[a] * row[b];
            }
        }
    }
    c
}

fn mul(c: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    c.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn normalize(v: &mut [f64]) -> bool {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if n.is_nan() || n <= 0.0 {
        return false;
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    // sign convention: the largest-magnitude component is positive
    let lead = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
    if lead < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
    true
}

/// Dominant unit eigenvector of a symmetric positive semidefinite matrix, or
/// `None` when the matrix is zero.
pub fn dominant_eigenvector(c: &[Vec<f64>], tol: f64, max_iter: u32) -> Result<Option<Vec<f64>>, NoConvergence> {
    let n = c.len();
    if n == 0 || c.iter().flatten().all(|x| x.abs() < 1e-300) {
        return Ok(None);
    }
    // Symmetric starts such as all-ones are exactly orthogonal to
    // antisymmetric eigenvectors; irregular weights avoid that.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * libm::sin(1.0 + i as f64)).collect();
    normalize(&mut v);
    let mut start = 0;
    loop {
        let mut probe = mul(c, &v);
        if normalize(&mut probe) {
            break;
        }
        if start == n {
            return Ok(None);
        }
        v = vec![0.0; n];
        v[start] = 1.0;
        start += 1;
    }
    for _ in 0..max_iter {
        let mut next = mul(c, &v);
        if !normalize(&mut next) {
            return Ok(None);
        }
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < tol {
            return Ok(Some(v));
        }
    }
    Err(NoConvergence(max_iter))
}

/// Projection of every centered row onto the dominant eigenvector of the
/// weighted covariance; all zeros when the covariance vanishes.
pub fn first_weighted_component(m: &ClaimMatrix, tol: f64, max_iter: u32) -> Result<Vec<f64>, NoConvergence> {
    let x = centered(m);
    let c = weighted_covariance(&x, &m.weights, m.cols.len());
    Ok(match dominant_eigenvector(&c, tol, max_iter)? {
        None => vec![0.0; m.rows.len()],
        Some(v) => x.iter().map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum()).collect(),
    })
}
