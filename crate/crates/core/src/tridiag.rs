//! Symmetric tridiagonal eigenproblems.
//!
//! Implicit QL with Wilkinson shifts. Only a few selected rows of the
//! eigenvector matrix are accumulated, which is all the spectral measures
//! need (first components, or the two leading components of a staggered
//! Dirac grid), so the cost stays at `O(n^2)` per tracked row.

use crate::{Error, Result};

/// Eigenvalues in ascending order together with the requested rows of the
/// orthonormal eigenvector matrix: `rows[r][k]` is component `tracked[r]` of
/// the eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub struct TridiagEigen {
    pub values: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

/// Eigen-decompose the symmetric tridiagonal matrix with main diagonal
/// `diag` and off-diagonal `off` (`off[i]` couples `i` and `i + 1`).
pub fn eigen(diag: &[f64], off: &[f64], tracked: &[usize]) -> Result<TridiagEigen> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty tridiagonal matrix".into()));
    }
    if off.len() + 1 != n {
        return Err(Error::LengthMismatch {
            expected: n - 1,
            actual: off.len(),
        });
    }
    if let Some(&bad) = tracked.iter().find(|&&r| r >= n) {
        return Err(Error::InvalidInput(format!("tracked row {bad} out of range")));
    }
    if diag.iter().chain(off).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tridiagonal entries"));
    }

    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z: Vec<Vec<f64>> = tracked
        .iter()
        .map(|&r| {
            let mut row = vec![0.0; n];
            row[r] = 1.0;
            row
        })
        .collect();

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::NoConvergence);
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    Ok(TridiagEigen {
        values: order.iter().map(|&k| d[k]).collect(),
        rows: z
            .iter()
            .map(|row| order.iter().map(|&k| row[k]).collect())
            .collect(),
    })
}
