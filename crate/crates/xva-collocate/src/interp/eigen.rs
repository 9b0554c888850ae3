//! Symmetric tridiagonal eigensolver (implicit QL with Wilkinson shifts).
//!
//! This is the eigenvalue engine behind the Golub–Welsch quadrature
//! construction: the Gauss nodes of a distribution are the eigenvalues of
//! its Jacobi matrix, and the weights are proportional to the squared first
//! components of the normalized eigenvectors. Only that first row of the
//! eigenvector matrix is accumulated, which keeps the solver O(n²).

use crate::error::{Error, Result};

/// Relative off-diagonal threshold below which an element is deflated.
const DEFLATION_TOL: f64 = 1e-14;

/// Iteration cap per eigenvalue; QL with Wilkinson shifts converges
/// cubically, so anything near this cap signals a malformed matrix.
const MAX_SWEEPS: usize = 50;

/// Eigen decomposition restricted to what quadrature rules need.
pub(crate) struct TridiagEigen {
    /// Eigenvalues, sorted ascending.
    pub values: Vec<f64>,
    /// First component of each normalized eigenvector, same order.
    pub first_components: Vec<f64>,
}

/// Eigenvalues and first eigenvector components of the symmetric
/// tridiagonal matrix with diagonal `diag` and subdiagonal `sub`
/// (`sub.len() == diag.len() - 1`).
pub(crate) fn symmetric_tridiagonal_eigen(diag: Vec<f64>, sub: Vec<f64>) -> Result<TridiagEigen> {
    let n = diag.len();
    assert_eq!(sub.len() + 1, n, "subdiagonal must have length n-1");
    let mut d = diag;
    // Off-diagonals padded with a trailing zero so e[m] is addressable at m = n-1.
    let mut e: Vec<f64> = sub.iter().copied().chain(std::iter::once(0.0)).collect();
    let mut z = vec![0.0; n];
    z[0] = 1.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            // Find the first deflatable off-diagonal at or after l.
            let mut m = l;
            while m + 1 < n {
                let scale = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= DEFLATION_TOL * scale {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_SWEEPS {
                return Err(Error::Numerical(format!(
                    "tridiagonal QL failed to converge for eigenvalue {l} after {MAX_SWEEPS} sweeps"
                )));
            }

            // Wilkinson shift from the leading 2x2 block.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0_f64, 1.0_f64);
            let mut p = 0.0;

            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    // Negligible rotation: deflate and restart this eigenvalue.
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;

                // Accumulate the first row of the eigenvector matrix.
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if r == 0.0 {
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
        values: order.iter().map(|&i| d[i]).collect(),
        first_components: order.iter().map(|&i| z[i]).collect(),
    })
}
