//! Singular value decomposition by one-sided Jacobi rotation, with the
//! pseudoinverse and minimum-norm least squares built on top.
//!
//! One-sided Jacobi is simple and highly accurate at the sizes this crate
//! works with (lifted dimensions up to a few hundred, snapshot counts up to a
//! few thousand).

use super::mat::Mat;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 64;

/// Thin SVD: `a = u * diag(s) * v^T` with `s` sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    /// m x k, orthonormal columns (zero columns where the singular value is 0).
    pub u: Mat,
    /// k singular values, descending.
    pub s: Vec<f64>,
    /// n x k, orthonormal columns.
    pub v: Mat,
}

/// Thin SVD via one-sided Jacobi.
///
/// Errors with `NumericalFailure` if the rotation sweeps do not converge.
pub fn svd(a: &Mat) -> Result<Svd> {
    if a.rows() < a.cols() {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }

    let m = a.rows();
    let n = a.cols();
    // Work on columns of b; v accumulates the right rotations.
    let mut b = a.clone();
    let mut v = Mat::identity(n);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..m {
                    let bp = b[(i, p)];
                    let bq = b[(i, q)];
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let bp = b[(i, p)];
                    let bq = b[(i, q)];
                    b[(i, p)] = c * bp - s * bq;
                    b[(i, q)] = s * bp + c * bq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "one-sided Jacobi SVD did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| b.col_norm(j)).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let mut u = Mat::zeros(m, n);
    let mut s = Vec::with_capacity(n);
    let mut v_sorted = Mat::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        if sigma > 0.0 {
            for i in 0..m {
                u[(i, k)] = b[(i, j)] / sigma;
            }
        }
        for i in 0..n {
            v_sorted[(i, k)] = v[(i, j)];
        }
    }

    Ok(Svd { u, s, v: v_sorted })
}

/// Moore-Penrose pseudoinverse.
///
/// Singular values below `tol * sigma_max` are treated as zero; `tol = 0`
/// selects the machine-default relative cutoff `max(m, n) * eps`.
pub fn pinv(a: &Mat, tol: f64) -> Result<Mat> {
    assert!(tol >= 0.0, "pinv tolerance must be non-negative");
    let dec = svd(a)?;
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let cutoff = if tol > 0.0 {
        tol * smax
    } else {
        a.rows().max(a.cols()) as f64 * f64::EPSILON * smax
    };

    // a+ = v * diag(1/s) * u^T over the kept singular values
    let n = a.cols();
    let m = a.rows();
    let mut out = Mat::zeros(n, m);
    for (k, &sigma) in dec.s.iter().enumerate() {
        if sigma <= cutoff || sigma == 0.0 {
            continue;
        }
        let inv = 1.0 / sigma;
        for i in 0..n {
            let vik = dec.v[(i, k)] * inv;
            if vik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[(i, j)] += vik * dec.u[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Minimum-norm least-squares solution of `a * x = b` via the SVD.
pub fn lstsq(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.rows() != b.rows() {
        return Err(Error::InvalidArgument(format!(
            "lstsq row mismatch: a has {}, b has {}",
            a.rows(),
            b.rows()
        )));
    }
    let dec = svd(a)?;
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let cutoff = a.rows().max(a.cols()) as f64 * f64::EPSILON * smax;

    // x = v * diag(1/s) * u^T * b
    let utb = dec.u.transpose().matmul(b);
    let mut scaled = Mat::zeros(dec.s.len(), b.cols());
    for (k, &sigma) in dec.s.iter().enumerate() {
        if sigma <= cutoff || sigma == 0.0 {
            continue;
        }
        for j in 0..b.cols() {
            scaled[(k, j)] = utb[(k, j)] / sigma;
        }
    }
    Ok(dec.v.matmul(&scaled))
}
