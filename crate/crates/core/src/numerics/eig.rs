//! Real nonsymmetric eigendecomposition: Householder reduction to Hessenberg
//! form followed by Francis double-shift QR iteration, with eigenvectors by
//! back-substitution from the quasi-triangular form.
//!
//! The algorithm follows the EISPACK `orthes`/`hqr2` lineage (the same route
//! Jama and Eigen take for dense nonsymmetric problems).

use super::mat::Mat;
use crate::error::{Error, Result};

/// Complex number as a plain (re, im) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C64 {
    pub re: f64,
    pub im: f64,
}

impl C64 {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn conj(&self) -> C64 {
        C64::new(self.re, -self.im)
    }

    pub fn add(&self, o: C64) -> C64 {
        C64::new(self.re + o.re, self.im + o.im)
    }

    pub fn sub(&self, o: C64) -> C64 {
        C64::new(self.re - o.re, self.im - o.im)
    }

    pub fn mul(&self, o: C64) -> C64 {
        C64::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }

    pub fn scale(&self, s: f64) -> C64 {
        C64::new(self.re * s, self.im * s)
    }

    pub fn div(&self, o: C64) -> C64 {
        let (re, im) = cdiv(self.re, self.im, o.re, o.im);
        C64::new(re, im)
    }
}

/// Eigenvalues and unit-norm eigenvectors of a real square matrix.
///
/// Complex eigenvalues of a real matrix appear in adjacent conjugate pairs.
/// `degraded` is set when any computed pair fails the residual bound
/// `||a v - lambda v|| <= 1e-8 ||a||` (near-defective matrices), instead of
/// failing outright.
#[derive(Debug, Clone)]
pub struct ComplexSpectrum {
    pub eigenvalues: Vec<C64>,
    /// Right eigenvectors; `right_vectors[k]` is the column for eigenvalue k.
    pub right_vectors: Vec<Vec<C64>>,
    /// Left eigenvectors; `left_vectors[k] . a = lambda_k . left_vectors[k]`.
    pub left_vectors: Vec<Vec<C64>>,
    pub degraded: bool,
}

/// Complex division staying accurate when one part dominates.
fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    if yr.abs() > yi.abs() {
        let r = yi / yr;
        let d = yr + r * yi;
        ((xr + r * xi) / d, (xi - r * xr) / d)
    } else {
        let r = yr / yi;
        let d = yi + r * yr;
        ((r * xr + xi) / d, (r * xi - xr) / d)
    }
}

struct EigCore {
    d: Vec<f64>,
    e: Vec<f64>,
    /// Eigenvectors in compressed real form: a real eigenvalue owns one
    /// column; a conjugate pair (e[k] > 0 at k) owns columns k (real part)
    /// and k+1 (imaginary part).
    v: Mat,
}

/// Householder reduction to upper Hessenberg, accumulating the orthogonal
/// similarity in `v`.
fn reduce_to_hessenberg(h: &mut Mat, v: &mut Mat) {
    let n = h.rows();
    if n < 3 {
        return;
    }
    let low = 0;
    let high = n - 1;
    let mut ort = vec![0.0; n];

    for m in (low + 1)..high {
        let mut scale = 0.0;
        for i in m..=high {
            scale += h[(i, m - 1)].abs();
        }
        if scale == 0.0 {
            continue;
        }

        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[(i, j)];
            }
            f /= hh;
            for i in m..=high {
                h[(i, j)] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * h[(i, j)];
            }
            f /= hh;
            for j in m..=high {
                h[(i, j)] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[(m, m - 1)] = scale * g;
    }

    // Accumulate the transformations.
    for m in ((low + 1)..high).rev() {
        if h[(m, m - 1)] == 0.0 {
            continue;
        }
        for i in (m + 1)..=high {
            ort[i] = h[(i, m - 1)];
        }
        for j in m..=high {
            let mut g = 0.0;
            for i in m..=high {
                g += ort[i] * v[(i, j)];
            }
            // Double division avoids possible underflow.
            g = (g / ort[m]) / h[(m, m - 1)];
            for i in m..=high {
                v[(i, j)] += g * ort[i];
            }
        }
    }
}

/// Francis double-shift QR on a Hessenberg matrix, then eigenvector
/// back-substitution. `h` is destroyed; `v` accumulates into eigenvectors.
#[allow(clippy::needless_range_loop, unused_assignments)]
fn hqr2(h: &mut Mat, v: &mut Mat, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let nn = h.rows();
    if nn == 0 {
        return Ok(());
    }
    let mut n = nn as isize - 1;
    let low = 0isize;
    let high = nn as isize - 1;
    let eps = f64::EPSILON;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z): (f64, f64, f64, f64, f64) =
        (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut x, mut y, mut w): (f64, f64, f64) = (0.0, 0.0, 0.0);

    let at = |h: &Mat, i: isize, j: isize| h[(i as usize, j as usize)];

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let mut iter = 0usize;
    let mut total_iter = 0usize;
    let iter_budget = 50 * nn.max(4);

    while n >= low {
        // Look for a single small sub-diagonal element.
        let mut l = n;
        while l > low {
            s = at(h, l - 1, l - 1).abs() + at(h, l, l).abs();
            if s == 0.0 {
                s = norm;
            }
            if at(h, l, l - 1).abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            // One real root found.
            let nu = n as usize;
            h[(nu, nu)] += exshift;
            d[nu] = h[(nu, nu)];
            e[nu] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            // Two roots found (real pair or complex conjugate pair).
            let nu = n as usize;
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            p = (h[(nu - 1, nu - 1)] - h[(nu, nu)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[(nu, nu)] += exshift;
            h[(nu - 1, nu - 1)] += exshift;
            x = h[(nu, nu)];

            if q >= 0.0 {
                // Real pair.
                z = if p >= 0.0 { p + z } else { p - z };
                d[nu - 1] = x + z;
                d[nu] = d[nu - 1];
                if z != 0.0 {
                    d[nu] = x - w / z;
                }
                e[nu - 1] = 0.0;
                e[nu] = 0.0;
                x = h[(nu, nu - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in (nu - 1)..nn {
                    z = h[(nu - 1, j)];
                    h[(nu - 1, j)] = q * z + p * h[(nu, j)];
                    h[(nu, j)] = q * h[(nu, j)] - p * z;
                }
                for i in 0..=nu {
                    z = h[(i, nu - 1)];
                    h[(i, nu - 1)] = q * z + p * h[(i, nu)];
                    h[(i, nu)] = q * h[(i, nu)] - p * z;
                }
                for i in low as usize..=high as usize {
                    z = v[(i, nu - 1)];
                    v[(i, nu - 1)] = q * z + p * v[(i, nu)];
                    v[(i, nu)] = q * v[(i, nu)] - p * z;
                }
            } else {
                // Complex pair.
                d[nu - 1] = x + p;
                d[nu] = x + p;
                e[nu - 1] = z;
                e[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            // No convergence yet: form a shift and run a double QR step.
            let nu = n as usize;
            x = h[(nu, nu)];
            y = 0.0;
            w = 0.0;
            if l < n {
                y = h[(nu - 1, nu - 1)];
                w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            }

            // Wilkinson's original ad hoc shift.
            if iter == 10 {
                exshift += x;
                for i in low..=n {
                    let iu = i as usize;
                    h[(iu, iu)] -= x;
                }
                s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }

            // Second ad hoc shift.
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=n {
                        let iu = i as usize;
                        h[(iu, iu)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = 0.964;
                    w = 0.964;
                }
            }

            iter += 1;
            total_iter += 1;
            if iter > 60 || total_iter > iter_budget {
                return Err(Error::NumericalFailure(format!(
                    "QR iteration did not converge ({total_iter} steps, matrix dim {nn})"
                )));
            }

            // Look for two consecutive small sub-diagonal elements.
            let mut m = n - 2;
            while m >= l {
                let mu = m as usize;
                z = h[(mu, mu)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(mu + 1, mu)] + h[(mu, mu + 1)];
                q = h[(mu + 1, mu + 1)] - z - r - s;
                r = h[(mu + 2, mu + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(mu, mu - 1)].abs() * (q.abs() + r.abs())
                    < eps
                        * (p.abs()
                            * (h[(mu - 1, mu - 1)].abs() + z.abs() + h[(mu + 1, mu + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }

            for i in (m + 2)..=n {
                let iu = i as usize;
                h[(iu, iu - 2)] = 0.0;
                if i > m + 2 {
                    h[(iu, iu - 3)] = 0.0;
                }
            }

            // Double QR step on rows l..n, columns m..n.
            for k in m..=(n - 1) {
                let ku = k as usize;
                let notlast = k != n - 1;
                if k != m {
                    p = h[(ku, ku - 1)];
                    q = h[(ku + 1, ku - 1)];
                    r = if notlast { h[(ku + 2, ku - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                if x == 0.0 {
                    break;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s == 0.0 {
                    continue;
                }
                if k != m {
                    h[(ku, ku - 1)] = -s * x;
                } else if l != m {
                    h[(ku, ku - 1)] = -h[(ku, ku - 1)];
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;

                for j in ku..nn {
                    p = h[(ku, j)] + q * h[(ku + 1, j)];
                    if notlast {
                        p += r * h[(ku + 2, j)];
                        h[(ku + 2, j)] -= p * z;
                    }
                    h[(ku, j)] -= p * x;
                    h[(ku + 1, j)] -= p * y;
                }
                for i in 0..=(n.min(k + 3) as usize) {
                    p = x * h[(i, ku)] + y * h[(i, ku + 1)];
                    if notlast {
                        p += z * h[(i, ku + 2)];
                        h[(i, ku + 2)] -= p * r;
                    }
                    h[(i, ku)] -= p;
                    h[(i, ku + 1)] -= p * q;
                }
                for i in low as usize..=high as usize {
                    p = x * v[(i, ku)] + y * v[(i, ku + 1)];
                    if notlast {
                        p += z * v[(i, ku + 2)];
                        v[(i, ku + 2)] -= p * r;
                    }
                    v[(i, ku)] -= p;
                    v[(i, ku + 1)] -= p * q;
                }
            }
        }
    }

    // Back-substitute the eigenvectors of the quasi-triangular form.
    if norm == 0.0 {
        return Ok(());
    }

    for nv in (0..nn).rev() {
        p = d[nv];
        q = e[nv];

        if q == 0.0 {
            // Real eigenvector.
            let mut l = nv;
            h[(nv, nv)] = 1.0;
            for i in (0..nv).rev() {
                w = h[(i, i)] - p;
                r = 0.0;
                for j in l..=nv {
                    r += h[(i, j)] * h[(j, nv)];
                }
                if e[i] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[i] == 0.0 {
                        h[(i, nv)] = if w != 0.0 { -r / w } else { -r / (eps * norm) };
                    } else {
                        // Solve the 2x2 real block.
                        x = h[(i, i + 1)];
                        y = h[(i + 1, i)];
                        q = (d[i] - p) * (d[i] - p) + e[i] * e[i];
                        let t = (x * s - z * r) / q;
                        h[(i, nv)] = t;
                        h[(i + 1, nv)] = if x.abs() > z.abs() {
                            (-r - w * t) / x
                        } else {
                            (-s - y * t) / z
                        };
                    }
                    // Overflow control.
                    let t = h[(i, nv)].abs();
                    if (eps * t) * t > 1.0 {
                        for j in i..=nv {
                            h[(j, nv)] /= t;
                        }
                    }
                }
            }
        } else if q < 0.0 {
            // Complex eigenvector (stored in columns nv-1 and nv).
            let mut l = nv - 1;

            if h[(nv, nv - 1)].abs() > h[(nv - 1, nv)].abs() {
                h[(nv - 1, nv - 1)] = q / h[(nv, nv - 1)];
                h[(nv - 1, nv)] = -(h[(nv, nv)] - p) / h[(nv, nv - 1)];
            } else {
                let (re, im) = cdiv(0.0, -h[(nv - 1, nv)], h[(nv - 1, nv - 1)] - p, q);
                h[(nv - 1, nv - 1)] = re;
                h[(nv - 1, nv)] = im;
            }
            h[(nv, nv - 1)] = 0.0;
            h[(nv, nv)] = 1.0;
            for i in (0..nv.saturating_sub(1)).rev() {
                let mut ra = 0.0;
                let mut sa = 0.0;
                for j in l..=nv {
                    ra += h[(i, j)] * h[(j, nv - 1)];
                    sa += h[(i, j)] * h[(j, nv)];
                }
                w = h[(i, i)] - p;

                if e[i] < 0.0 {
                    z = w;
                    r = ra;
                    s = sa;
                } else {
                    l = i;
                    if e[i] == 0.0 {
                        let (re, im) = cdiv(-ra, -sa, w, q);
                        h[(i, nv - 1)] = re;
                        h[(i, nv)] = im;
                    } else {
                        x = h[(i, i + 1)];
                        y = h[(i + 1, i)];
                        let mut vr = (d[i] - p) * (d[i] - p) + e[i] * e[i] - q * q;
                        let vi = (d[i] - p) * 2.0 * q;
                        if vr == 0.0 && vi == 0.0 {
                            vr = eps * norm * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                        }
                        let (re, im) =
                            cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                        h[(i, nv - 1)] = re;
                        h[(i, nv)] = im;
                        if x.abs() > z.abs() + q.abs() {
                            h[(i + 1, nv - 1)] =
                                (-ra - w * h[(i, nv - 1)] + q * h[(i, nv)]) / x;
                            h[(i + 1, nv)] = (-sa - w * h[(i, nv)] - q * h[(i, nv - 1)]) / x;
                        } else {
                            let (re, im) =
                                cdiv(-r - y * h[(i, nv - 1)], -s - y * h[(i, nv)], z, q);
                            h[(i + 1, nv - 1)] = re;
                            h[(i + 1, nv)] = im;
                        }
                    }
                    // Overflow control.
                    let t = h[(i, nv - 1)].abs().max(h[(i, nv)].abs());
                    if (eps * t) * t > 1.0 {
                        for j in i..=nv {
                            h[(j, nv - 1)] /= t;
                            h[(j, nv)] /= t;
                        }
                    }
                }
            }
        }
    }

    // Multiply by the accumulated similarity to recover eigenvectors of the
    // original matrix.
    for j in (0..nn).rev() {
        for i in 0..nn {
            z = 0.0;
            for k in 0..=j {
                z += v[(i, k)] * h[(k, j)];
            }
            v[(i, j)] = z;
        }
    }

    Ok(())
}

fn eig_core(a: &Mat) -> Result<EigCore> {
    let n = a.rows();
    let mut h = a.clone();
    let mut v = Mat::identity(n);
    reduce_to_hessenberg(&mut h, &mut v);
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    hqr2(&mut h, &mut v, &mut d, &mut e)?;
    Ok(EigCore { d, e, v })
}

/// Expand the compressed real eigenvector storage into explicit unit-norm
/// complex columns.
fn complex_columns(core: &EigCore) -> Vec<Vec<C64>> {
    let n = core.d.len();
    let mut cols = Vec::with_capacity(n);
    let mut k = 0;
    while k < n {
        if core.e[k] == 0.0 {
            let col: Vec<C64> = (0..n).map(|i| C64::new(core.v[(i, k)], 0.0)).collect();
            cols.push(normalize(col));
            k += 1;
        } else {
            // Conjugate pair: v = re +/- i*im from columns k, k+1.
            let plus: Vec<C64> = (0..n)
                .map(|i| C64::new(core.v[(i, k)], core.v[(i, k + 1)]))
                .collect();
            let minus: Vec<C64> = (0..n)
                .map(|i| C64::new(core.v[(i, k)], -core.v[(i, k + 1)]))
                .collect();
            cols.push(normalize(plus));
            cols.push(normalize(minus));
            k += 2;
        }
    }
    cols
}

fn normalize(mut v: Vec<C64>) -> Vec<C64> {
    let norm = v.iter().map(|c| c.re * c.re + c.im * c.im).sum::<f64>().sqrt();
    if norm > 0.0 {
        for c in &mut v {
            *c = c.scale(1.0 / norm);
        }
    }
    v
}

fn residual(a: &Mat, lambda: C64, v: &[C64]) -> f64 {
    let n = a.rows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            acc = acc.add(v[j].scale(a[(i, j)]));
        }
        let lv = lambda.mul(v[i]);
        worst = worst.max(acc.sub(lv).abs());
    }
    worst
}

/// Full eigendecomposition of a square real matrix.
///
/// Right eigenvectors come from the QR iteration on `a`; left eigenvectors
/// from the iteration on `a^T`, matched to the right eigenvalues within a
/// pairing tolerance. Degraded accuracy (defective or near-defective input)
/// is flagged rather than treated as failure.
pub fn eig(a: &Mat) -> Result<ComplexSpectrum> {
    if a.rows() != a.cols() {
        return Err(Error::InvalidArgument(format!(
            "eig requires a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::InvalidArgument("eig input has non-finite entries".into()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(ComplexSpectrum {
            eigenvalues: vec![],
            right_vectors: vec![],
            left_vectors: vec![],
            degraded: false,
        });
    }

    let core = eig_core(a)?;
    let eigenvalues: Vec<C64> = core
        .d
        .iter()
        .zip(&core.e)
        .map(|(&re, &im)| C64::new(re, im))
        .collect();
    let right_vectors = complex_columns(&core);

    let t_core = eig_core(&a.transpose())?;
    let t_values: Vec<C64> = t_core
        .d
        .iter()
        .zip(&t_core.e)
        .map(|(&re, &im)| C64::new(re, im))
        .collect();
    let t_vectors = complex_columns(&t_core);

    // Match each eigenvalue of a to the nearest unused eigenvalue of a^T.
    let scale = a.frob_norm().max(f64::MIN_POSITIVE);
    let mut used = vec![false; n];
    let mut left_vectors = Vec::with_capacity(n);
    let mut degraded = false;
    for lam in &eigenvalues {
        let mut best: Option<(usize, f64)> = None;
        for (j, tv) in t_values.iter().enumerate() {
            if used[j] {
                continue;
            }
            let dist = lam.sub(*tv).abs();
            if best.is_none_or(|(_, bd)| dist < bd) {
                best = Some((j, dist));
            }
        }
        let (j, dist) = best.expect("same eigenvalue count");
        used[j] = true;
        if dist > 1e-6 * scale.max(1.0) {
            degraded = true;
        }
        left_vectors.push(t_vectors[j].clone());
    }

    // Residual check; a failed bound flags degraded accuracy.
    let tol = 1e-8 * scale;
    for (lam, v) in eigenvalues.iter().zip(&right_vectors) {
        if residual(a, *lam, v) > tol {
            degraded = true;
            break;
        }
    }

    // A (near-)defective matrix yields nearly parallel eigenvectors for
    // nearly equal eigenvalues; the residual alone cannot see that.
    'outer: for i in 0..n {
        for j in (i + 1)..n {
            if eigenvalues[i].sub(eigenvalues[j]).abs() > 1e-6 * scale.max(1.0) {
                continue;
            }
            let mut dot = C64::new(0.0, 0.0);
            for (a, b) in right_vectors[i].iter().zip(&right_vectors[j]) {
                dot = dot.add(a.conj().mul(*b));
            }
            if dot.abs() > 1.0 - 1e-6 {
                degraded = true;
                break 'outer;
            }
        }
    }

    Ok(ComplexSpectrum {
        eigenvalues,
        right_vectors,
        left_vectors,
        degraded,
    })
}

impl ComplexSpectrum {
    /// Largest eigenvalue magnitude.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max)
    }
}
