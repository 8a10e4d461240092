//! Polynomial lifting maps for extended DMD, sharing a uniform dictionary
//! interface with the neural dictionary.
//!
//! Every lifted vector starts with the raw observables themselves (the
//! identity prefix), so the reconstruction map back to observables is pure
//! coordinate selection for either dictionary kind.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default cap on dictionary size; exceeding it is an explicit error rather
/// than a crash deep inside the solver.
pub const DEFAULT_DICT_CAP: usize = 20_000;

/// Polynomial basis family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolyFamily {
    Legendre,
    Monomial,
}

/// Declarative description of a polynomial lifting map.
///
/// `domain_box` gives per-coordinate (lo, hi) bounds used to affinely rescale
/// inputs into [-1, 1] for Legendre evaluation; it is required for the
/// Legendre family and optional (a plain range check) for monomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyDictSpec {
    pub family: PolyFamily,
    pub input_dim: usize,
    pub max_total_degree: usize,
    pub domain_box: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_DICT_CAP
}

/// Multi-indices with total degree <= d, in graded lexicographic order.
///
/// The first element is always the zero tuple (the constant function).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    pub indices: Vec<Vec<usize>>,
}

/// Binomial coefficient, computed without overflow for the sizes in play.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result = 1usize;
    for i in 0..k {
        result = result * (n - i) / (i + 1);
    }
    result
}

/// All multi-indices alpha in p variables with total degree <= d, graded
/// lexicographic: ascending total degree, descending lexicographic within a
/// degree. Count is C(p + d, d).
pub fn multi_indices(p: usize, d: usize, cap: usize) -> Result<MultiIndexSet> {
    assert!(p >= 1 && d >= 1, "multi_indices requires p >= 1, d >= 1");
    let count = binomial(p + d, d);
    if count > cap {
        return Err(Error::DictionaryTooLarge { size: count, cap });
    }

    let mut indices = Vec::with_capacity(count);
    let mut current = vec![0usize; p];
    for degree in 0..=d {
        emit_degree(&mut indices, &mut current, 0, degree);
    }
    debug_assert_eq!(indices.len(), count);
    Ok(MultiIndexSet { indices })
}

/// Emit all tuples of exact total degree `remaining` over positions
/// `pos..p`, assigning higher leading entries first (descending lex).
fn emit_degree(out: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, pos: usize, remaining: usize) {
    if pos == current.len() - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        current[pos] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        emit_degree(out, current, pos + 1, remaining - k);
    }
    current[pos] = 0;
}

/// Legendre polynomial P_k at x in [-1, 1] via the three-term recurrence
/// (k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}.
pub fn legendre_eval(k: usize, x: f64) -> Result<f64> {
    if x.abs() > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "Legendre argument {x} outside [-1, 1]"
        )));
    }
    let x = x.clamp(-1.0, 1.0);
    if k == 0 {
        return Ok(1.0);
    }
    let mut prev = 1.0;
    let mut cur = x;
    for j in 1..k {
        let next = ((2 * j + 1) as f64 * x * cur - j as f64 * prev) / (j + 1) as f64;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

impl PolyDictSpec {
    /// Legendre spec with a domain box.
    pub fn legendre(input_dim: usize, max_total_degree: usize, domain_box: Vec<(f64, f64)>) -> Self {
        Self {
            family: PolyFamily::Legendre,
            input_dim,
            max_total_degree,
            domain_box: Some(domain_box),
            cap: DEFAULT_DICT_CAP,
        }
    }

    /// Monomial spec; no rescaling, unbounded domain.
    pub fn monomial(input_dim: usize, max_total_degree: usize) -> Self {
        Self {
            family: PolyFamily::Monomial,
            input_dim,
            max_total_degree,
            domain_box: None,
            cap: DEFAULT_DICT_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be >= 1".into()));
        }
        if self.max_total_degree == 0 {
            return Err(Error::InvalidArgument("max_total_degree must be >= 1".into()));
        }
        match &self.domain_box {
            Some(bx) => {
                if bx.len() != self.input_dim {
                    return Err(Error::InvalidArgument(format!(
                        "domain_box has {} entries for input_dim {}",
                        bx.len(),
                        self.input_dim
                    )));
                }
                for (i, &(lo, hi)) in bx.iter().enumerate() {
                    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                        return Err(Error::InvalidArgument(format!(
                            "domain_box coordinate {i}: need finite lo < hi, got ({lo}, {hi})"
                        )));
                    }
                }
            }
            None => {
                if self.family == PolyFamily::Legendre {
                    return Err(Error::InvalidArgument(
                        "Legendre dictionary requires a domain_box".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Lifted dimension: p + C(p + d, d). Errors when over the cap.
    pub fn lifted_dim(&self) -> Result<usize> {
        let basis = binomial(self.input_dim + self.max_total_degree, self.max_total_degree);
        if basis > self.cap {
            return Err(Error::DictionaryTooLarge {
                size: basis,
                cap: self.cap,
            });
        }
        Ok(self.input_dim + basis)
    }

    /// Rescale coordinate `i` into [-1, 1] using the domain box.
    fn rescale(&self, i: usize, y: f64) -> f64 {
        match &self.domain_box {
            Some(bx) => {
                let (lo, hi) = bx[i];
                2.0 * (y - lo) / (hi - lo) - 1.0
            }
            None => y,
        }
    }

    /// Check a point against the domain box, identifying the first offending
    /// coordinate. Tolerance: 1e-12 of the box width per coordinate.
    pub fn check_domain(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.input_dim {
            return Err(Error::InvalidArgument(format!(
                "input has dim {}, dictionary expects {}",
                y.len(),
                self.input_dim
            )));
        }
        if let Some(bx) = &self.domain_box {
            for (i, (&yi, &(lo, hi))) in y.iter().zip(bx).enumerate() {
                let tol = 1e-12 * (hi - lo);
                if yi < lo - tol || yi > hi + tol {
                    return Err(Error::InvalidArgument(format!(
                        "coordinate {i} = {yi} outside domain box [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Lift one observable vector: `[y ; basis values over the multi-index
    /// set]`. The first `input_dim` outputs are `y` exactly.
    pub fn lift(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_domain(y)?;
        let set = multi_indices(self.input_dim, self.max_total_degree, self.cap)?;
        Ok(self.lift_with(&set, y))
    }

    /// Lift against a precomputed multi-index set (the hot path for snapshot
    /// building; avoids re-enumerating indices per sample).
    pub fn lift_with(&self, set: &MultiIndexSet, y: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.input_dim + set.indices.len());
        out.extend_from_slice(y);

        // Per-coordinate factor table: factors[i][k] = basis_k(y_i).
        let d = self.max_total_degree;
        let mut factors = vec![vec![0.0; d + 1]; self.input_dim];
        for i in 0..self.input_dim {
            match self.family {
                PolyFamily::Legendre => {
                    let x = self.rescale(i, y[i]).clamp(-1.0, 1.0);
                    factors[i][0] = 1.0;
                    if d >= 1 {
                        factors[i][1] = x;
                    }
                    let mut prev = 1.0;
                    let mut cur = x;
                    for k in 1..d {
                        let next =
                            ((2 * k + 1) as f64 * x * cur - k as f64 * prev) / (k + 1) as f64;
                        prev = cur;
                        cur = next;
                        factors[i][k + 1] = cur;
                    }
                }
                PolyFamily::Monomial => {
                    let mut pw = 1.0;
                    for f in factors[i].iter_mut() {
                        *f = pw;
                        pw *= y[i];
                    }
                }
            }
        }

        for alpha in &set.indices {
            let mut v = 1.0;
            for (i, &k) in alpha.iter().enumerate() {
                if k > 0 {
                    v *= factors[i][k];
                }
            }
            out.push(v);
        }
        out
    }

    /// Fit a domain box from training data: per-coordinate min/max widened by
    /// a 10% margin on each side.
    pub fn fit_domain_box<'a>(samples: impl Iterator<Item = &'a [f64]>, p: usize) -> Vec<(f64, f64)> {
        let mut lo = vec![f64::INFINITY; p];
        let mut hi = vec![f64::NEG_INFINITY; p];
        for s in samples {
            for i in 0..p {
                lo[i] = lo[i].min(s[i]);
                hi[i] = hi[i].max(s[i]);
            }
        }
        lo.iter()
            .zip(&hi)
            .map(|(&l, &h)| {
                let width = (h - l).max(1e-9);
                (l - 0.1 * width, h + 0.1 * width)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_base_cases() {
        assert_eq!(legendre_eval(0, 0.3).unwrap(), 1.0);
        assert_eq!(legendre_eval(1, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn legendre_p2_via_closed_form() {
        // (3x^2 - 1)/2 at 0.5 = -0.125
        assert!((legendre_eval(2, 0.5).unwrap() + 0.125).abs() < 1e-15);
    }

    #[test]
    fn legendre_endpoint_identity() {
        for k in 0..8 {
            assert!((legendre_eval(k, 1.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn legendre_domain_violation() {
        assert!(legendre_eval(3, 1.1).is_err());
        assert!(legendre_eval(3, 1.0 + 5e-13).is_ok());
    }

    #[test]
    fn legendre_orthogonality_gauss_grid() {
        // 64-point Gauss-Legendre quadrature; nodes by Newton on P_64.
        let (nodes, weights) = gauss_legendre(64);
        for j in 0..=6usize {
            for k in 0..=6usize {
                if j == k {
                    continue;
                }
                let integral: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&x, &w)| {
                        w * legendre_eval(j, x).unwrap() * legendre_eval(k, x).unwrap()
                    })
                    .sum();
                assert!(integral.abs() < 1e-10, "P_{j} P_{k}: {integral}");
            }
        }
    }

    /// Gauss-Legendre nodes and weights by Newton iteration; test oracle only.
    fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Chebyshev-style initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let mut p0 = 1.0;
                let mut p1 = x;
                for k in 1..n {
                    let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            // Recompute the derivative at the converged node for the weight.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 1..n {
                let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    }

    #[test]
    fn multi_indices_p2_d2_by_hand() {
        let set = multi_indices(2, 2, 100).unwrap();
        let expect: Vec<Vec<usize>> = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
        ];
        assert_eq!(set.indices, expect);
    }

    #[test]
    fn multi_indices_counts() {
        assert_eq!(multi_indices(1, 3, 100).unwrap().indices.len(), 4);
        // C(10, 3) = 120
        assert_eq!(multi_indices(7, 3, 1000).unwrap().indices.len(), 120);
        assert_eq!(binomial(10, 3), 120);
    }

    #[test]
    fn multi_indices_cap_enforced() {
        let err = multi_indices(10, 6, 100).unwrap_err();
        match err {
            Error::DictionaryTooLarge { size, cap } => {
                assert_eq!(size, binomial(16, 6));
                assert_eq!(cap, 100);
            }
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn monomial_lift_matches_hand_expansion() {
        let spec = PolyDictSpec::monomial(1, 2);
        // [y ; 1, y, y^2]
        assert_eq!(spec.lift(&[2.0]).unwrap(), vec![2.0, 1.0, 2.0, 4.0]);
    }

    #[test]
    fn identity_prefix_is_bit_exact() {
        let spec = PolyDictSpec::legendre(3, 2, vec![(-2.0, 2.0), (-1.0, 3.0), (0.0, 10.0)]);
        let y = [0.1234567890123, -0.5, 7.25];
        let lifted = spec.lift(&y).unwrap();
        assert_eq!(&lifted[..3], &y);
    }

    #[test]
    fn legendre_lift_matches_per_factor_products() {
        let spec = PolyDictSpec::legendre(2, 2, vec![(-1.0, 1.0), (-1.0, 1.0)]);
        let y = [0.5, -0.5];
        let lifted = spec.lift(&y).unwrap();
        let p = |k: usize, x: f64| legendre_eval(k, x).unwrap();
        // order: y1, y2, then (0,0),(1,0),(0,1),(2,0),(1,1),(0,2)
        let expect = [
            0.5,
            -0.5,
            1.0,
            p(1, 0.5),
            p(1, -0.5),
            p(2, 0.5),
            p(1, 0.5) * p(1, -0.5),
            p(2, -0.5),
        ];
        assert_eq!(lifted.len(), expect.len());
        for (a, b) in lifted.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn lifted_dim_formula() {
        assert_eq!(PolyDictSpec::monomial(1, 2).lifted_dim().unwrap(), 4);
        assert_eq!(PolyDictSpec::monomial(2, 2).lifted_dim().unwrap(), 8);
        assert_eq!(PolyDictSpec::monomial(7, 3).lifted_dim().unwrap(), 127);
    }

    #[test]
    fn domain_violation_names_coordinate() {
        let spec = PolyDictSpec::legendre(2, 2, vec![(-1.0, 1.0), (-1.0, 1.0)]);
        let err = spec.lift(&[0.0, 2.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("coordinate 1"), "{msg}");
    }

    #[test]
    fn fitted_box_covers_data_with_margin() {
        let samples: Vec<Vec<f64>> = vec![vec![0.0, -1.0], vec![2.0, 3.0], vec![1.0, 0.5]];
        let bx = PolyDictSpec::fit_domain_box(samples.iter().map(|s| s.as_slice()), 2);
        assert!(bx[0].0 < 0.0 && bx[0].1 > 2.0);
        assert!(bx[1].0 < -1.0 && bx[1].1 > 3.0);
        assert!((bx[0].0 - (-0.2)).abs() < 1e-12);
        assert!((bx[0].1 - 2.2).abs() < 1e-12);
    }
}
