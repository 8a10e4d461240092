//! Seven-state glycolytic oscillator with Michaelis-Menten kinetics.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Rate constants of the seven-state glycolysis model.
///
/// Defaults are the standard oscillatory parameter set for this model
/// (concentrations in mM, time in minutes). Wrong parameters fail the
/// limit-cycle gate at benchmark time rather than silently producing
/// non-oscillating data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlycolysisParams {
    pub j0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    /// Michaelis constant K1 in the S6 inhibition term.
    pub k_cap1: f64,
    /// Hill exponent q (>= 1).
    pub q: f64,
    /// Total NAD pool N.
    pub n_tot: f64,
    /// Total adenine pool A.
    pub a_tot: f64,
    /// Exchange rate kappa between S4 and the external pool S7.
    pub kappa: f64,
    /// External-pool coupling fraction mu.
    pub mu: f64,
    /// External degradation rate k.
    pub k: f64,
}

impl Default for GlycolysisParams {
    fn default() -> Self {
        Self {
            j0: 2.5,
            k1: 100.0,
            k2: 6.0,
            k3: 16.0,
            k4: 100.0,
            k5: 1.28,
            k6: 12.0,
            k_cap1: 0.52,
            q: 4.0,
            n_tot: 1.0,
            a_tot: 4.0,
            kappa: 13.0,
            mu: 0.1,
            k: 1.8,
        }
    }
}

/// Representative initial-condition box (per-species lo, hi) on which the
/// default parameters settle onto the limit cycle.
pub const GLYCOLYSIS_IC_BOX: [(f64, f64); 7] = [
    (0.15, 1.60),
    (0.19, 2.16),
    (0.04, 0.20),
    (0.10, 0.35),
    (0.08, 0.30),
    (0.14, 2.67),
    (0.05, 0.10),
];

impl GlycolysisParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("j0", self.j0),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k4", self.k4),
            ("k5", self.k5),
            ("k6", self.k6),
            ("k_cap1", self.k_cap1),
            ("n_tot", self.n_tot),
            ("a_tot", self.a_tot),
            ("kappa", self.kappa),
            ("mu", self.mu),
            ("k", self.k),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "glycolysis parameter {name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.q < 1.0 {
            return Err(Error::InvalidArgument(format!("q must be >= 1, got {}", self.q)));
        }
        Ok(())
    }
}

/// Right-hand side of the seven glycolysis rate equations.
pub fn glycolysis_rhs(p: &GlycolysisParams, s: &[f64]) -> Vec<f64> {
    debug_assert_eq!(s.len(), 7);
    let (s1, s2, s3, s4, s5, s6, s7) = (s[0], s[1], s[2], s[3], s[4], s[5], s[6]);
    // Hexokinase flux with Hill inhibition by S6.
    let flux = p.k1 * s1 * s6 / (1.0 + (s6 / p.k_cap1).powf(p.q));
    let nadh = p.k2 * s2 * (p.n_tot - s5);
    let pep = p.k3 * s3 * (p.a_tot - s6);
    vec![
        p.j0 - flux,
        2.0 * flux - nadh - p.k6 * s2 * s5,
        nadh - pep,
        pep - p.k4 * s4 * s5 - p.kappa * (s4 - s7),
        nadh - p.k4 * s4 * s5 - p.k6 * s2 * s5,
        -2.0 * flux + 2.0 * pep - p.k5 * s6,
        p.mu * p.kappa * (s4 - s7) - p.k * s7,
    ]
}
