//! Classical multi-machine swing dynamics on a Kron-reduced network.
//!
//! State layout is `[delta_1..delta_n, omega_1..omega_n]`. Since only angle
//! differences matter, recorded observables use generator 1 as the reference:
//! `[delta_i - delta_1, omega_i - omega_1]` for `i >= 2`, giving
//! `p = 2 (n - 1)` observables per sample.

use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::numerics::{Mat, Rng};
use serde::{Deserialize, Serialize};

/// Kron-reduced generator and network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingParams {
    pub n_gen: usize,
    /// Rotational inertia per machine.
    pub m: Vec<f64>,
    /// Damping per machine.
    pub d: Vec<f64>,
    /// Mechanical power input per machine.
    pub p_m: Vec<f64>,
    /// Internal voltage magnitude per machine.
    pub v: Vec<f64>,
    /// Transfer conductances (symmetric; zero where no line exists).
    pub g: Mat,
    /// Transfer susceptances (symmetric; zero where no line exists).
    pub b: Mat,
    /// Operating-point angles the bundled trajectories ring down to.
    pub delta_op: Vec<f64>,
    /// Operating-point speeds (normally zero).
    pub omega_op: Vec<f64>,
}

impl SwingParams {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_gen;
        if n < 2 {
            return Err(Error::InvalidArgument("need at least 2 generators".into()));
        }
        for (name, arr) in [
            ("m", &self.m),
            ("d", &self.d),
            ("p_m", &self.p_m),
            ("v", &self.v),
            ("delta", &self.delta_op),
            ("omega", &self.omega_op),
        ] {
            if arr.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "array {name} has length {}, expected {n}",
                    arr.len()
                )));
            }
        }
        if self.m.iter().any(|&mi| mi.is_nan() || mi <= 0.0) {
            return Err(Error::InvalidArgument("inertias must be > 0".into()));
        }
        if self.d.iter().any(|&di| di < 0.0) {
            return Err(Error::InvalidArgument("damping must be >= 0".into()));
        }
        for (name, mat) in [("g", &self.g), ("b", &self.b)] {
            if mat.rows() != n || mat.cols() != n {
                return Err(Error::InvalidArgument(format!("matrix {name} must be {n}x{n}")));
            }
            let asym = mat.sub(&mat.transpose()).max_abs();
            if asym > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "matrix {name} is not symmetric (max asymmetry {asym:.3e})"
                )));
            }
        }
        Ok(())
    }

    /// Full operating-point state `[delta ; omega]`.
    pub fn operating_state(&self) -> Vec<f64> {
        let mut s = self.delta_op.clone();
        s.extend_from_slice(&self.omega_op);
        s
    }

    /// Observable dimension under the reference-angle convention.
    pub fn observable_dim(&self) -> usize {
        2 * (self.n_gen - 1)
    }
}

/// Swing equation right-hand side over `[delta ; omega]`.
pub fn swing_rhs(params: &SwingParams, state: &[f64]) -> Vec<f64> {
    let n = params.n_gen;
    debug_assert_eq!(state.len(), 2 * n);
    let (delta, omega) = state.split_at(n);
    let mut out = vec![0.0; 2 * n];
    out[..n].copy_from_slice(omega);
    for i in 0..n {
        // Electrical output: V_i sum_j V_j (G_ij cos(d_i - d_j) + B_ij sin(d_i - d_j)).
        let mut pe = 0.0;
        for j in 0..n {
            let dd = delta[i] - delta[j];
            pe += params.v[j] * (params.g[(i, j)] * dd.cos() + params.b[(i, j)] * dd.sin());
        }
        pe *= params.v[i];
        out[n + i] = (-params.d[i] * omega[i] + params.p_m[i] - pe) / params.m[i];
    }
    out
}

/// Add i.i.d. uniform `[-delta_scale, delta_scale]` disturbances to each
/// angle component, leaving the speed components untouched.
pub fn perturbed_swing_ic(base: &[f64], rng: &mut Rng, delta_scale: f64) -> Vec<f64> {
    assert!(delta_scale >= 0.0, "delta_scale must be >= 0");
    assert!(base.len().is_multiple_of(2), "state must be [delta ; omega]");
    let n = base.len() / 2;
    let mut out = base.to_vec();
    for item in out.iter_mut().take(n) {
        *item += rng.uniform_in(-delta_scale, delta_scale);
    }
    out
}

/// Integrate the swing dynamics and record reference-relative observables
/// `[delta_i - delta_1, omega_i - omega_1]` for `i >= 2`.
pub fn simulate_swing(
    params: &SwingParams,
    x0: &[f64],
    dt: f64,
    steps: usize,
    substeps: usize,
) -> Result<Trajectory> {
    let n = params.n_gen;
    if x0.len() != 2 * n {
        return Err(Error::InvalidArgument(format!(
            "state has dim {}, expected {}",
            x0.len(),
            2 * n
        )));
    }
    if dt.is_nan() || dt <= 0.0 || substeps == 0 || steps < 2 {
        return Err(Error::InvalidArgument(
            "need dt > 0, substeps >= 1, steps >= 2".into(),
        ));
    }
    let rhs = |s: &[f64]| swing_rhs(params, s);
    let h = dt / substeps as f64;
    let mut x = x0.to_vec();
    let observe = |x: &[f64]| -> Vec<f64> {
        let mut row = Vec::with_capacity(2 * (n - 1));
        for i in 1..n {
            row.push(x[i] - x[0]);
        }
        for i in 1..n {
            row.push(x[n + i] - x[n]);
        }
        row
    };
    let mut rows = Vec::with_capacity(steps);
    rows.push(observe(&x));
    for step in 1..steps {
        for _ in 0..substeps {
            x = crate::numerics::rk4_step(&rhs, &x, h).map_err(|_| Error::SimulationDiverged {
                step,
                time: step as f64 * dt,
            })?;
        }
        rows.push(observe(&x));
    }
    Trajectory::new(dt, Mat::from_rows(&rows)?)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SwingFile {
    schema: String,
    n_gen: usize,
    m: Vec<f64>,
    d: Vec<f64>,
    p_m: Vec<f64>,
    v: Vec<f64>,
    g: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    operating_point: OperatingPoint,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatingPoint {
    delta: Vec<f64>,
    omega: Vec<f64>,
}

/// Parse swing parameters from the documented TOML schema.
pub fn swing_params_from_toml(text: &str) -> Result<SwingParams> {
    let file: SwingFile =
        toml::from_str(text).map_err(|e| Error::Parse(format!("swing params: {e}")))?;
    if file.schema != "swing-params-v1" {
        return Err(Error::Parse(format!(
            "unsupported swing params schema {:?}",
            file.schema
        )));
    }
    let params = SwingParams {
        n_gen: file.n_gen,
        m: file.m,
        d: file.d,
        p_m: file.p_m,
        v: file.v,
        g: Mat::from_rows(&file.g)?,
        b: Mat::from_rows(&file.b)?,
        delta_op: file.operating_point.delta,
        omega_op: file.operating_point.omega,
    };
    params.validate()?;
    Ok(params)
}

/// Serialize swing parameters into the documented TOML schema.
pub fn swing_params_to_toml(params: &SwingParams) -> Result<String> {
    let file = SwingFile {
        schema: "swing-params-v1".into(),
        n_gen: params.n_gen,
        m: params.m.clone(),
        d: params.d.clone(),
        p_m: params.p_m.clone(),
        v: params.v.clone(),
        g: (0..params.n_gen).map(|i| params.g.row(i).to_vec()).collect(),
        b: (0..params.n_gen).map(|i| params.b.row(i).to_vec()).collect(),
        operating_point: OperatingPoint {
            delta: params.delta_op.clone(),
            omega: params.omega_op.clone(),
        },
    };
    toml::to_string(&file).map_err(|e| Error::Parse(format!("swing params encode: {e}")))
}

/// The bundled representative reduced 10-generator system.
pub fn bundled_swing_10gen() -> SwingParams {
    swing_params_from_toml(include_str!("../../data/swing10.toml"))
        .expect("bundled swing10.toml is valid")
}
