//! Classical fourth-order Runge-Kutta integration.

use crate::error::{Error, Result};

/// One classical RK4 step of size `h` for the autonomous field `f`.
///
/// Errors with `NumericalFailure` if any stage evaluation is non-finite;
/// callers integrating a trajectory wrap this into a diverged error carrying
/// the step index.
pub fn rk4_step<F>(f: &F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    assert!(h > 0.0, "rk4 step size must be positive");
    let n = x.len();

    let stage = |label: &str, v: Vec<f64>| -> Result<Vec<f64>> {
        if v.len() != n {
            return Err(Error::InvalidArgument(format!(
                "vector field returned length {} for state length {n}",
                v.len()
            )));
        }
        if v.iter().any(|a| !a.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "non-finite RK4 stage {label}"
            )));
        }
        Ok(v)
    };

    let k1 = stage("k1", f(x))?;
    let x2: Vec<f64> = x.iter().zip(&k1).map(|(xi, ki)| xi + 0.5 * h * ki).collect();
    let k2 = stage("k2", f(&x2))?;
    let x3: Vec<f64> = x.iter().zip(&k2).map(|(xi, ki)| xi + 0.5 * h * ki).collect();
    let k3 = stage("k3", f(&x3))?;
    let x4: Vec<f64> = x.iter().zip(&k3).map(|(xi, ki)| xi + h * ki).collect();
    let k4 = stage("k4", f(&x4))?;

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    if out.iter().any(|a| !a.is_finite()) {
        return Err(Error::NumericalFailure("non-finite RK4 update".into()));
    }
    Ok(out)
}
