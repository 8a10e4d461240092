//! Multi-step forecasting from a single root point, error curves, operator
//! spectra and eigenfunctions, and dictionary basis-response sweeps.

use crate::edmd::{reconstruct, KoopmanModel};
use crate::error::{Error, Result};
use crate::numerics::{eig, C64, Mat};
use crate::systems::Trajectory;
use serde::{Deserialize, Serialize};

/// How the forecast advances in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastMode {
    /// Advance in lifted space: z_{t+1} = K z_t, reconstruct each step.
    Lifted,
    /// Reconstruct, then re-lift the reconstruction each step.
    Relift,
}

/// Forecast output; row 0 is the root point itself.
#[derive(Debug, Clone)]
pub struct ForecastResult {
    /// (steps + 1) x p predicted observables (truncated on divergence).
    pub predicted: Mat,
    /// Matching truth rows when available.
    pub truth: Option<Mat>,
    pub mode: ForecastMode,
    /// Index of the root sample within its source trajectory.
    pub root_index: usize,
    /// First step at which the iterate became non-finite (or unliftable),
    /// if any; `predicted` stops just before it.
    pub diverged_at: Option<usize>,
}

impl ForecastResult {
    pub fn steps_produced(&self) -> usize {
        self.predicted.rows() - 1
    }
}

/// Roll a model forward `steps` steps from a single root observable.
pub fn forecast(
    model: &KoopmanModel,
    y0: &[f64],
    steps: usize,
    mode: ForecastMode,
) -> Result<ForecastResult> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if y0.len() != model.p {
        return Err(Error::InvalidArgument(format!(
            "root point has dim {}, model expects {}",
            y0.len(),
            model.p
        )));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    rows.push(y0.to_vec());
    let mut diverged_at = None;

    match mode {
        ForecastMode::Lifted => {
            let mut z = model.dictionary.lift(y0)?;
            for t in 1..=steps {
                z = model.k.matvec(&z);
                if z.iter().any(|v| !v.is_finite()) {
                    diverged_at = Some(t);
                    break;
                }
                rows.push(reconstruct(model, &z));
            }
        }
        ForecastMode::Relift => {
            let mut y = y0.to_vec();
            for t in 1..=steps {
                let lifted = match model.dictionary.lift(&y) {
                    Ok(l) => l,
                    Err(_) => {
                        diverged_at = Some(t);
                        break;
                    }
                };
                let z = model.k.matvec(&lifted);
                if z.iter().any(|v| !v.is_finite()) {
                    diverged_at = Some(t);
                    break;
                }
                y = reconstruct(model, &z);
                rows.push(y.clone());
            }
        }
    }

    Ok(ForecastResult {
        predicted: Mat::from_rows(&rows)?,
        truth: None,
        mode,
        root_index: 0,
        diverged_at,
    })
}

/// Forecast against a truth trajectory, rooted at `root_index`.
pub fn forecast_against(
    model: &KoopmanModel,
    truth: &Trajectory,
    root_index: usize,
    steps: usize,
    mode: ForecastMode,
) -> Result<ForecastResult> {
    if root_index + steps >= truth.len() {
        return Err(Error::InvalidArgument(format!(
            "root {root_index} + steps {steps} exceeds trajectory length {}",
            truth.len()
        )));
    }
    let mut result = forecast(model, truth.sample(root_index), steps, mode)?;
    let rows: Vec<Vec<f64>> = (0..result.predicted.rows())
        .map(|t| truth.sample(root_index + t).to_vec())
        .collect();
    result.truth = Some(Mat::from_rows(&rows)?);
    result.root_index = root_index;
    Ok(result)
}

/// Per-step relative 2-norm error for steps 1..=steps_produced.
pub fn forecast_error_curve(result: &ForecastResult) -> Result<Vec<f64>> {
    let truth = result
        .truth
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("forecast has no truth columns".into()))?;
    if truth.rows() != result.predicted.rows() {
        return Err(Error::InvalidArgument(
            "truth and prediction lengths differ".into(),
        ));
    }
    let mut curve = Vec::with_capacity(result.predicted.rows() - 1);
    for t in 1..result.predicted.rows() {
        let pred = result.predicted.row(t);
        let actual = truth.row(t);
        let num = pred
            .iter()
            .zip(actual)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den = actual.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-12;
        curve.push(num / den);
    }
    Ok(curve)
}

/// Eigenvalues, modes (right eigenvectors of K), and eigenfunction weights
/// (left eigenvectors: phi_i(y) = w_i . psi(y)).
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<C64>,
    pub modes: Vec<Vec<C64>>,
    pub eigenfunction_weights: Vec<Vec<C64>>,
    pub degraded: bool,
}

/// Eigendecomposition of the learned operator.
pub fn spectrum(model: &KoopmanModel) -> Result<SpectrumReport> {
    let s = eig(&model.k)?;
    Ok(SpectrumReport {
        eigenvalues: s.eigenvalues,
        modes: s.right_vectors,
        eigenfunction_weights: s.left_vectors,
        degraded: s.degraded,
    })
}

/// Evaluate the i-th approximate Koopman eigenfunction at an observable.
pub fn eigenfunction_eval(
    model: &KoopmanModel,
    report: &SpectrumReport,
    i: usize,
    y: &[f64],
) -> Result<C64> {
    if i >= report.eigenvalues.len() {
        return Err(Error::InvalidArgument(format!(
            "mode index {i} out of range {}",
            report.eigenvalues.len()
        )));
    }
    let lifted = model.dictionary.lift(y)?;
    let w = &report.eigenfunction_weights[i];
    let mut acc = C64::new(0.0, 0.0);
    for (wk, &lk) in w.iter().zip(&lifted) {
        acc = acc.add(wk.scale(lk));
    }
    Ok(acc)
}

/// Dictionary responses along one observable axis.
#[derive(Debug, Clone)]
pub struct BasisSweepReport {
    pub swept_dim: usize,
    /// Strictly increasing perturbation offsets.
    pub grid: Vec<f64>,
    /// n_points x m dictionary outputs.
    pub responses: Mat,
}

/// Evaluate the dictionary at `center + t e_dim` for `n_points` values of t
/// on `[-radius, radius]`.
pub fn basis_sweep(
    model: &KoopmanModel,
    dim: usize,
    center: &[f64],
    radius: f64,
    n_points: usize,
) -> Result<BasisSweepReport> {
    if n_points < 2 {
        return Err(Error::InvalidArgument("n_points must be >= 2".into()));
    }
    if dim >= model.p {
        return Err(Error::InvalidArgument(format!(
            "swept dim {dim} out of range for p = {}",
            model.p
        )));
    }
    if center.len() != model.p {
        return Err(Error::InvalidArgument("center has wrong dimension".into()));
    }
    let mut grid = Vec::with_capacity(n_points);
    let mut rows = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let t = -radius + 2.0 * radius * k as f64 / (n_points - 1) as f64;
        let mut y = center.to_vec();
        y[dim] += t;
        rows.push(model.dictionary.lift(&y)?);
        grid.push(t);
    }
    Ok(BasisSweepReport {
        swept_dim: dim,
        grid,
        responses: Mat::from_rows(&rows)?,
    })
}

/// Dominant oscillation period by zero crossings of the mean-removed signal:
/// twice the mean spacing between consecutive crossings.
///
/// Crossing times are linearly interpolated between samples. Fails with
/// `NotOscillatory` below 4 crossings.
pub fn dominant_period(series: &[f64], dt: f64) -> Result<f64> {
    if series.len() < 4 {
        return Err(Error::InvalidArgument("series too short".into()));
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let mut crossings = Vec::new();
    for t in 1..series.len() {
        let a = series[t - 1] - mean;
        let b = series[t] - mean;
        if a == 0.0 {
            continue;
        }
        if a * b < 0.0 {
            // linear interpolation of the crossing instant
            let frac = a / (a - b);
            crossings.push((t as f64 - 1.0 + frac) * dt);
        }
    }
    if crossings.len() < 4 {
        return Err(Error::NotOscillatory(format!(
            "only {} mean crossings; need at least 4",
            crossings.len()
        )));
    }
    let spacings: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_spacing = spacings.iter().sum::<f64>() / spacings.len() as f64;
    Ok(2.0 * mean_spacing)
}

fn fmt(x: f64) -> String {
    crate::systems::fmt_full(x)
}

/// Forecast CSV: `t, yhat1..yhatp[, ytrue1..ytruep]`, one row per step.
pub fn forecast_to_csv<W: std::io::Write>(
    result: &ForecastResult,
    dt: f64,
    w: &mut W,
) -> Result<()> {
    let p = result.predicted.cols();
    let mut header: Vec<String> = std::iter::once("t".into())
        .chain((1..=p).map(|j| format!("yhat{j}")))
        .collect();
    if result.truth.is_some() {
        header.extend((1..=p).map(|j| format!("ytrue{j}")));
    }
    writeln!(w, "{}", header.join(","))?;
    for t in 0..result.predicted.rows() {
        let mut fields = vec![fmt((result.root_index + t) as f64 * dt)];
        fields.extend(result.predicted.row(t).iter().map(|&v| fmt(v)));
        if let Some(truth) = &result.truth {
            fields.extend(truth.row(t).iter().map(|&v| fmt(v)));
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Error-curve CSV: `step, rel_error`.
pub fn error_curve_to_csv<W: std::io::Write>(curve: &[f64], w: &mut W) -> Result<()> {
    writeln!(w, "step,rel_error")?;
    for (i, e) in curve.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, fmt(*e))?;
    }
    Ok(())
}

/// Spectrum CSV: `re, im, abs`, one row per eigenvalue.
pub fn spectrum_to_csv<W: std::io::Write>(report: &SpectrumReport, w: &mut W) -> Result<()> {
    writeln!(w, "re,im,abs")?;
    for lam in &report.eigenvalues {
        writeln!(w, "{},{},{}", fmt(lam.re), fmt(lam.im), fmt(lam.abs()))?;
    }
    Ok(())
}

/// Sweep CSV: `t, psi1..psim`.
pub fn sweep_to_csv<W: std::io::Write>(report: &BasisSweepReport, w: &mut W) -> Result<()> {
    let m = report.responses.cols();
    let header: Vec<String> = std::iter::once("t".into())
        .chain((1..=m).map(|j| format!("psi{j}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (k, &t) in report.grid.iter().enumerate() {
        let mut fields = vec![fmt(t)];
        fields.extend(report.responses.row(k).iter().map(|&v| fmt(v)));
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}
