//! Reproducible benchmark suites: partially observed linear systems, the
//! glycolytic oscillator, and swing dynamics.
//!
//! Each instance generates its data from hierarchically split seeds, runs the
//! oscillation gate where one applies, fits extended DMD over a degree and
//! lambda sweep plus a jointly trained deep model, and reports one-step and
//! multi-step errors. Instances are isolated, so suites run them on worker
//! threads and merge results in a fixed order.

use crate::dictionary::{PolyDictSpec, PolyFamily};
use crate::edmd::{
    build_snapshots, fixed_dictionary_dmd, solve, DictionaryKind, EdmdConfig, KoopmanModel,
    ModelMeta,
};
use crate::error::{Error, Result};
use crate::eval::{forecast_against, forecast_error_curve, ForecastMode, ForecastResult};
use crate::neural::MlpSpec;
use crate::numerics::{Mat, Rng};
use crate::systems::{
    bundled_swing_10gen, damped_oscillation_gate, glycolysis_rhs, limit_cycle_gate, make_dataset,
    perturbed_swing_ic, random_linear_system, simulate_linear, simulate_ode, simulate_swing,
    Dataset, GlycolysisParams, Split, SwingParams, Trajectory, GLYCOLYSIS_IC_BOX,
};
use crate::trainer::{one_step_percent_error, train, KUpdate, TrainConfig, TrainReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Pols,
    Glycolysis,
    Swing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

/// One row of the benchmark table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: String,
    pub instance: String,
    pub train_pct: f64,
    pub test_pct: f64,
    pub wall_time_s: f64,
    pub config_hash: u64,
}

/// A forecast produced during a benchmark run, named for file emission.
#[derive(Debug, Clone)]
pub struct NamedForecast {
    pub name: String,
    pub dt: f64,
    pub result: ForecastResult,
}

/// Multi-step comparison on held-out trajectories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiStepComparison {
    pub steps: usize,
    /// Mean per-step relative error of the deep model, averaged over test
    /// trajectories.
    pub ddmd_mean_err: f64,
    /// Same for the best swept extended-DMD model (minimum over the sweep).
    pub edmd_mean_err: f64,
}

/// Everything one benchmark instance produced.
#[derive(Debug, Clone)]
pub struct InstanceReport {
    pub label: String,
    pub rows: Vec<BenchmarkRow>,
    pub ddmd_train_pct: f64,
    pub ddmd_test_pct: f64,
    /// Minimum test error over the whole EDMD sweep.
    pub edmd_best_test_pct: f64,
    /// Test error of the sweep model selected by training error (the
    /// selection rule the table reports).
    pub edmd_selected_test_pct: f64,
    pub ddmd_model: KoopmanModel,
    pub edmd_selected_model: Option<KoopmanModel>,
    pub ddmd_report: TrainReport,
    pub forecasts: Vec<NamedForecast>,
    pub multi_step: Option<MultiStepComparison>,
    pub notes: Vec<String>,
}

/// Suite output: ordered instance reports plus the config echo that produced
/// them.
#[derive(Debug)]
pub struct SuiteReport {
    pub suite: Suite,
    pub scale: Scale,
    pub seed: u64,
    pub config_echo: String,
    pub instances: Vec<InstanceReport>,
}

fn fnv_hash(text: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Options shared by every instance of a suite run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchOptions {
    pub edmd_degrees: Vec<usize>,
    pub edmd_lambdas: Vec<f64>,
    /// Sweep entries lifting beyond this dimension are skipped with a note;
    /// the regularized solve does not scale past it at desk budgets.
    pub max_sweep_dim: usize,
    /// Neural dictionary hidden-layer width.
    pub mlp_width: usize,
    /// Neural dictionary depth in weight layers.
    pub mlp_depth: usize,
    /// Output-layer width (the learned dictionary size); `None` uses the
    /// hidden width.
    pub mlp_output: Option<usize>,
    pub deep: TrainConfig,
    pub train_fraction: f64,
    /// Multi-step horizon for the forecast comparison.
    pub forecast_steps: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            edmd_degrees: vec![1, 2, 3],
            edmd_lambdas: vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1],
            max_sweep_dim: 400,
            mlp_width: 20,
            mlp_depth: 8,
            mlp_output: None,
            deep: TrainConfig {
                optimizer: crate::trainer::Optimizer::Adam,
                learning_rate: 5e-3,
                batch_size: 64,
                iterations: 60_000,
                dropout_rate: Some(0.0),
                eval_every: 5_000,
                ..TrainConfig::default()
            },
            train_fraction: 0.8,
            forecast_steps: 50,
        }
    }
}

/// Fit the EDMD sweep and return all rows plus the best models.
struct SweepOutcome {
    rows: Vec<BenchmarkRow>,
    selected_model: Option<KoopmanModel>,
    selected_test_pct: f64,
    best_test_pct: f64,
    /// All fitted models with their labels, for multi-step comparison.
    models: Vec<(String, KoopmanModel)>,
    notes: Vec<String>,
}

fn edmd_sweep(
    dataset: &Dataset,
    instance: &str,
    options: &BenchOptions,
    config_hash: u64,
) -> Result<SweepOutcome> {
    let p = dataset.dim();
    let train_pairs = dataset.pairs_in(Split::Train);
    let test_pairs = dataset.pairs_in(Split::Test);
    let domain_box = PolyDictSpec::fit_domain_box(
        dataset
            .trajectories_in(Split::Train)
            .flat_map(|t| (0..t.len()).map(move |i| t.sample(i))),
        p,
    );

    let mut rows = Vec::new();
    let mut notes = Vec::new();
    let mut models = Vec::new();
    let mut selected: Option<(f64, f64, KoopmanModel)> = None; // (train, test, model)
    let mut best_test = f64::INFINITY;

    for &degree in &options.edmd_degrees {
        let spec = PolyDictSpec {
            family: PolyFamily::Legendre,
            input_dim: p,
            max_total_degree: degree,
            domain_box: Some(domain_box.clone()),
            cap: crate::dictionary::DEFAULT_DICT_CAP,
        };
        match spec.lifted_dim() {
            Ok(m) if m > options.max_sweep_dim => {
                notes.push(format!(
                    "{instance}: degree {degree} lifts to {m} > sweep cap {}; skipped",
                    options.max_sweep_dim
                ));
                continue;
            }
            Ok(_) => {}
            Err(Error::DictionaryTooLarge { size, cap }) => {
                notes.push(format!(
                    "{instance}: degree {degree} dictionary of {size} functions exceeds cap {cap}; skipped"
                ));
                continue;
            }
            Err(e) => return Err(e),
        }
        let dictionary = DictionaryKind::Poly { spec };
        let started = std::time::Instant::now();
        let snapshots = build_snapshots(dataset, Split::Train, &dictionary)?;
        let data_hash = snapshots.content_hash();
        for &lambda in &options.edmd_lambdas {
            let solve_started = std::time::Instant::now();
            let result = solve(
                &snapshots,
                &EdmdConfig {
                    lambda,
                    ..EdmdConfig::default()
                },
            )?;
            let model = KoopmanModel {
                k: result.k,
                dictionary: dictionary.clone(),
                p,
                meta: ModelMeta {
                    seed: Some(dataset.seed),
                    config: format!("legendre degree {degree}, lambda {lambda:e}"),
                    data_hash: Some(data_hash),
                    converged: Some(result.converged),
                    method: "edmd".into(),
                },
            };
            let train_pct = one_step_percent_error(&model, &train_pairs)?;
            let test_pct = one_step_percent_error(&model, &test_pairs)?;
            best_test = best_test.min(test_pct);
            let label = format!("{instance}[d{degree},l{lambda:.0e}]");
            rows.push(BenchmarkRow {
                method: "edmd".into(),
                instance: label.clone(),
                train_pct,
                test_pct,
                wall_time_s: started.elapsed().as_secs_f64()
                    + solve_started.elapsed().as_secs_f64(),
                config_hash,
            });
            let better = selected
                .as_ref()
                .is_none_or(|(best_train, _, _)| train_pct < *best_train);
            if better {
                selected = Some((train_pct, test_pct, model.clone()));
            }
            models.push((label, model));
        }
    }

    let (selected_model, selected_test_pct) = match selected {
        Some((train_pct, test_pct, model)) => {
            rows.push(BenchmarkRow {
                method: "edmd-best".into(),
                instance: instance.to_string(),
                train_pct,
                test_pct,
                wall_time_s: 0.0,
                config_hash,
            });
            (Some(model), test_pct)
        }
        None => (None, f64::INFINITY),
    };

    Ok(SweepOutcome {
        rows,
        selected_model,
        selected_test_pct,
        best_test_pct: best_test,
        models,
        notes,
    })
}

/// Mean per-step relative forecast error from the first sample of every test
/// trajectory, averaged across trajectories. Divergence counts as a unit
/// error for the missing steps.
pub fn mean_forecast_error(
    model: &KoopmanModel,
    dataset: &Dataset,
    steps: usize,
    mode: ForecastMode,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for truth in dataset.trajectories_in(Split::Test) {
        let usable = steps.min(truth.len() - 1);
        match forecast_against(model, truth, 0, usable, mode) {
            Ok(fc) => {
                let curve = forecast_error_curve(&fc)?;
                let mut sum: f64 = curve.iter().sum();
                // penalize missing steps at the divergence cap
                sum += (usable - curve.len()) as f64;
                total += sum / usable as f64;
            }
            // an unliftable root scores as a fully wrong forecast
            Err(Error::InvalidArgument(_)) => total += 1.0,
            Err(e) => return Err(e),
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no test trajectories".into()));
    }
    Ok(total / count as f64)
}

fn bench_mlp_spec(p: usize, options: &BenchOptions) -> MlpSpec {
    MlpSpec {
        input_dim: p,
        hidden_widths: vec![options.mlp_width; options.mlp_depth.saturating_sub(1)],
        output_width: options.mlp_output.unwrap_or(options.mlp_width),
        ..MlpSpec::default_for(p)
    }
}

fn deep_row(
    instance: &str,
    method: &str,
    report: &TrainReport,
    config_hash: u64,
) -> BenchmarkRow {
    let last = report
        .loss_curve
        .last()
        .expect("training always evaluates at least once");
    BenchmarkRow {
        method: method.into(),
        instance: instance.into(),
        train_pct: last.train_error_pct,
        test_pct: last.test_error_pct,
        wall_time_s: report.wall_time_s,
        config_hash,
    }
}

/// Options for one POLS instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolsOptions {
    pub oscillatory: bool,
    /// Simulated orbits per system, with initial states drawn as random
    /// mixtures over a small basis of excitation directions (the POLS
    /// analogue of the swing suite's perturbed operating point).
    pub orbits: usize,
    /// Number of excitation directions mixed into each initial state.
    pub excitation_dims: usize,
    /// Amplitude range (lo, hi) for each mixture coefficient.
    pub amplitude_range: (f64, f64),
    /// Samples per contiguous segment; the train/test split is over
    /// segments, so held-out data interleaves in time with training data.
    pub segment_len: usize,
    /// Fraction of states observed; the rest are latent.
    pub observed_fraction: f64,
    /// Lower bound on the observed dimension.
    pub min_observed: usize,
    /// Magnitude the dominant mode decays to by the end of each orbit; sets
    /// the recording horizon from the measured spectral radius.
    pub final_amplitude: f64,
    pub bench: BenchOptions,
}

impl Default for PolsOptions {
    fn default() -> Self {
        Self {
            oscillatory: true,
            orbits: 16,
            excitation_dims: 1,
            amplitude_range: (0.5, 1.5),
            segment_len: 20,
            observed_fraction: 0.625,
            min_observed: 3,
            final_amplitude: 0.2,
            bench: BenchOptions::default(),
        }
    }
}

/// Instance options for one POLS size: wider systems watch a smaller
/// fraction of their states.
pub fn pols_desk_options(n: usize) -> PolsOptions {
    PolsOptions {
        observed_fraction: if n >= 16 { 0.375 } else { 0.5 },
        ..PolsOptions::default()
    }
}

/// Generate the POLS dataset: orbits of one random stable system excited
/// along a common direction at random amplitudes, divided into contiguous
/// segments that are then split train/test.
pub fn pols_dataset(n: usize, seed: u64, options: &PolsOptions) -> Result<Dataset> {
    let p = ((n as f64 * options.observed_fraction).round() as usize)
        .max(options.min_observed)
        .min(n);
    let root = Rng::new(seed);
    let mut sys_rng = root.split(10);
    let mut ic_rng = root.split(11);
    let spec = random_linear_system(&mut sys_rng, n, p, options.oscillatory)?;

    // Record until the slowest mode has decayed to final_amplitude; beyond
    // that, tiny samples dominate the relative error metric for no gain.
    let rho = crate::numerics::eig(&spec.a)?.spectral_radius();
    let horizon = (options.final_amplitude.ln() / rho.ln()).ceil() as usize;
    let segs_per_orbit = (horizon / options.segment_len).clamp(2, 12);
    let orbit_len = segs_per_orbit * options.segment_len;

    // A small basis of unit excitation directions per instance; orbits vary
    // the mixture coefficients.
    let dims = options.excitation_dims.max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dims);
    for _ in 0..dims {
        let raw: Vec<f64> = (0..n).map(|_| ic_rng.gauss()).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        basis.push(raw.iter().map(|v| v / norm).collect());
    }

    let mut segments = Vec::with_capacity(options.orbits * segs_per_orbit);
    for _ in 0..options.orbits {
        let mut x0 = vec![0.0; n];
        for direction in &basis {
            let amp = ic_rng.uniform_in(options.amplitude_range.0, options.amplitude_range.1);
            for (xi, di) in x0.iter_mut().zip(direction) {
                *xi += amp * di;
            }
        }
        let series = simulate_linear(&spec, &x0, orbit_len)?;
        for s in 0..segs_per_orbit {
            let rows: Vec<Vec<f64>> = (0..options.segment_len)
                .map(|t| series.sample(s * options.segment_len + t).to_vec())
                .collect();
            segments.push(Trajectory::new(1.0, Mat::from_rows(&rows)?)?);
        }
    }
    make_dataset(segments, options.bench.train_fraction, seed)
}

/// Run one POLS instance: EDMD sweep, deep DMD, and on request the fixed
/// random-dictionary baseline and the alternating-least-squares variant.
pub fn pols_instance(
    n: usize,
    seed: u64,
    options: &PolsOptions,
    include_baselines: bool,
) -> Result<InstanceReport> {
    let label = if options.oscillatory {
        format!("pols-n{n}")
    } else {
        format!("pols-n{n}-plain")
    };
    let config_echo = serde_json::to_string(options).unwrap_or_default();
    let config_hash = fnv_hash(&format!("{label}:{seed}:{config_echo}"));

    let dataset = pols_dataset(n, seed, options)?;
    let p = dataset.dim();

    let sweep = edmd_sweep(&dataset, &label, &options.bench, config_hash)?;
    let mut rows = sweep.rows;
    let mut notes = sweep.notes;

    let mlp_spec = bench_mlp_spec(p, &options.bench);
    let deep_config = TrainConfig {
        seed,
        ..options.bench.deep.clone()
    };
    let (ddmd_model, ddmd_report) = train(&dataset, &mlp_spec, &deep_config, |_| {})?;
    rows.push(deep_row(&label, "ddmd", &ddmd_report, config_hash));
    let last = ddmd_report.loss_curve.last().unwrap();
    let (ddmd_train_pct, ddmd_test_pct) = (last.train_error_pct, last.test_error_pct);

    if include_baselines {
        let test_pairs = dataset.pairs_in(Split::Test);
        let train_pairs = dataset.pairs_in(Split::Train);
        let started = std::time::Instant::now();
        let fixed = fixed_dictionary_dmd(&dataset, &mlp_spec, seed)?;
        rows.push(BenchmarkRow {
            method: "fixed-dict-dmd".into(),
            instance: label.clone(),
            train_pct: one_step_percent_error(&fixed, &train_pairs)?,
            test_pct: one_step_percent_error(&fixed, &test_pairs)?,
            wall_time_s: started.elapsed().as_secs_f64(),
            config_hash,
        });

        let als_config = TrainConfig {
            k_update: KUpdate::AlternatingLeastSquares,
            seed,
            ..options.bench.deep.clone()
        };
        let (_, als_report) = train(&dataset, &mlp_spec, &als_config, |_| {})?;
        rows.push(deep_row(&label, "ddmd-als", &als_report, config_hash));
    }

    // Multi-step comparison on the held-out segments.
    let steps = options.bench.forecast_steps;
    let ddmd_mean = mean_forecast_error(&ddmd_model, &dataset, steps, ForecastMode::Lifted)?;
    let mut edmd_mean = f64::INFINITY;
    for (_, model) in &sweep.models {
        edmd_mean = edmd_mean.min(mean_forecast_error(
            model,
            &dataset,
            steps,
            ForecastMode::Lifted,
        )?);
    }

    let mut forecasts = Vec::new();
    if let Some(truth) = dataset.trajectories_in(Split::Test).next() {
        let usable = steps.min(truth.len() - 1);
        forecasts.push(NamedForecast {
            name: format!("{label}-ddmd-forecast"),
            dt: truth.dt,
            result: forecast_against(&ddmd_model, truth, 0, usable, ForecastMode::Lifted)?,
        });
        if let Some(em) = &sweep.selected_model {
            match forecast_against(em, truth, 0, usable, ForecastMode::Lifted) {
                Ok(result) => forecasts.push(NamedForecast {
                    name: format!("{label}-edmd-forecast"),
                    dt: truth.dt,
                    result,
                }),
                Err(Error::InvalidArgument(msg)) => {
                    notes.push(format!("{label}: edmd forecast root unliftable: {msg}"))
                }
                Err(e) => return Err(e),
            }
        }
    }
    notes.push(format!(
        "{label}: data = {} segments of one simulated series, split {:.0}/{:.0}",
        dataset.trajectories.len(),
        100.0 * options.bench.train_fraction,
        100.0 * (1.0 - options.bench.train_fraction)
    ));

    Ok(InstanceReport {
        label,
        rows,
        ddmd_train_pct,
        ddmd_test_pct,
        edmd_best_test_pct: sweep.best_test_pct,
        edmd_selected_test_pct: sweep.selected_test_pct,
        ddmd_model,
        edmd_selected_model: sweep.selected_model,
        ddmd_report,
        forecasts,
        multi_step: Some(MultiStepComparison {
            steps,
            ddmd_mean_err: ddmd_mean,
            edmd_mean_err: edmd_mean,
        }),
        notes,
    })
}

/// Options for one glycolysis instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlycolysisOptions {
    pub params: GlycolysisParams,
    pub trajectories: usize,
    /// Recorded samples per trajectory.
    pub samples: usize,
    pub dt: f64,
    pub substeps: usize,
    /// Integration time discarded before recording, in time units; long
    /// enough that every trajectory has settled onto the limit cycle.
    pub burn_in: f64,
    pub bench: BenchOptions,
}

impl Default for GlycolysisOptions {
    fn default() -> Self {
        Self {
            params: GlycolysisParams::default(),
            trajectories: 20,
            samples: 420,
            dt: 0.01,
            substeps: 10,
            burn_in: 15.0,
            bench: BenchOptions {
                forecast_steps: 400,
                ..BenchOptions::default()
            },
        }
    }
}

/// Generate glycolysis trajectories observing the first `observed` species.
pub fn glycolysis_dataset(
    observed: usize,
    seed: u64,
    options: &GlycolysisOptions,
) -> Result<Dataset> {
    if !(1..=7).contains(&observed) {
        return Err(Error::InvalidArgument(format!(
            "observed species count {observed} outside 1..=7"
        )));
    }
    options.params.validate()?;
    let root = Rng::new(seed);
    let mut ic_rng = root.split(20);
    let rhs = |s: &[f64]| glycolysis_rhs(&options.params, s);
    let burn_steps = (options.burn_in / options.dt).ceil() as usize;
    let observe: Vec<usize> = (0..observed).collect();
    let all: Vec<usize> = (0..7).collect();

    let mut trajectories = Vec::with_capacity(options.trajectories);
    for i in 0..options.trajectories {
        let x0: Vec<f64> = GLYCOLYSIS_IC_BOX
            .iter()
            .map(|&(lo, hi)| ic_rng.uniform_in(lo, hi))
            .collect();
        let full = simulate_ode(
            &rhs,
            &x0,
            options.dt,
            burn_steps + options.samples,
            options.substeps,
            &all,
        )?;
        if i == 0 {
            // Validation gate on the full-state series: wrong parameters
            // fail loudly instead of producing non-oscillating data.
            limit_cycle_gate(&full, 200, 100, 0.01)?;
        }
        let rows: Vec<Vec<f64>> = (burn_steps..burn_steps + options.samples)
            .map(|t| observe.iter().map(|&j| full.samples[(t, j)]).collect())
            .collect();
        trajectories.push(Trajectory::new(options.dt, Mat::from_rows(&rows)?)?);
    }
    make_dataset(trajectories, options.bench.train_fraction, seed)
}

/// Run one glycolysis instance with `observed` species measured.
pub fn glycolysis_instance(
    observed: usize,
    seed: u64,
    options: &GlycolysisOptions,
) -> Result<InstanceReport> {
    let label = format!("glycolysis-s{observed}");
    let config_echo = serde_json::to_string(options).unwrap_or_default();
    let config_hash = fnv_hash(&format!("{label}:{seed}:{config_echo}"));

    let dataset = glycolysis_dataset(observed, seed, options)?;
    let sweep = edmd_sweep(&dataset, &label, &options.bench, config_hash)?;
    let mut rows = sweep.rows;
    let mut notes = sweep.notes;

    let mlp_spec = bench_mlp_spec(observed, &options.bench);
    let deep_config = TrainConfig {
        seed,
        ..options.bench.deep.clone()
    };
    let (ddmd_model, ddmd_report) = train(&dataset, &mlp_spec, &deep_config, |_| {})?;
    rows.push(deep_row(&label, "ddmd", &ddmd_report, config_hash));
    let last = ddmd_report.loss_curve.last().unwrap();

    let steps = options.bench.forecast_steps;
    let ddmd_mean = mean_forecast_error(&ddmd_model, &dataset, steps, ForecastMode::Lifted)?;
    let mut edmd_mean = f64::INFINITY;
    for (_, model) in &sweep.models {
        edmd_mean = edmd_mean.min(mean_forecast_error(
            model,
            &dataset,
            steps,
            ForecastMode::Lifted,
        )?);
    }

    let mut forecasts = Vec::new();
    if let Some(truth) = dataset.trajectories_in(Split::Test).next() {
        let usable = steps.min(truth.len() - 1);
        forecasts.push(NamedForecast {
            name: format!("{label}-ddmd-forecast"),
            dt: truth.dt,
            result: forecast_against(&ddmd_model, truth, 0, usable, ForecastMode::Lifted)?,
        });
        if let Some(em) = &sweep.selected_model {
            match forecast_against(em, truth, 0, usable, ForecastMode::Lifted) {
                Ok(result) => forecasts.push(NamedForecast {
                    name: format!("{label}-edmd-forecast"),
                    dt: truth.dt,
                    result,
                }),
                Err(Error::InvalidArgument(msg)) => {
                    notes.push(format!("{label}: edmd forecast root unliftable: {msg}"))
                }
                Err(e) => return Err(e),
            }
        }
    }
    notes.push(format!(
        "{label}: {} trajectories of {} samples at dt {} after burn-in {}",
        options.trajectories, options.samples, options.dt, options.burn_in
    ));

    Ok(InstanceReport {
        label,
        rows,
        ddmd_train_pct: last.train_error_pct,
        ddmd_test_pct: last.test_error_pct,
        edmd_best_test_pct: sweep.best_test_pct,
        edmd_selected_test_pct: sweep.selected_test_pct,
        ddmd_model,
        edmd_selected_model: sweep.selected_model,
        ddmd_report,
        forecasts,
        multi_step: Some(MultiStepComparison {
            steps,
            ddmd_mean_err: ddmd_mean,
            edmd_mean_err: edmd_mean,
        }),
        notes,
    })
}

/// Options for the swing instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwingOptions {
    pub trajectories: usize,
    pub samples: usize,
    pub dt: f64,
    pub substeps: usize,
    /// Uniform bound on the angle disturbance applied per generator.
    pub delta_scale: f64,
    pub bench: BenchOptions,
}

impl Default for SwingOptions {
    fn default() -> Self {
        Self {
            trajectories: 100,
            samples: 100,
            dt: 0.05,
            substeps: 10,
            delta_scale: 0.15,
            bench: BenchOptions {
                // degree 3 on 18 observables lifts past what the desk-scale
                // solve budget allows; paper scale restores it
                edmd_degrees: vec![1, 2],
                forecast_steps: 50,
                ..BenchOptions::default()
            },
        }
    }
}

/// Generate swing trajectories from randomly perturbed operating points.
pub fn swing_dataset(
    params: &SwingParams,
    seed: u64,
    options: &SwingOptions,
) -> Result<Dataset> {
    params.validate()?;
    let root = Rng::new(seed);
    let mut ic_rng = root.split(30);
    let base = params.operating_state();
    let mut trajectories = Vec::with_capacity(options.trajectories);
    for i in 0..options.trajectories {
        let x0 = perturbed_swing_ic(&base, &mut ic_rng, options.delta_scale);
        let traj = simulate_swing(params, &x0, options.dt, options.samples, options.substeps)?;
        if i == 0 {
            damped_oscillation_gate(&traj)?;
        }
        trajectories.push(traj);
    }
    make_dataset(trajectories, options.bench.train_fraction, seed)
}

/// Run the swing benchmark on the given reduced system.
pub fn swing_instance(
    params: &SwingParams,
    seed: u64,
    options: &SwingOptions,
) -> Result<InstanceReport> {
    let label = format!("swing-{}gen", params.n_gen);
    let config_echo = serde_json::to_string(options).unwrap_or_default();
    let config_hash = fnv_hash(&format!("{label}:{seed}:{config_echo}"));

    let dataset = swing_dataset(params, seed, options)?;
    let p = dataset.dim();
    let sweep = edmd_sweep(&dataset, &label, &options.bench, config_hash)?;
    let mut rows = sweep.rows;
    let mut notes = sweep.notes;

    let mlp_spec = bench_mlp_spec(p, &options.bench);
    let deep_config = TrainConfig {
        seed,
        ..options.bench.deep.clone()
    };
    let (ddmd_model, ddmd_report) = train(&dataset, &mlp_spec, &deep_config, |_| {})?;
    rows.push(deep_row(&label, "ddmd", &ddmd_report, config_hash));
    let last = ddmd_report.loss_curve.last().unwrap();

    let steps = options.bench.forecast_steps;
    let ddmd_mean = mean_forecast_error(&ddmd_model, &dataset, steps, ForecastMode::Lifted)?;
    let mut edmd_mean = f64::INFINITY;
    for (_, model) in &sweep.models {
        edmd_mean = edmd_mean.min(mean_forecast_error(
            model,
            &dataset,
            steps,
            ForecastMode::Lifted,
        )?);
    }

    let mut forecasts = Vec::new();
    if let Some(truth) = dataset.trajectories_in(Split::Test).next() {
        let usable = steps.min(truth.len() - 1);
        forecasts.push(NamedForecast {
            name: format!("{label}-ddmd-forecast"),
            dt: truth.dt,
            result: forecast_against(&ddmd_model, truth, 0, usable, ForecastMode::Lifted)?,
        });
        if let Some(em) = &sweep.selected_model {
            match forecast_against(em, truth, 0, usable, ForecastMode::Lifted) {
                Ok(result) => forecasts.push(NamedForecast {
                    name: format!("{label}-edmd-forecast"),
                    dt: truth.dt,
                    result,
                }),
                Err(Error::InvalidArgument(msg)) => {
                    notes.push(format!("{label}: edmd forecast root unliftable: {msg}"))
                }
                Err(e) => return Err(e),
            }
        }
    }
    notes.push(format!(
        "{label}: {} perturbed trajectories, delta scale {}, reference-relative observables",
        options.trajectories, options.delta_scale
    ));

    Ok(InstanceReport {
        label,
        rows,
        ddmd_train_pct: last.train_error_pct,
        ddmd_test_pct: last.test_error_pct,
        edmd_best_test_pct: sweep.best_test_pct,
        edmd_selected_test_pct: sweep.selected_test_pct,
        ddmd_model,
        edmd_selected_model: sweep.selected_model,
        ddmd_report,
        forecasts,
        multi_step: Some(MultiStepComparison {
            steps,
            ddmd_mean_err: ddmd_mean,
            edmd_mean_err: edmd_mean,
        }),
        notes,
    })
}

/// Run a full suite at the given scale, instances on worker threads, results
/// merged in declaration order.
pub fn run_suite(suite: Suite, scale: Scale, seed: u64) -> Result<SuiteReport> {
    match suite {
        Suite::Pols => {
            let sizes: Vec<usize> = match scale {
                Scale::Desk => vec![4, 8, 16],
                Scale::Paper => vec![4, 8, 16, 32, 64, 128],
            };
            let options = PolsOptions::default();
            let config_echo = serde_json::to_string(&options).unwrap_or_default();
            let mut jobs: Vec<Box<dyn FnOnce() -> Result<InstanceReport> + Send>> = Vec::new();
            for &n in &sizes {
                let opts = pols_desk_options(n);
                jobs.push(Box::new(move || {
                    pols_instance(n, seed.wrapping_add(n as u64), &opts, n == 8)
                }));
            }
            // Plain (non-oscillatory) variant reported alongside.
            let mut plain = pols_desk_options(8);
            plain.oscillatory = false;
            jobs.push(Box::new(move || {
                pols_instance(8, seed.wrapping_add(8), &plain, false)
            }));
            let instances = run_parallel(jobs)?;
            Ok(SuiteReport {
                suite,
                scale,
                seed,
                config_echo,
                instances,
            })
        }
        Suite::Glycolysis => {
            let options = GlycolysisOptions::default();
            let config_echo = serde_json::to_string(&options).unwrap_or_default();
            let mut jobs: Vec<Box<dyn FnOnce() -> Result<InstanceReport> + Send>> = Vec::new();
            for &observed in &[7usize, 5, 3] {
                let opts = options.clone();
                jobs.push(Box::new(move || {
                    glycolysis_instance(observed, seed.wrapping_add(observed as u64), &opts)
                }));
            }
            let instances = run_parallel(jobs)?;
            Ok(SuiteReport {
                suite,
                scale,
                seed,
                config_echo,
                instances,
            })
        }
        Suite::Swing => {
            let mut options = SwingOptions::default();
            if scale == Scale::Paper {
                options.trajectories = 1000;
                options.bench.edmd_degrees = vec![1, 2, 3];
            }
            let config_echo = serde_json::to_string(&options).unwrap_or_default();
            let params = bundled_swing_10gen();
            let report = swing_instance(&params, seed, &options)?;
            Ok(SuiteReport {
                suite,
                scale,
                seed,
                config_echo,
                instances: vec![report],
            })
        }
    }
}

type Job = Box<dyn FnOnce() -> Result<InstanceReport> + Send>;

/// Run isolated jobs on threads; failed instances become error rows so the
/// suite keeps going.
fn run_parallel(jobs: Vec<Job>) -> Result<Vec<InstanceReport>> {
    let handles: Vec<_> = jobs
        .into_iter()
        .map(std::thread::spawn)
        .collect();
    let mut out = Vec::with_capacity(handles.len());
    for handle in handles {
        match handle.join() {
            Ok(Ok(report)) => out.push(report),
            Ok(Err(e)) => return Err(e),
            Err(_) => return Err(Error::NumericalFailure("benchmark worker panicked".into())),
        }
    }
    Ok(out)
}

/// Stable, versioned table CSV. `with_wall_time = false` omits the timing
/// column so reruns are byte-identical.
pub fn table_to_csv<W: std::io::Write>(
    report: &SuiteReport,
    with_wall_time: bool,
    w: &mut W,
) -> Result<()> {
    if with_wall_time {
        writeln!(w, "schema,method,instance,train_pct,test_pct,wall_time_s,config_hash")?;
    } else {
        writeln!(w, "schema,method,instance,train_pct,test_pct,config_hash")?;
    }
    for inst in &report.instances {
        for row in &inst.rows {
            if with_wall_time {
                writeln!(
                    w,
                    "bench-table-v1,{},{},{},{},{},{}",
                    row.method,
                    row.instance,
                    crate::systems::fmt_full(row.train_pct),
                    crate::systems::fmt_full(row.test_pct),
                    crate::systems::fmt_full(row.wall_time_s),
                    row.config_hash
                )?;
            } else {
                writeln!(
                    w,
                    "bench-table-v1,{},{},{},{},{}",
                    row.method,
                    row.instance,
                    crate::systems::fmt_full(row.train_pct),
                    crate::systems::fmt_full(row.test_pct),
                    row.config_hash
                )?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pols_dataset_shapes_and_determinism() {
        let options = PolsOptions::default();
        let a = pols_dataset(4, 7, &options).unwrap();
        let b = pols_dataset(4, 7, &options).unwrap();
        assert_eq!(a.dim(), 3);
        assert_eq!(a.trajectories.len() % options.orbits, 0);
        assert!(a.trajectories.len() >= 2 * options.orbits);
        assert_eq!(a.split, b.split);
        for (x, y) in a.trajectories.iter().zip(&b.trajectories) {
            assert_eq!(x.samples, y.samples);
        }
        let c = pols_dataset(4, 8, &options).unwrap();
        assert!(a.trajectories[0].samples != c.trajectories[0].samples);
    }

    #[test]
    fn glycolysis_dataset_passes_gate_and_projects() {
        let mut options = GlycolysisOptions::default();
        options.trajectories = 2;
        options.samples = 320;
        let ds = glycolysis_dataset(5, 3, &options).unwrap();
        assert_eq!(ds.dim(), 5);
        assert_eq!(ds.trajectories.len(), 2);
        assert!(ds.trajectories[0].samples.is_finite());
    }

    #[test]
    fn glycolysis_gate_rejects_non_oscillatory_parameters() {
        let mut options = GlycolysisOptions::default();
        options.trajectories = 2;
        // Kill the feed so concentrations relax to a fixed point.
        options.params.j0 = 1e-6;
        options.params.k1 = 1e-6;
        let err = glycolysis_dataset(7, 3, &options).unwrap_err();
        assert!(matches!(err, Error::NotOscillatory(_)), "{err:?}");
    }

    #[test]
    fn swing_dataset_observable_dim() {
        let params = bundled_swing_10gen();
        let mut options = SwingOptions::default();
        options.trajectories = 3;
        options.samples = 60;
        let ds = swing_dataset(&params, 5, &options).unwrap();
        assert_eq!(ds.dim(), 18);
        assert_eq!(ds.trajectories.len(), 3);
    }

    #[test]
    fn table_csv_schema_line() {
        let report = SuiteReport {
            suite: Suite::Pols,
            scale: Scale::Desk,
            seed: 0,
            config_echo: String::new(),
            instances: vec![],
        };
        let mut buf = Vec::new();
        table_to_csv(&report, true, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("schema,method,instance,train_pct,test_pct,wall_time_s,config_hash"));
        let mut buf = Vec::new();
        table_to_csv(&report, false, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("schema,method,instance,train_pct,test_pct,config_hash"));
    }
}
