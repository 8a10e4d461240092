//! Command implementations behind the `ddmd` CLI.

use crate::config::{RunConfig, SystemSection};
use crate::dataset_io;
use koopman_core::bench::{self, Scale, Suite};
use koopman_core::dictionary::PolyDictSpec;
use koopman_core::edmd::{
    build_snapshots, fixed_dictionary_dmd, load_model, save_model, solve, DictionaryKind,
    EdmdConfig, KoopmanModel, ModelMeta,
};
use koopman_core::error::{Error, Result};
use koopman_core::eval::{
    basis_sweep, error_curve_to_csv, forecast_against, forecast_error_curve, forecast_to_csv,
    spectrum as model_spectrum, spectrum_to_csv, sweep_to_csv, ForecastMode,
};
use koopman_core::systems::{bundled_swing_10gen, swing_params_from_toml, Dataset, Split};
use koopman_core::trainer::{self, one_step_percent_error, TrainConfig};
use std::path::Path;

fn build_dataset(config: &RunConfig, seed_override: Option<u64>) -> Result<(Dataset, String, Vec<String>)> {
    let seed = seed_override.unwrap_or(config.data.seed);
    match &config.system {
        SystemSection::Pols { n, .. } => {
            let options = config.pols_options();
            let dataset = bench::pols_dataset(*n, seed, &options)?;
            let echo = toml::to_string(&config.system).unwrap_or_default();
            let notes = vec![format!(
                "pols n = {n}: {} orbit segments, p = {}",
                dataset.trajectories.len(),
                dataset.dim()
            )];
            Ok((dataset, echo, notes))
        }
        SystemSection::Glycolysis { observed, .. } => {
            let options = config.glycolysis_options();
            let observed = observed.unwrap_or(7);
            let dataset = bench::glycolysis_dataset(observed, seed, &options)?;
            let echo = toml::to_string(&config.system).unwrap_or_default();
            let notes = vec![format!(
                "glycolysis observing the first {observed} species; burn-in {} time units",
                options.burn_in
            )];
            Ok((dataset, echo, notes))
        }
        SystemSection::Swing { params_file, .. } => {
            let params = match params_file {
                Some(path) => swing_params_from_toml(&std::fs::read_to_string(path)?)?,
                None => bundled_swing_10gen(),
            };
            let options = config.swing_options();
            let dataset = bench::swing_dataset(&params, seed, &options)?;
            let echo = toml::to_string(&config.system).unwrap_or_default();
            let notes = vec![
                "observables are generator-1-relative: delta_i - delta_1, omega_i - omega_1 for i >= 2"
                    .to_string(),
            ];
            Ok((dataset, echo, notes))
        }
    }
}

pub fn simulate(config_path: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let config = RunConfig::from_path(config_path)?;
    let (dataset, echo, notes) = build_dataset(&config, seed)?;
    let manifest = dataset_io::write_dataset(&dataset, &echo, notes, out)?;
    println!(
        "wrote {} trajectories ({} train / {} test) to {}",
        manifest.files.len(),
        dataset.count_in(Split::Train),
        dataset.count_in(Split::Test),
        out.display()
    );
    Ok(())
}

pub fn train(config_path: &Path, data_dir: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let config = RunConfig::from_path(config_path)?;
    let (dataset, _manifest) = dataset_io::read_dataset(data_dir)?;
    std::fs::create_dir_all(out)?;
    let p = dataset.dim();
    let training = config.training.clone().unwrap_or_default();
    let seed = seed.unwrap_or(config.data.seed);

    let (model, report_json) = match training.method.as_str() {
        "deep" => {
            let spec = config.mlp_spec(p);
            let train_config = TrainConfig {
                seed,
                ..training.deep.clone()
            };
            let (model, report) = trainer::train(&dataset, &spec, &train_config, |row| {
                // line-delimited progress records on stdout
                println!(
                    "{}",
                    serde_json::to_string(row).unwrap_or_else(|_| "{}".into())
                );
            })?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Parse(format!("report encode: {e}")))?;
            (model, json)
        }
        "edmd" => {
            let degrees = training.degrees.clone().unwrap_or_else(|| vec![1, 2, 3]);
            let lambdas = training
                .lambdas
                .clone()
                .unwrap_or_else(|| vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1]);
            edmd_sweep_train(&config, &dataset, &degrees, &lambdas, &training, seed)?
        }
        "fixed-dict" => {
            let spec = config.mlp_spec(p);
            let model = fixed_dictionary_dmd(&dataset, &spec, seed)?;
            let train_pairs = dataset.pairs_in(Split::Train);
            let test_pairs = dataset.pairs_in(Split::Test);
            let json = serde_json::to_string_pretty(&serde_json::json!({
                "method": "fixed-dict",
                "train_error_pct": one_step_percent_error(&model, &train_pairs)?,
                "test_error_pct": one_step_percent_error(&model, &test_pairs)?,
            }))
            .map_err(|e| Error::Parse(format!("report encode: {e}")))?;
            (model, json)
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown training method {other:?}"
            )))
        }
    };

    let train_pct = one_step_percent_error(&model, &dataset.pairs_in(Split::Train))?;
    let test_pct = one_step_percent_error(&model, &dataset.pairs_in(Split::Test))?;
    save_model(&model, &out.join("model.json"))?;
    std::fs::write(out.join("report.json"), report_json)?;
    println!("final one-step error: train {train_pct:.6}% test {test_pct:.6}%");
    Ok(())
}

fn edmd_sweep_train(
    config: &RunConfig,
    dataset: &Dataset,
    degrees: &[usize],
    lambdas: &[f64],
    training: &crate::config::TrainingSection,
    seed: u64,
) -> Result<(KoopmanModel, String)> {
    let p = dataset.dim();
    let train_pairs = dataset.pairs_in(Split::Train);
    let domain_box = PolyDictSpec::fit_domain_box(
        dataset
            .trajectories_in(Split::Train)
            .flat_map(|t| (0..t.len()).map(move |i| t.sample(i))),
        p,
    );
    let mut best: Option<(f64, KoopmanModel, usize, f64)> = None;
    let mut sweep_rows = Vec::new();
    for &degree in degrees {
        let spec = config
            .poly_spec(p, domain_box.clone())
            .unwrap_or_else(|| PolyDictSpec::legendre(p, degree, domain_box.clone()));
        let spec = PolyDictSpec {
            max_total_degree: degree,
            ..spec
        };
        let dictionary = DictionaryKind::Poly { spec };
        let snapshots = build_snapshots(dataset, Split::Train, &dictionary)?;
        let data_hash = snapshots.content_hash();
        for &lambda in lambdas {
            let result = solve(
                &snapshots,
                &EdmdConfig {
                    lambda,
                    max_iter: training.edmd_max_iter,
                    tol: training.edmd_tol,
                    step_size: None,
                },
            )?;
            let model = KoopmanModel {
                k: result.k,
                dictionary: dictionary.clone(),
                p,
                meta: ModelMeta {
                    seed: Some(seed),
                    config: format!("legendre degree {degree}, lambda {lambda:e}"),
                    data_hash: Some(data_hash),
                    converged: Some(result.converged),
                    method: "edmd".into(),
                },
            };
            let train_pct = one_step_percent_error(&model, &train_pairs)?;
            sweep_rows.push(serde_json::json!({
                "degree": degree,
                "lambda": lambda,
                "train_error_pct": train_pct,
                "converged": result.converged,
            }));
            if best.as_ref().is_none_or(|(b, _, _, _)| train_pct < *b) {
                best = Some((train_pct, model, degree, lambda));
            }
        }
    }
    let (train_pct, model, degree, lambda) =
        best.ok_or_else(|| Error::InvalidArgument("empty EDMD sweep".into()))?;
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "method": "edmd",
        "selected_degree": degree,
        "selected_lambda": lambda,
        "selected_train_error_pct": train_pct,
        "sweep": sweep_rows,
    }))
    .map_err(|e| Error::Parse(format!("report encode: {e}")))?;
    Ok((model, json))
}

pub fn forecast(
    model_path: &Path,
    data_dir: &Path,
    trajectory: Option<usize>,
    root: usize,
    steps: usize,
    mode: &str,
    out: &Path,
) -> Result<()> {
    let model = load_model(model_path)?;
    let (dataset, _) = dataset_io::read_dataset(data_dir)?;
    if dataset.dim() != model.p {
        return Err(Error::InvalidArgument(format!(
            "model expects p = {}, dataset has p = {}",
            model.p,
            dataset.dim()
        )));
    }
    let mode = parse_mode(mode)?;
    let index = match trajectory {
        Some(i) if i < dataset.trajectories.len() => i,
        Some(i) => {
            return Err(Error::InvalidArgument(format!(
                "trajectory {i} out of range ({} available)",
                dataset.trajectories.len()
            )))
        }
        None => dataset
            .split
            .iter()
            .position(|&s| s == Split::Test)
            .unwrap_or(0),
    };
    let truth = &dataset.trajectories[index];
    let usable = steps.min(truth.len().saturating_sub(root + 1));
    if usable == 0 {
        return Err(Error::InvalidArgument(
            "root too close to the end of the trajectory".into(),
        ));
    }
    let result = forecast_against(&model, truth, root, usable, mode)?;
    let curve = forecast_error_curve(&result)?;

    std::fs::create_dir_all(out)?;
    let mut buf = Vec::new();
    forecast_to_csv(&result, truth.dt, &mut buf)?;
    std::fs::write(out.join("forecast.csv"), buf)?;
    let mut buf = Vec::new();
    error_curve_to_csv(&curve, &mut buf)?;
    std::fs::write(out.join("error_curve.csv"), buf)?;
    if let Some(step) = result.diverged_at {
        println!("forecast diverged at step {step}; wrote truncated results");
    } else {
        println!(
            "forecast of {usable} steps from trajectory {index} sample {root}: mean relative error {:.6}",
            curve.iter().sum::<f64>() / curve.len() as f64
        );
    }
    Ok(())
}

fn parse_mode(mode: &str) -> Result<ForecastMode> {
    match mode {
        "lifted" => Ok(ForecastMode::Lifted),
        "relift" => Ok(ForecastMode::Relift),
        other => Err(Error::InvalidArgument(format!(
            "unknown forecast mode {other:?} (lifted | relift)"
        ))),
    }
}

pub fn spectrum(model_path: &Path, out: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let report = model_spectrum(&model)?;
    std::fs::create_dir_all(out)?;
    let mut buf = Vec::new();
    spectrum_to_csv(&report, &mut buf)?;
    std::fs::write(out.join("spectrum.csv"), buf)?;
    if report.degraded {
        println!("note: eigendecomposition flagged degraded accuracy (near-defective operator)");
    }
    println!(
        "spectral radius {:.8}; wrote {} eigenvalues",
        report
            .eigenvalues
            .iter()
            .map(|l| l.abs())
            .fold(0.0f64, f64::max),
        report.eigenvalues.len()
    );
    Ok(())
}

pub fn sweep(
    model_path: &Path,
    dim: usize,
    radius: f64,
    points: usize,
    center: Option<&str>,
    out: &Path,
) -> Result<()> {
    let model = load_model(model_path)?;
    let center = match center {
        Some(text) => {
            let values: Result<Vec<f64>> = text
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidArgument(format!("bad center entry {s:?}: {e}")))
                })
                .collect();
            values?
        }
        None => match &model.dictionary {
            DictionaryKind::Poly { spec } => spec
                .domain_box
                .as_ref()
                .map(|bx| bx.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect())
                .unwrap_or_else(|| vec![0.0; model.p]),
            DictionaryKind::Neural { .. } => vec![0.0; model.p],
        },
    };
    let report = basis_sweep(&model, dim, &center, radius, points)?;
    std::fs::create_dir_all(out)?;
    let mut buf = Vec::new();
    sweep_to_csv(&report, &mut buf)?;
    std::fs::write(out.join("sweep.csv"), buf)?;
    println!(
        "swept dimension {dim} over [{:+.4}, {:+.4}] at {points} points",
        -radius, radius
    );
    Ok(())
}

pub fn benchmark(suite: &str, scale: &str, seed: u64, out: &Path) -> Result<()> {
    let suite = match suite {
        "pols" => Suite::Pols,
        "glycolysis" => Suite::Glycolysis,
        "swing" => Suite::Swing,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown suite {other:?} (pols | glycolysis | swing)"
            )))
        }
    };
    let scale = match scale {
        "desk" => Scale::Desk,
        "paper" => Scale::Paper,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown scale {other:?} (desk | paper)"
            )))
        }
    };
    let report = bench::run_suite(suite, scale, seed)?;
    std::fs::create_dir_all(out)?;

    let mut buf = Vec::new();
    bench::table_to_csv(&report, true, &mut buf)?;
    std::fs::write(out.join("benchmark.csv"), buf)?;
    let mut buf = Vec::new();
    bench::table_to_csv(&report, false, &mut buf)?;
    std::fs::write(out.join("benchmark_deterministic.csv"), buf)?;
    std::fs::write(out.join("benchmark_config.json"), &report.config_echo)?;

    let mut notes = Vec::new();
    for instance in &report.instances {
        notes.extend(instance.notes.iter().cloned());
        for forecast in &instance.forecasts {
            let mut buf = Vec::new();
            forecast_to_csv(&forecast.result, forecast.dt, &mut buf)?;
            std::fs::write(out.join(format!("{}.csv", forecast.name)), buf)?;
        }
        if let Some(ms) = &instance.multi_step {
            notes.push(format!(
                "{}: multi-step mean relative error over {} steps: ddmd {:.6}, edmd best {:.6}",
                instance.label, ms.steps, ms.ddmd_mean_err, ms.edmd_mean_err
            ));
        }
        let report_json = serde_json::to_string_pretty(&instance.ddmd_report)
            .map_err(|e| Error::Parse(format!("report encode: {e}")))?;
        std::fs::write(
            out.join(format!("{}-ddmd-report.json", instance.label)),
            report_json,
        )?;
    }
    std::fs::write(out.join("notes.txt"), notes.join("\n") + "\n")?;

    for instance in &report.instances {
        println!("instance {}:", instance.label);
        println!(
            "  ddmd train {:.4}% test {:.4}%",
            instance.ddmd_train_pct, instance.ddmd_test_pct
        );
        println!(
            "  edmd selected test {:.4}% (best swept {:.4}%)",
            instance.edmd_selected_test_pct, instance.edmd_best_test_pct
        );
    }
    println!("wrote benchmark table to {}", out.join("benchmark.csv").display());
    Ok(())
}
