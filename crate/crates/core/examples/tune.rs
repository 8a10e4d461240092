use koopman_core::bench::*;
use koopman_core::edmd::KoopmanModel;
use koopman_core::eval::{dominant_period, forecast_against, forecast_error_curve, ForecastMode};
use koopman_core::systems::{Dataset, Split};
use koopman_core::trainer::{KUpdate, Optimizer};

fn env_f64(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn env_usize(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn tweak(bench: &mut BenchOptions) {
    if std::env::var("TUNE_OPT").as_deref() == Ok("adam") {
        bench.deep.optimizer = Optimizer::Adam;
    }
    if std::env::var("TUNE_KUP").as_deref() == Ok("als") {
        bench.deep.k_update = KUpdate::AlternatingLeastSquares;
    }
    bench.deep.learning_rate = env_f64("TUNE_LR", bench.deep.learning_rate);
    bench.deep.iterations = env_usize("TUNE_ITERS", bench.deep.iterations);
    bench.deep.batch_size = env_usize("TUNE_BATCH", bench.deep.batch_size);
    bench.deep.lambda1 = env_f64("TUNE_L1", bench.deep.lambda1);
    bench.deep.eval_every = env_usize("TUNE_EVAL", bench.deep.iterations / 5);
    bench.mlp_width = env_usize("TUNE_WIDTH", bench.mlp_width);
    bench.mlp_depth = env_usize("TUNE_DEPTH", bench.mlp_depth);
    if let Ok(v) = std::env::var("TUNE_OUT") {
        bench.mlp_output = Some(v.parse().unwrap());
    }
    if let Ok(v) = std::env::var("TUNE_DROP") {
        bench.deep.dropout_rate = Some(v.parse().unwrap());
    }
}

fn tweak_pols(options: &mut PolsOptions) {
    options.excitation_dims = env_usize("TUNE_EXC", options.excitation_dims);
    options.orbits = env_usize("TUNE_ORBITS", options.orbits);
    options.observed_fraction = env_f64("TUNE_FRAC", options.observed_fraction);
    options.final_amplitude = env_f64("TUNE_AMP", options.final_amplitude);
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("pols4");
    let t0 = std::time::Instant::now();
    match which {
        "pols4" | "pols8" | "pols16" => {
            let n: usize = which[4..].parse().unwrap();
            let mut options = PolsOptions::default();
            tweak(&mut options.bench);
            tweak_pols(&mut options);
            let ds = pols_dataset(n, env_usize("TUNE_SEED", 42 + n) as u64, &options).unwrap();
            data_stats(&ds);
            let seed = env_usize("TUNE_SEED", 42 + n) as u64;
            let rep = pols_instance(n, seed, &options, false).unwrap();
            print_report(&rep);
            pair_stats(&rep.ddmd_model, &ds, "ddmd");
            if let Some(m) = &rep.edmd_selected_model {
                pair_stats(m, &ds, "edmd-selected");
            }
        }
        "glyc7" | "glyc5" | "glyc3" => {
            let obs: usize = which[4..].parse().unwrap();
            let mut options = GlycolysisOptions::default();
            tweak(&mut options.bench);
            options.burn_in = env_f64("TUNE_BURN", options.burn_in);
            options.trajectories = env_usize("TUNE_TRAJ", options.trajectories);
            options.dt = env_f64("TUNE_DT", options.dt);
            options.samples = env_usize("TUNE_SAMPLES", options.samples);
            let ds = glycolysis_dataset(obs, 42 + obs as u64, &options).unwrap();
            data_stats(&ds);
            let rep = glycolysis_instance(obs, 42 + obs as u64, &options).unwrap();
            print_report(&rep);
            pair_stats(&rep.ddmd_model, &ds, "ddmd");
            criterion3_stats(&rep.ddmd_model, &ds);
        }
        "swing" => {
            let params = koopman_core::systems::bundled_swing_10gen();
            let mut options = SwingOptions::default();
            tweak(&mut options.bench);
            options.delta_scale = env_f64("TUNE_DELTA", options.delta_scale);
            options.trajectories = env_usize("TUNE_TRAJ", options.trajectories);
            let ds = swing_dataset(&params, 42, &options).unwrap();
            data_stats(&ds);
            let rep = swing_instance(&params, 42, &options).unwrap();
            print_report(&rep);
            pair_stats(&rep.ddmd_model, &ds, "ddmd");
        }
        other => panic!("unknown probe {other}"),
    }
    eprintln!("elapsed: {:.1}s", t0.elapsed().as_secs_f64());
}

fn data_stats(ds: &Dataset) {
    let mut norms: Vec<f64> = ds
        .pairs_in(Split::Train)
        .iter()
        .map(|(_, next)| next.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |f: f64| norms[((norms.len() - 1) as f64 * f) as usize];
    println!(
        "train pair ||y+|| percentiles: p0 {:.3e} p1 {:.3e} p10 {:.3e} p50 {:.3e} p99 {:.3e} p100 {:.3e}",
        q(0.0), q(0.01), q(0.10), q(0.50), q(0.99), q(1.0)
    );
}

fn pair_stats(model: &KoopmanModel, ds: &Dataset, name: &str) {
    for (split, tag) in [(Split::Train, "train"), (Split::Test, "test")] {
        let pairs = ds.pairs_in(split);
        let mut rel: Vec<(f64, f64)> = pairs
            .iter()
            .filter_map(|(prev, next)| {
                let pred = model.predict_one_step(prev).ok()?;
                let num = pred
                    .iter()
                    .zip(*next)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let den = next.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-12;
                Some((num / den, den))
            })
            .collect();
        rel.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let q = |f: f64| rel[((rel.len() - 1) as f64 * f) as usize];
        println!(
            "{name} {tag}: rel err p50 {:.4} p90 {:.4} p99 {:.4} max {:.4} (den at max {:.3e}); mean {:.4}",
            q(0.50).0,
            q(0.90).0,
            q(0.99).0,
            q(1.0).0,
            q(1.0).1,
            rel.iter().map(|r| r.0).sum::<f64>() / rel.len() as f64
        );
    }
}

fn criterion3_stats(model: &KoopmanModel, ds: &Dataset) {
    let truth = ds.trajectories_in(Split::Test).next().unwrap();
    let steps = 400.min(truth.len() - 1);
    let fc = forecast_against(model, truth, 0, steps, ForecastMode::Lifted).unwrap();
    let curve = forecast_error_curve(&fc).unwrap();
    let first100: f64 = curve.iter().take(100).sum::<f64>() / 100.0;
    println!(
        "criterion3: first-100 mean {:.4}; diverged: {:?}; steps produced {}",
        first100,
        fc.diverged_at,
        fc.steps_produced()
    );
    println!(
        "curve: s5 {:.4} s10 {:.4} s25 {:.4} s50 {:.4} s75 {:.4} s100 {:.4} s200 {:.4} s400 {:.4}",
        curve[4], curve[9], curve[24], curve[49], curve[74], curve[99], curve[199], curve[curve.len()-1]
    );
    let (amax, wmax) = curve.iter().take(100).enumerate().fold((0usize, 0.0f64), |(ai, am), (i, &v)| if v > am { (i, v) } else { (ai, am) });
    println!("curve: first-100 max {wmax:.4} at step {}", amax + 1);
    let truth_series: Vec<f64> = (0..=steps).map(|t| truth.samples[(t, 0)]).collect();
    let pred_series: Vec<f64> = (0..fc.predicted.rows()).map(|t| fc.predicted[(t, 0)]).collect();
    let pt = dominant_period(&truth_series, truth.dt);
    let pp = dominant_period(&pred_series, truth.dt);
    println!("criterion3: truth period {pt:?}, forecast period {pp:?}");
}

fn print_report(rep: &InstanceReport) {
    println!("== {} ==", rep.label);
    for row in &rep.rows {
        println!(
            "  {:16} {:28} train {:9.4}%  test {:9.4}%  ({:.1}s)",
            row.method, row.instance, row.train_pct, row.test_pct, row.wall_time_s
        );
    }
    if let Some(ms) = &rep.multi_step {
        println!(
            "  multi-step {} steps: ddmd {:.4}  edmd {:.4}",
            ms.steps, ms.ddmd_mean_err, ms.edmd_mean_err
        );
    }
}
