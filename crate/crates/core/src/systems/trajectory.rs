//! Trajectories, dataset splits, ODE sampling, and the oscillation gates.

use crate::error::{Error, Result};
use crate::numerics::{rk4_step, Mat, Rng};

/// Time-indexed sequence of observable vectors from one simulation run.
///
/// `samples` is T x p: row t is the observable vector at time `t * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Mat,
}

impl Trajectory {
    pub fn new(dt: f64, samples: Mat) -> Result<Self> {
        if samples.rows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "trajectory needs >= 2 samples, got {}",
                samples.rows()
            )));
        }
        if dt.is_nan() || dt <= 0.0 {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { dt, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.rows() == 0
    }

    /// Observable dimension p.
    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn sample(&self, t: usize) -> &[f64] {
        self.samples.row(t)
    }

    /// Consecutive (y_t, y_{t+1}) pairs within this trajectory.
    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        (0..self.len() - 1).map(move |t| (self.samples.row(t), self.samples.row(t + 1)))
    }

    /// Write as CSV: header `t, y1..yp`, one row per sample, 18 significant
    /// digits so values round-trip exactly.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        let p = self.dim();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=p).map(|j| format!("y{j}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for t in 0..self.len() {
            let mut fields = Vec::with_capacity(p + 1);
            fields.push(fmt_full(t as f64 * self.dt));
            for v in self.sample(t) {
                fields.push(fmt_full(*v));
            }
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    /// Parse the CSV form written by [`Trajectory::write_csv`].
    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trajectory CSV".into()))??;
        let cols = header.split(',').count();
        if cols < 2 || !header.trim_start().starts_with('t') {
            return Err(Error::Parse(format!("bad trajectory header: {header}")));
        }
        let mut times = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(Error::Parse(format!(
                    "row has {} fields, header has {cols}",
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
            };
            times.push(parse(fields[0])?);
            rows.push(fields[1..].iter().map(|s| parse(s)).collect::<Result<_>>()?);
        }
        if rows.len() < 2 {
            return Err(Error::Parse("trajectory CSV needs >= 2 rows".into()));
        }
        let dt = times[1] - times[0];
        Trajectory::new(if dt > 0.0 { dt } else { 1.0 }, Mat::from_rows(&rows)?)
            .map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Full-precision decimal text (18 significant digits round-trips any f64).
pub fn fmt_full(x: f64) -> String {
    format!("{x:.17e}")
}

/// Train/test assignment for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// A collection of trajectories with a per-trajectory train/test split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub split: Vec<Split>,
    pub seed: u64,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.dim())
    }

    pub fn trajectories_in(&self, split: Split) -> impl Iterator<Item = &Trajectory> {
        self.trajectories
            .iter()
            .zip(&self.split)
            .filter(move |(_, &s)| s == split)
            .map(|(t, _)| t)
    }

    /// All (y_t, y_{t+1}) pairs in the given split, trajectory order then
    /// time order; no pair crosses a trajectory boundary.
    pub fn pairs_in(&self, split: Split) -> Vec<(&[f64], &[f64])> {
        self.trajectories_in(split).flat_map(|t| t.pairs()).collect()
    }

    pub fn count_in(&self, split: Split) -> usize {
        self.split.iter().filter(|&&s| s == split).count()
    }
}

/// Split trajectories into train/test by seeded shuffle.
///
/// The train side gets `floor(n * train_fraction)` trajectories, clamped so
/// both sides are non-empty.
pub fn make_dataset(
    trajectories: Vec<Trajectory>,
    train_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    if trajectories.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need >= 2 trajectories to split, got {}",
            trajectories.len()
        )));
    }
    if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let p = trajectories[0].dim();
    let dt = trajectories[0].dt;
    for (i, t) in trajectories.iter().enumerate() {
        if t.dim() != p {
            return Err(Error::InvalidArgument(format!(
                "trajectory {i} has dim {}, expected {p}",
                t.dim()
            )));
        }
        if t.dt != dt {
            return Err(Error::InvalidArgument(format!(
                "trajectory {i} has dt {}, expected {dt}",
                t.dt
            )));
        }
    }

    let n = trajectories.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(seed).split(0xDA7A);
    rng.shuffle(&mut order);
    let n_train = ((n as f64 * train_fraction).floor() as usize).clamp(1, n - 1);

    let mut split = vec![Split::Test; n];
    for &idx in order.iter().take(n_train) {
        split[idx] = Split::Train;
    }
    Ok(Dataset {
        trajectories,
        split,
        seed,
    })
}

/// Integrate an autonomous vector field with RK4 at `h = dt / substeps`,
/// recording the observed coordinates at every sample time.
///
/// Produces `steps` samples at times `0, dt, ..., (steps-1) * dt`.
pub fn simulate_ode<F>(
    rhs: &F,
    x0: &[f64],
    dt: f64,
    steps: usize,
    substeps: usize,
    observe: &[usize],
) -> Result<Trajectory>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if dt.is_nan() || dt <= 0.0 || substeps == 0 {
        return Err(Error::InvalidArgument(
            "simulate_ode requires dt > 0 and substeps >= 1".into(),
        ));
    }
    if steps < 2 {
        return Err(Error::InvalidArgument("steps must be >= 2".into()));
    }
    for &j in observe {
        if j >= x0.len() {
            return Err(Error::InvalidArgument(format!(
                "observe index {j} out of range for state dim {}",
                x0.len()
            )));
        }
    }
    let h = dt / substeps as f64;
    let mut x = x0.to_vec();
    let mut rows = Vec::with_capacity(steps);
    let project = |x: &[f64]| -> Vec<f64> { observe.iter().map(|&j| x[j]).collect() };
    rows.push(project(&x));
    for step in 1..steps {
        for _ in 0..substeps {
            x = rk4_step(rhs, &x, h).map_err(|_| Error::SimulationDiverged {
                step,
                time: step as f64 * dt,
            })?;
        }
        rows.push(project(&x));
    }
    Trajectory::new(dt, Mat::from_rows(&rows)?)
}

/// Limit-cycle gate: after a transient, every observable keeps moving.
///
/// Requires, for each coordinate, that the value range over every sliding
/// window beyond the transient exceeds `min_rel_range` of that coordinate's
/// post-transient mean magnitude.
pub fn limit_cycle_gate(
    traj: &Trajectory,
    transient: usize,
    window: usize,
    min_rel_range: f64,
) -> Result<()> {
    let t_len = traj.len();
    if t_len < transient + window {
        return Err(Error::InvalidArgument(format!(
            "trajectory too short for gate: {t_len} samples < transient {transient} + window {window}"
        )));
    }
    for j in 0..traj.dim() {
        let tail: Vec<f64> = (transient..t_len).map(|t| traj.samples[(t, j)]).collect();
        let mean_mag = tail.iter().map(|v| v.abs()).sum::<f64>() / tail.len() as f64;
        let threshold = min_rel_range * mean_mag;
        for start in 0..=(tail.len() - window) {
            let w = &tail[start..start + window];
            let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo <= threshold {
                return Err(Error::NotOscillatory(format!(
                    "coordinate {j} range {:.3e} within window at offset {start} is below {:.1}% of mean {mean_mag:.3e}",
                    hi - lo,
                    100.0 * min_rel_range
                )));
            }
        }
    }
    Ok(())
}

/// Damped-oscillation gate on the deviation from each coordinate's final
/// value: some coordinate must cross zero several times, and the late
/// deviation envelope must have decayed relative to the early one.
///
/// Measuring against the final sample rather than zero keeps nonzero
/// equilibrium offsets from hiding the ring-down.
pub fn damped_oscillation_gate(traj: &Trajectory) -> Result<()> {
    let t_len = traj.len();
    if t_len < 12 {
        return Err(Error::InvalidArgument("trajectory too short for gate".into()));
    }
    let mut any_oscillates = false;
    let third = t_len / 3;
    let mut early: f64 = 0.0;
    let mut late: f64 = 0.0;
    for j in 0..traj.dim() {
        let settled = traj.samples[(t_len - 1, j)];
        let dev: Vec<f64> = (0..t_len).map(|t| traj.samples[(t, j)] - settled).collect();
        let crossings = dev.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
        if crossings >= 4 {
            any_oscillates = true;
        }
        for d in dev.iter().take(third) {
            early = early.max(d.abs());
        }
        for d in dev.iter().skip(t_len - third) {
            late = late.max(d.abs());
        }
    }
    if !any_oscillates {
        return Err(Error::NotOscillatory(
            "no coordinate oscillates around its settled value".into(),
        ));
    }
    if late > 0.95 * early {
        return Err(Error::NotOscillatory(format!(
            "late envelope {late:.3e} has not decayed from early envelope {early:.3e}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_traj(rows: &[Vec<f64>], dt: f64) -> Trajectory {
        Trajectory::new(dt, Mat::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn simulate_ode_zero_field_constant() {
        let f = |x: &[f64]| vec![0.0; x.len()];
        let tr = simulate_ode(&f, &[2.0, -1.0], 0.1, 5, 4, &[0, 1]).unwrap();
        for t in 0..5 {
            assert_eq!(tr.sample(t), &[2.0, -1.0]);
        }
    }

    #[test]
    fn simulate_ode_exponential_decay() {
        let f = |x: &[f64]| vec![-x[0]];
        // samples at t = 0 .. 1.0; index 10 is x(1).
        let tr = simulate_ode(&f, &[1.0], 0.1, 11, 10, &[0]).unwrap();
        assert!((tr.samples[(10, 0)] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn simulate_ode_observation_selection() {
        let f = |_: &[f64]| vec![1.0, 2.0, 3.0];
        let tr = simulate_ode(&f, &[0.0, 0.0, 0.0], 0.5, 3, 2, &[0, 2]).unwrap();
        assert_eq!(tr.dim(), 2);
        assert!((tr.samples[(1, 0)] - 0.5).abs() < 1e-12);
        assert!((tr.samples[(1, 1)] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn simulate_ode_divergence_carries_step() {
        // Finite-time blowup: x' = x^2 from x=1 escapes at t=1.
        let f = |x: &[f64]| vec![x[0] * x[0]];
        let err = simulate_ode(&f, &[1.0], 0.5, 10, 8, &[0]).unwrap_err();
        match err {
            Error::SimulationDiverged { step, .. } => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn make_dataset_split_sizes() {
        let trajs: Vec<Trajectory> = (0..10)
            .map(|i| toy_traj(&[vec![i as f64], vec![i as f64 + 1.0]], 1.0))
            .collect();
        let ds = make_dataset(trajs, 0.8, 7).unwrap();
        assert_eq!(ds.count_in(Split::Train), 8);
        assert_eq!(ds.count_in(Split::Test), 2);
    }

    #[test]
    fn make_dataset_same_seed_same_split() {
        let build = || -> Vec<Trajectory> {
            (0..7)
                .map(|i| toy_traj(&[vec![i as f64], vec![0.0]], 1.0))
                .collect()
        };
        let a = make_dataset(build(), 0.5, 42).unwrap();
        let b = make_dataset(build(), 0.5, 42).unwrap();
        assert_eq!(a.split, b.split);
        let c = make_dataset(build(), 0.5, 43).unwrap();
        assert!(a.split != c.split || a.seed != c.seed);
    }

    #[test]
    fn make_dataset_minimum_case() {
        let trajs = vec![
            toy_traj(&[vec![0.0], vec![1.0]], 1.0),
            toy_traj(&[vec![2.0], vec![3.0]], 1.0),
        ];
        let ds = make_dataset(trajs, 0.5, 1).unwrap();
        assert_eq!(ds.count_in(Split::Train), 1);
        assert_eq!(ds.count_in(Split::Test), 1);
    }

    #[test]
    fn make_dataset_rejects_single_trajectory() {
        let trajs = vec![toy_traj(&[vec![0.0], vec![1.0]], 1.0)];
        assert!(make_dataset(trajs, 0.5, 1).is_err());
    }

    #[test]
    fn pairs_do_not_cross_trajectory_boundaries() {
        let trajs = vec![
            toy_traj(&[vec![0.0], vec![1.0], vec![2.0]], 1.0),
            toy_traj(&[vec![10.0], vec![11.0], vec![12.0], vec![13.0]], 1.0),
        ];
        let ds = Dataset {
            split: vec![Split::Train; 2],
            trajectories: trajs,
            seed: 0,
        };
        let pairs = ds.pairs_in(Split::Train);
        assert_eq!(pairs.len(), 5);
        for (a, b) in &pairs {
            assert!((b[0] - a[0] - 1.0).abs() < 1e-12, "pair {a:?} -> {b:?}");
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let tr = toy_traj(
            &[
                vec![0.1234567890123456, -1.0 / 3.0],
                vec![2.0f64.sqrt(), 1e-300],
                vec![-7.25e10, 0.0],
            ],
            0.05,
        );
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,y1,y2\n"));
        let back = Trajectory::read_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.samples, tr.samples);
        assert_eq!(back.dt, tr.dt);
    }

    #[test]
    fn limit_cycle_gate_accepts_sine_rejects_decay() {
        let n = 600;
        let sine: Vec<Vec<f64>> = (0..n)
            .map(|t| vec![1.0 + (0.1 * t as f64).sin()])
            .collect();
        limit_cycle_gate(&toy_traj(&sine, 0.1), 200, 100, 0.01).unwrap();

        let decay: Vec<Vec<f64>> = (0..n)
            .map(|t| vec![1.0 + (-0.05 * t as f64).exp()])
            .collect();
        assert!(limit_cycle_gate(&toy_traj(&decay, 0.1), 200, 100, 0.01).is_err());
    }

    #[test]
    fn damped_gate_accepts_damped_sine_rejects_flat_and_growing() {
        let damped: Vec<Vec<f64>> = (0..300)
            .map(|t| vec![(-0.01 * t as f64).exp() * (0.3 * t as f64).sin()])
            .collect();
        damped_oscillation_gate(&toy_traj(&damped, 0.1)).unwrap();

        let flat: Vec<Vec<f64>> = (0..300).map(|_| vec![1.0]).collect();
        assert!(damped_oscillation_gate(&toy_traj(&flat, 0.1)).is_err());

        let growing: Vec<Vec<f64>> = (0..300)
            .map(|t| vec![(0.01 * t as f64).exp() * (0.3 * t as f64).sin()])
            .collect();
        assert!(damped_oscillation_gate(&toy_traj(&growing, 0.1)).is_err());
    }
}
