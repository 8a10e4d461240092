//! Randomly generated discrete-time linear systems with partial observation.

use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::numerics::{eig, Mat, Rng};

/// Discrete-time linear system `x_{t+1} = a x_t`, observed through a pure
/// selection matrix `c` (one unit entry per row).
#[derive(Debug, Clone)]
pub struct LinearSystemSpec {
    pub n: usize,
    pub p: usize,
    pub a: Mat,
    pub c: Mat,
    pub marginally_stable: bool,
}

impl LinearSystemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.p > self.n {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= p <= n, got p = {}, n = {}",
                self.p, self.n
            )));
        }
        if self.a.rows() != self.n || self.a.cols() != self.n {
            return Err(Error::InvalidArgument("a must be n x n".into()));
        }
        if self.c.rows() != self.p || self.c.cols() != self.n {
            return Err(Error::InvalidArgument("c must be p x n".into()));
        }
        for i in 0..self.p {
            let row = self.c.row(i);
            let units = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if units != 1 || units + zeros != self.n {
                return Err(Error::InvalidArgument(format!(
                    "c row {i} is not a pure selector"
                )));
            }
        }
        if !self.marginally_stable {
            let rho = eig(&self.a)?.spectral_radius();
            if rho >= 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "spectral radius {rho} >= 1 without marginally-stable flag"
                )));
            }
        }
        Ok(())
    }
}

/// Orthogonalize the columns of a square matrix by modified Gram-Schmidt,
/// run twice for orthogonality at working precision.
fn random_orthogonal(rng: &mut Rng, n: usize) -> Mat {
    let mut q = Mat::from_fn(n, n, |_, _| rng.gauss());
    for _ in 0..2 {
        for j in 0..n {
            for k in 0..j {
                let dot: f64 = (0..n).map(|i| q[(i, k)] * q[(i, j)]).sum();
                for i in 0..n {
                    let v = q[(i, k)];
                    q[(i, j)] -= dot * v;
                }
            }
            let norm = q.col_norm(j);
            for i in 0..n {
                q[(i, j)] /= norm;
            }
        }
    }
    q
}

/// Generate a random stable linear system observing the first `p` of `n`
/// states.
///
/// Plain mode samples i.i.d. standard-normal dynamics rescaled to a spectral
/// radius in [0.90, 0.99]. Oscillatory mode builds the dynamics from random
/// 2x2 damped-rotation blocks (plus one 1x1 block when n is odd), conjugated
/// by a random orthogonal matrix, guaranteeing complex eigenvalue pairs.
pub fn random_linear_system(
    rng: &mut Rng,
    n: usize,
    p: usize,
    oscillatory: bool,
) -> Result<LinearSystemSpec> {
    if p == 0 || p > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= p <= n, got p = {p}, n = {n}"
        )));
    }

    let a = if oscillatory {
        let mut block_diag = Mat::zeros(n, n);
        let pairs = n / 2;
        // Frequencies stratified over disjoint subranges so every pair is a
        // distinct live mode; radii in a narrow slow band so no mode fades
        // out within a recorded orbit.
        let (theta_lo, theta_hi) = (0.15, 0.55);
        let stratum = (theta_hi - theta_lo) / pairs as f64;
        for b in 0..pairs {
            let radius = rng.uniform_in(0.98, 0.99);
            let theta = rng.uniform_in(
                theta_lo + b as f64 * stratum,
                theta_lo + (b + 1) as f64 * stratum,
            );
            let (c, s) = (theta.cos(), theta.sin());
            let i = 2 * b;
            block_diag[(i, i)] = radius * c;
            block_diag[(i, i + 1)] = -radius * s;
            block_diag[(i + 1, i)] = radius * s;
            block_diag[(i + 1, i + 1)] = radius * c;
        }
        if n % 2 == 1 {
            block_diag[(n - 1, n - 1)] = rng.uniform_in(0.98, 0.99);
        }
        let q = random_orthogonal(rng, n);
        q.matmul(&block_diag).matmul(&q.transpose())
    } else {
        let raw = Mat::from_fn(n, n, |_, _| rng.gauss());
        let rho = eig(&raw)?.spectral_radius();
        let target = rng.uniform_in(0.90, 0.99);
        raw.scale(target / rho)
    };

    let c = Mat::from_fn(p, n, |i, j| if i == j { 1.0 } else { 0.0 });
    let spec = LinearSystemSpec {
        n,
        p,
        a,
        c,
        marginally_stable: false,
    };
    spec.validate()?;
    Ok(spec)
}

/// Sample `y_t = c a^t x0` for `t = 0 .. steps-1`; dt is recorded as 1.
pub fn simulate_linear(spec: &LinearSystemSpec, x0: &[f64], steps: usize) -> Result<Trajectory> {
    if steps < 2 {
        return Err(Error::InvalidArgument("steps must be >= 2".into()));
    }
    if x0.len() != spec.n {
        return Err(Error::InvalidArgument(format!(
            "x0 has dim {}, system has n = {}",
            x0.len(),
            spec.n
        )));
    }
    let mut x = x0.to_vec();
    let mut rows = Vec::with_capacity(steps);
    for step in 0..steps {
        rows.push(spec.c.matvec(&x));
        if step + 1 < steps {
            x = spec.a.matvec(&x);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::SimulationDiverged {
                    step: step + 1,
                    time: (step + 1) as f64,
                });
            }
        }
    }
    Trajectory::new(1.0, Mat::from_rows(&rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fully_observed_radius_in_band() {
        let mut rng = Rng::new(1);
        let spec = random_linear_system(&mut rng, 4, 4, false).unwrap();
        let rho = eig(&spec.a).unwrap().spectral_radius();
        assert!((0.90..=0.99).contains(&rho), "rho {rho}");
    }

    #[test]
    fn selector_is_identity_prefix() {
        let mut rng = Rng::new(2);
        let spec = random_linear_system(&mut rng, 8, 4, false).unwrap();
        for i in 0..4 {
            for j in 0..8 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(spec.c[(i, j)], expect);
            }
        }
    }

    #[test]
    fn oscillatory_mode_has_complex_pair() {
        let mut rng = Rng::new(3);
        let spec = random_linear_system(&mut rng, 4, 2, true).unwrap();
        let spectrum = eig(&spec.a).unwrap();
        assert!(
            spectrum.eigenvalues.iter().any(|l| l.im.abs() > 1e-6),
            "no complex eigenvalue in {:?}",
            spectrum.eigenvalues
        );
        let rho = spectrum.spectral_radius();
        assert!((0.90..=0.99 + 1e-9).contains(&rho), "rho {rho}");
    }

    #[test]
    fn oscillatory_odd_dimension() {
        let mut rng = Rng::new(4);
        let spec = random_linear_system(&mut rng, 5, 3, true).unwrap();
        let spectrum = eig(&spec.a).unwrap();
        let complex = spectrum.eigenvalues.iter().filter(|l| l.im.abs() > 1e-9).count();
        assert_eq!(complex, 4);
    }

    #[test]
    fn scalar_geometric_decay() {
        let spec = LinearSystemSpec {
            n: 1,
            p: 1,
            a: Mat::new(1, 1, vec![0.5]).unwrap(),
            c: Mat::identity(1),
            marginally_stable: false,
        };
        let tr = simulate_linear(&spec, &[1.0], 3).unwrap();
        assert_eq!(tr.samples.data(), &[1.0, 0.5, 0.25]);
        assert_eq!(tr.dt, 1.0);
    }

    #[test]
    fn zero_initial_condition_stays_zero() {
        let mut rng = Rng::new(5);
        let spec = random_linear_system(&mut rng, 4, 2, true).unwrap();
        let tr = simulate_linear(&spec, &[0.0; 4], 5).unwrap();
        assert!(tr.samples.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_matrix_power_oracle() {
        let mut rng = Rng::new(6);
        let spec = random_linear_system(&mut rng, 6, 3, true).unwrap();
        let x0: Vec<f64> = (0..6).map(|_| rng.gauss()).collect();
        let tr = simulate_linear(&spec, &x0, 12).unwrap();
        // direct matrix power: a^10 x0
        let mut apow = Mat::identity(6);
        for _ in 0..10 {
            apow = spec.a.matmul(&apow);
        }
        let expect = spec.c.matvec(&apow.matvec(&x0));
        for (got, want) in tr.sample(10).iter().zip(&expect) {
            let denom = want.abs().max(1e-9);
            assert!((got - want).abs() / denom < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn every_step_matches_closed_form() {
        let mut rng = Rng::new(7);
        let spec = random_linear_system(&mut rng, 4, 4, false).unwrap();
        let x0: Vec<f64> = (0..4).map(|_| rng.gauss()).collect();
        let tr = simulate_linear(&spec, &x0, 20).unwrap();
        let mut apow = Mat::identity(4);
        for t in 0..20 {
            let expect = spec.c.matvec(&apow.matvec(&x0));
            for (got, want) in tr.sample(t).iter().zip(&expect) {
                let denom = want.abs().max(1e-12);
                assert!((got - want).abs() / denom < 1e-9);
            }
            apow = spec.a.matmul(&apow);
        }
    }
}
