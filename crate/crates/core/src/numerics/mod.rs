//! Dense real linear algebra, complex eigendecomposition, ODE integration,
//! and seeded random sampling used by every other module.
//!
//! Everything here is implemented directly on row-major `f64` storage; the
//! matrix sizes in play (lifted dimensions up to a few hundred, snapshot
//! counts up to a few thousand) do not warrant an external linear algebra
//! dependency.

mod eig;
mod mat;
mod ode;
mod rng;
mod svd;

pub use eig::{eig, ComplexSpectrum, C64};
pub use mat::Mat;
pub use ode::rk4_step;
pub use rng::Rng;
pub use svd::{lstsq, pinv, svd, Svd};
