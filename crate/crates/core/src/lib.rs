//! Koopman operator approximation of nonlinear dynamical systems from
//! trajectory data.
//!
//! The crate learns a finite matrix approximation `K` of the Koopman operator
//! in a lifted observable space, by two routes:
//!
//! - **Extended DMD**: least-squares (optionally group-sparse) fit of `K` on
//!   snapshot pairs lifted through a fixed polynomial dictionary.
//! - **Deep DMD**: joint stochastic-gradient optimization of a feedforward
//!   neural dictionary and `K` against one-step lifted prediction error.
//!
//! Supporting modules generate benchmark systems (partially observed linear
//! systems, the glycolytic oscillator, multi-machine swing dynamics), evaluate
//! models by one-step error, multi-step forecasting from a single root point,
//! and spectral analysis, and run the reproducible benchmark suites behind the
//! `ddmd` CLI.

pub mod bench;
pub mod dictionary;
pub mod edmd;
pub mod error;
pub mod eval;
pub mod neural;
pub mod numerics;
pub mod systems;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::{Mat, Rng};
