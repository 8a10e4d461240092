//! Benchmark system families and sampled trajectory generation.
//!
//! Three families: randomly generated partially observed linear systems, the
//! seven-state glycolytic oscillator, and multi-machine swing dynamics on a
//! Kron-reduced network. Each family ships with a validation gate that
//! refuses to run a benchmark on data that does not actually oscillate.

mod glycolysis;
mod linear;
mod swing;
mod trajectory;

pub use glycolysis::{glycolysis_rhs, GlycolysisParams, GLYCOLYSIS_IC_BOX};
pub use linear::{random_linear_system, simulate_linear, LinearSystemSpec};
pub use swing::{
    bundled_swing_10gen, perturbed_swing_ic, simulate_swing, swing_params_from_toml,
    swing_params_to_toml, swing_rhs, SwingParams,
};
pub use trajectory::{
    damped_oscillation_gate, fmt_full, limit_cycle_gate, make_dataset, simulate_ode, Dataset,
    Split, Trajectory,
};
