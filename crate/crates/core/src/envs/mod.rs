//! Benchmark environments: toy energies, linear and nonlinear dynamics, costs.

pub mod acrobot;
pub mod cart_double_pendulum;
pub mod costs;
pub mod lti;
pub mod pendulum;
pub mod rigid;
pub mod shekel;
pub mod toy;
