//! Microscopic simulator of a dynamic-flexible electric-van platoon and the
//! regression / F-test harness used to validate it.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clock;
pub mod driver;
pub mod dynamics;
pub mod platoon;
pub mod plot;
pub mod report;
pub mod road_net;
pub mod scalar;
pub mod scenario;
pub mod selftest;
pub mod sim;
pub mod stats;
pub mod telemetry;

pub use clock::{Clock, Tick};
pub use scalar::Scalar;
pub use scenario::{load_scenario, Scenario};
pub use sim::{run_cell, Dataset, RunOutput, UseCase};

/// Regression model in double precision.
pub type Regression = stats::RegressionModel<f64>;
/// Regression model in single precision.
pub type Regression32 = stats::RegressionModel<f32>;
/// Coefficient-equality F-test result in double precision.
pub type FTest = stats::FTestResult<f64>;
/// Coefficient-equality F-test result in single precision.
pub type FTest32 = stats::FTestResult<f32>;
