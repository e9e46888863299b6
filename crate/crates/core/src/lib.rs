//! Optimal price, quoted lead time and demand rate for a make-to-order firm
//! facing linear price- and lead-time-sensitive demand.
//!
//! Two operating policies are modelled: rejecting arrivals once `K` jobs are
//! in the system (M/M/1/K) and accepting every arrival (M/M/1). For `K = 1`
//! the optimum is available in closed form ([`closed_form`]); general `K` and
//! the accept-all baselines are solved numerically ([`numeric`]). The
//! [`comparison`] module measures how much the rejection policy gains, and
//! [`sim`] validates the queueing formulas by discrete-event simulation.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to one of them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod cli;
pub mod closed_form;
pub mod comparison;
pub mod error;
pub mod market;
pub mod numeric;
pub mod queueing;
pub mod scalar;
pub mod sim;

pub use closed_form::{Branch, Solution};
pub use comparison::{GainCell, GainTable};
pub use error::{Error, Result};
pub use market::{MarketParams, Policy};
pub use numeric::{OracleModel, SolverConfig};
pub use queueing::QueueMetrics;
pub use scalar::Scalar;
pub use sim::{Estimate, SimReport, ValidationVerdict};

pub type MarketParamsF64 = MarketParams<f64>;
pub type MarketParamsF32 = MarketParams<f32>;
pub type PolicyF64 = Policy<f64>;
pub type PolicyF32 = Policy<f32>;
pub type SolutionF64 = Solution<f64>;
pub type SolutionF32 = Solution<f32>;
pub type QueueMetricsF64 = QueueMetrics<f64>;
pub type QueueMetricsF32 = QueueMetrics<f32>;
pub type SolverConfigF64 = SolverConfig<f64>;
pub type SolverConfigF32 = SolverConfig<f32>;
pub type GainTableF64 = GainTable<f64>;
