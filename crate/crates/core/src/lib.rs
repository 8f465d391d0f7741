//! Rate-region engine and Monte Carlo outage simulator for composite
//! Gaussian relay networks with partial channel knowledge at the relays.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod channel;
pub mod covariance;
pub mod linalg;
pub mod outage;
pub mod rate;
pub mod rng;

pub use channel::{
    assemble_covariance, sample_realization, ChannelRealization, CompressionPolicy, GainModel, InputPolicy, ModelError,
    NetworkTopology, Node, RelayView,
};
pub use covariance::{CovarianceError, CovarianceMap, VariableId};
pub use outage::{estimate_curves, DecisionRule, Estimator, OutageEstimate, OutageSetup};
pub use rate::{i_cmnnc, rate_cutset, RateBreakdown, RateMode, RatePlan, StrategyAssignment};
