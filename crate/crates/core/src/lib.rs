//! Planning toolkit for fast-charging EV infrastructure (EVCI) on radial
//! distribution feeders.
//!
//! * [`network`]: feeder data model, CSV ingestion and the bundled 33-bus case.
//! * [`loadflow`]: forward-backward sweep load flow and the loss / voltage
//!   deviation objectives.
//! * [`siting`]: Pareto archive machinery, the multi-objective PSO optimizer
//!   and the exhaustive enumeration used to verify it.
//! * [`evsim`]: stochastic EV charging sessions, hourly EVCI load profiles and
//!   time-series load flow.
//! * [`pricing`]: EVCI tariffs and daily settlement against grid prices.
//! * [`forecast`]: ARIMA order selection, CSS fitting, forecasting and scoring.

// negated comparisons are used on purpose so NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod evsim;
pub mod forecast;
pub mod loadflow;
pub mod network;
pub mod pricing;
pub mod siting;

pub use loadflow::{objectives, solve, LoadFlowConfig, LoadFlowSolution};
pub use network::{apply_placement, load_feeder, Branch, Bus, FeederNetwork, NetworkError, Placement};
