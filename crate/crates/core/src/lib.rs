//! Simulation and analysis of the GMS species model with threshold extinction.
//!
//! Species arrive as a marked Poisson stream of fitness values; extinction
//! events arrive as an independent marked Poisson stream of thresholds, and
//! each one removes every species whose fitness is strictly below its
//! threshold. The crate provides the forward simulator, record-ladder samplers
//! for the counts `M` and `N` and for the limit configuration, quadrature for
//! the recurrence and limit-count criteria, and a replication harness with
//! goodness-of-fit tests.

pub mod asymptotics;
pub mod configuration;
pub mod criteria;
pub mod distributions;
pub mod error;
pub mod ladder;
pub mod montecarlo;
pub mod numeric;
pub mod oracle;
pub mod process;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod validation;

pub use configuration::Configuration;
pub use distributions::{DistributionSpec, ModelParams};
pub use error::{Error, Result};
pub use rng::RandomStream;
