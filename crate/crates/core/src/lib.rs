//! Ordered pivotal sampling with Horvitz-Thompson estimation.
//!
//! The population is split into microstrata along the integer boundaries of
//! the cumulated inclusion probabilities; one unit is selected per stratum
//! by a sequence of pivotal face-offs. The crate also provides an exact
//! enumeration oracle for small populations, variance estimators, a
//! superpopulation model with correlated errors, and numerical checks of the
//! moment bounds and central-limit behaviour of the estimator.

#![allow(clippy::needless_range_loop)]

pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod io;
pub mod joint;
pub mod microstrata;
pub mod model;
pub mod normal;
pub mod oracle;
pub mod population;
pub mod rng;
pub mod sampler;

pub use diagnostics::{BoundCheck, CltConfig, CltMode, SimulationReport, VarianceUsed};
pub use error::{Error, Result};
pub use estimation::{EstimatorReport, XiDecomposition, ZeroPairs};
pub use joint::JointInclusion;
pub use microstrata::{decompose, MicrostratumDecomposition, Slot, Stratum};
pub use model::{AssumptionReport, Kernel, ModelConfig};
pub use oracle::{enumerate, EnumerateOptions, ExactDistribution};
pub use population::PopulationSpec;
pub use sampler::{draw, SampleDraw, StratumStep};
