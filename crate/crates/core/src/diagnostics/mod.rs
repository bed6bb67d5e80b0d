//! Exact bound and identity checks at small N, and Monte Carlo CLT experiments.

mod bounds;
mod clt;

pub use bounds::{
    check_all, check_lemmas, check_prop1, check_prop2, check_prop3, check_prop4, carry_factors, BoundCheck,
    BOUND_TOLERANCE,
};
pub use clt::{clt_experiment, CltConfig, CltMode, Replicate, SimulationReport, VarianceUsed, DEFAULT_PILOT_REPLICATES};
