//! Simulated two-level data, MAR amputation, and the Monte Carlo loop that
//! scores the sampler and the complete-data ML fit on bias, standard errors
//! and interval coverage.
//!
//! Both generators produce the fitted model's shape: continuous `C1`
//! (amputable) and `C2` (always observed), one binary `D`, and an
//! interaction of `C1` with `D`. The regressor written `X_j` in the
//! generating equations is `C2`.

mod ampute;
mod generate;
mod study;

pub use ampute::{ampute_mar, missing_rates, MarCoef, MarSpec};
pub use generate::{
    gen_general_location, gen_latent_normal, generate, sim_model_spec, Truth, GENERAL_LOCATION_C2_MEAN,
    LATENT_NORMAL_C2_MEAN,
};
pub use study::{
    run_replication, run_replications, run_study, simulate_pair, summarize_study, Estimate, MetricRow,
    MetricsTable, Mechanism, ReplicationResult, SimScenario, StudyResult,
};
