//! Exit-time estimators on a quantized chain, the Monte Carlo reference,
//! horizon selection and error-bound evaluators.

mod bounds;
mod estimators;
mod horizon;
mod mc;

pub use bounds::{bound_moment, bound_q, bound_r_moment, BoundInputs, BoundReport, QTildeSource};
pub use estimators::{
    check_target_subset, default_s_grid, exit_estimates, moment, q_hat, r_hat_dist, r_hat_mom,
    recursion_step, survival_curve, validate_s_grid, CrossingTable, ExitEstimates, SurvivalCurve,
};
pub use horizon::{horizon_bound, mc_horizon_scan, min_horizon, worst_case_moments, HorizonScan};
pub use mc::{mc_oracle, Estimate, McReport, MIN_SAMPLES};
