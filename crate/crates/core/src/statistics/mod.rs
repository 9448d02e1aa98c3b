//! Monte Carlo estimators and the comparison experiments between the micro
//! family and its effective equation: weak pairings, strong `L²` gaps,
//! energy functionals and long-time moments.
//!
//! Every reduction over paths runs in seed order with pairwise summation, so
//! results do not depend on the thread count.

mod compare;
mod estimate;
mod series;
mod stationary;

pub use compare::{
    energy_sup_gap, run_comparison, weak_pairing_gap, write_convergence_csv, Comparison, MicroMember, SupGap,
    TableRow, TimeWeight,
};
pub use estimate::{cumulative_trapezoid, estimate, strictly_decreasing, weighted_trapezoid, EnsembleResult, Estimate};
pub use series::{
    est1_check, observe_ensemble, strong_l2_gap, EnergySeries, EnsembleSeries, Est1Bound, Est1Check, ItoCheck,
    Observer, PathRecord, StrongGapProbe, StrongPair,
};
pub use stationary::{
    fit_exponential, stationary_experiment, ExponentialFit, StationaryMember, StationaryReport, StationaryRow,
};
