//! Verdicts from samples: limiting laws, KS statistics and diagnostic reports.

mod bounds;
mod deloc;
mod ks;
mod laws;
mod locallaw;
mod universality;

pub use bounds::{
    a_hat_ratio, empirical_bound_check, regularity_check, BoundIndexing, EmpiricalBoundPoint, EmpiricalBoundReport,
    RegularityReport,
};
pub use deloc::{delocalization_stats, DelocalizationReport, DelocalizationSample};
pub use ks::{dkw_epsilon, ks_distance, ks_two_sample, EmpiricalCdf};
pub use laws::{exact_law_complex, exact_law_real, target_for, target_laws, TargetLaw};
pub use locallaw::{
    local_law_residual, resolvent_identities, LocalLawPoint, LocalLawReport, ResolventIdentities,
};
pub use universality::{
    edge_density, scaling_constant, universality_experiment, write_cdf_csv, write_lsv_csv, Scaling,
    UniversalityOutcome, UniversalityReport, UniversalitySetup,
};
