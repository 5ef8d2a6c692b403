//! Statistical verification of drift conditions, one-step contraction on
//! level sets, and the weighted semimetric `l`.

mod drift;
mod dsmall;
mod report;
mod semimetric;

pub use drift::{
    admissible_r, check_cumulative_drift, check_drift_continuous, check_drift_discrete,
    check_drift_enumerated, enumerated_drift_margin, AdmissibleR, CumulativeDriftReport,
    MIN_DRIFT_SAMPLES,
};
pub use dsmall::{
    estimate_dsmall, sample_level_set_pairs, DsmallReport, DsmallRow, CI_FLOOR, DSMALL_REPLICATES,
    EXACT_OT_SAMPLES,
};
pub use report::{DriftReport, DriftRow, Verdict};
pub use semimetric::{
    contraction_beta, estimate_onestep_l_contraction, semimetric_l_eval, LContractionReport,
    LContractionRow, SemimetricL,
};
