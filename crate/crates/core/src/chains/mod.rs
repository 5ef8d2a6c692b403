//! Markov models: the digit-shift autoregression (in floating point and in
//! exact decimals), user kernels, and an Euler–Maruyama integrator for
//! stochastic delay equations on discretized path segments.

mod digit;
mod model;
mod presets;
mod sdde;
mod segment;

pub use digit::{
    digit_reconstruct, digit_step, enumerate_digit_marginal, enumerate_digit_marginal_f64,
    DecimalState, DigitShiftChain, ExactDigitChain, Reconstruction, MAX_ENUMERATION_STEPS,
    RECONSTRUCT_TOL,
};
pub use model::{
    run_chain, sample_marginal, sample_marginal_continuous, sample_paths, ContinuousModel,
    KernelChain, MarkovModel, Skeleton, StateFn, WithLyapunov,
};
pub use presets::{even_quartic_bridge, lyapunov_presets, LyapunovPreset, LyapunovPresetSpec};
pub use sdde::{
    sdde_integrate, sdde_observe, sdde_trajectory, DiffusionFn, DiffusionShape, DriftFn,
    SddeConfig, SddeModel, SddeSpec, VkDrift, BLOWUP_NORM, VK_CHECK_SAMPLES,
};
pub use segment::{PathWindow, SegmentGrid, SegmentState};
