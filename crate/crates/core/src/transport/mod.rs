//! Metrics, empirical measures and Wasserstein / total-variation estimation.

mod coupling;
mod exact;
mod measure;
mod metric;
mod one_d;

pub use coupling::{coupling_upper_bound, tv_distance, CouplingEstimate};
pub use exact::{
    solve_transport, wasserstein_exact, ExactTransport, PlanEdge, TransportPlan, MAX_PLAN_SIZE,
};
pub use measure::{EmpiricalMeasure, SupportKey};
pub use metric::{BoundedMetric, CostFn, DiscreteMetric, Euclidean, Metric, MetricSpec};
pub use one_d::{monotone_coupling, wasserstein_1d, wasserstein_1d_to_uniform};
