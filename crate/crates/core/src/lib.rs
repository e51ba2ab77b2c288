//! PRB allocation for layered RAN slicing.
//!
//! The same allocation semantics are available two ways: [`oracle::simulate`]
//! runs them forward, and [`smt`] encodes them as an SMT-LIB script whose
//! unique model decodes back to the same [`AllocationTrace`].

pub mod batch;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod presets;
pub mod properties;
pub mod ratio;
pub mod scenario;
pub mod smt;
pub mod trace;

pub use model::{ConfigError, NetworkConfig, ServiceSpec, SliceSpec, ThroughputParams};
pub use oracle::{simulate, SimError};
pub use scenario::{DistributionSpec, ScenarioProfile, ScenarioTrace};
pub use trace::{AllocationTrace, SliceState, SystemState};
