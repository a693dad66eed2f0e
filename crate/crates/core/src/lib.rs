//! Distortion of deliberation in tiny groups: metric instances, group
//! deliberation models, Copeland tournaments over deliberation outcomes,
//! and certified worst-case bounds.

pub mod bounds;
pub mod deliberation;
pub mod error;
pub mod instances;
pub mod metric;
pub mod optimizer;
pub mod rng;
pub mod sampling;
pub mod solver_avg;
pub mod solver_random;
pub mod tournament;

pub use deliberation::{BiasTransform, Method, ModelConfig, PkResult, Variant};
pub use error::{Error, Result};
pub use instances::InstanceFamily;
pub use metric::{BiasDistribution, Location, MetricInstance};
pub use tournament::{PMatrix, PkMode, Tournament};
