//! Freeze-and-grow recovery: one parameter store holding a nested family of
//! descendant models, from the seed model up to the vanilla architecture.

pub mod format;
pub mod model;
pub mod switch;

pub use model::{
    build_multi_capacity, BuildOutcome, CapacityMask, GrowReport, MultiCapacityModel, ParamLevels,
    RecoveryConfig, RetrainReport,
};
pub use switch::{switch_delta_from_sizes, SwitchDelta};
