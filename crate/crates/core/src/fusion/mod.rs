//! Constrained Kalman filter and RTS smoother over the latent high-resolution
//! state, with block-diagonal covariance approximations.

mod kalman;
mod pipeline;
mod smoother;
mod structure;

pub use kalman::{constrain, predict, update, update_in_place, Transition, TransitionModel, UpdateStats};
pub use pipeline::{
    canonical_order, run_filter, run_filter_observed, DroppedObservation, FusionInput, FusionSettings, FusionTimeline,
    InstantRecord, Observation, SmaxPolicy, Stage,
};
pub use smoother::smooth;
pub use structure::{BeliefTag, BlockCovariance, CovarianceHealth, CovarianceStructure, StateBelief, StructureKind, DENSE_STATE_CAP};
