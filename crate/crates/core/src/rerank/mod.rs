//! Candidate featurisation, a linear scoring model, and its offline
//! training (logistic, advantage-weighted, fitted Q).

pub mod features;
pub mod model;
pub mod train;

pub use features::{featurize, FeatureContext, DIM};
pub use model::{load_model, save_model, ModelKind, RerankError, RerankModel};
pub use train::{
    awr_weights, build_rewards, least_squares, train_awr, train_fitted_q, train_logistic, StepOutcome, TrainConfig, ADVANTAGE_CLAMP, COMPLETION_BONUS, TrainReport, TrainWarning,
    Transition,
};
