//! Optimization and the training loops.

pub mod adam;
pub mod config;
pub mod gradient;
pub mod history;
pub mod lds_train;
pub mod recognition_train;
pub mod suite;

pub use adam::AdamState;
pub use config::TrainConfig;
pub use gradient::{check_gradient, gradient, FiniteDifferenceConfig, GroupCheck, Objective};
pub use history::EpochRecord;
pub use lds_train::{train_lds, LdsObjective, LdsTerm, StepReport, TrainFailure, TrainOutcome};
pub use recognition_train::{check_identities, train_recognition, GaitSample, LossBreakdown, LossWeights, RecognitionObjective};
pub use suite::{known_groups, run_gradcheck_suite, SuiteOptions, SuiteReport, SuiteRow};
