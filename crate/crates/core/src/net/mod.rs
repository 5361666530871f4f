//! Occupancy-prediction network and the refinement pipeline around it.

pub mod config;
pub mod model;
pub mod nni;
pub mod refine;
pub mod threshold;
pub mod train;

pub use config::{levels_for, UNetConfig};
pub use model::{ModelWeights, ProbabilityCube};
pub use nni::nni_upsample;
pub use refine::{build_side_channel, determine, predict_cubes, refine, side_channel_counts, Strategy};
pub use threshold::{apply_adaptive_threshold, apply_fixed_threshold, DEFAULT_SIGMA};
pub use train::{train, train_with, EpochStats, TrainConfig, TrainingPair};
