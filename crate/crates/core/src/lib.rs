//! RF fingerprinting toolkit: baseband signal synthesis with simulated
//! power-amplifier fingerprints, constellation-aware signal augmentation,
//! a small 1-D residual CNN trained from scratch, and a semi-supervised
//! training loop built on consistency perturbation and pseudo-labeling.

pub mod augment;
pub mod dataio;
pub mod error;
pub mod nn;
pub mod seed;
pub mod semisup;
pub mod sigsim;
pub mod signal;

pub use error::{Error, Result};
pub use signal::ComplexSignal;

pub use dataio::{Dataset, SplitSpec};
pub use nn::{ModelConfig, Parameters, Resnet1d};
pub use semisup::{LabeledSet, TrainerConfig, TrainingMode, UnlabeledSet};
pub use sigsim::{DeviceProfile, Modulation, SimulationConfig};
