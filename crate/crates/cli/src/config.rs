//! Experiment configuration: presets, the JSON config file, and flag
//! overrides, resolved in that order.

use serde::{Deserialize, Serialize};
use std::path::Path;

use rffp_core::augment::{AugmentationSpec, Augmentor};
use rffp_core::semisup::{TrainerConfig, TrainingMode};
use rffp_core::sigsim::Modulation;
use rffp_core::{Error, ModelConfig, Result, SimulationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Minutes-scale defaults: 4 devices, 500 records each, 1 conv block,
    /// 40 epochs, 5 trials.
    Desk,
    /// The full regime: 10 devices, 10000 records each, 2 conv blocks,
    /// 230 epochs, 20 trials.
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::config(format!("unknown preset `{other}`"))),
        }
    }
}

/// How device profiles are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSource {
    /// The first `devices` measured reference rows.
    Reference,
    /// Specific reference rows, relabeled 0..len. Small device subsets
    /// should avoid near-twin rows (0 and 3 differ by ~0.2% in AM/AM at
    /// full drive).
    ReferenceRows { rows: Vec<usize> },
    /// Random offsets applied to the first reference row.
    Perturbed { offset_scale: f64 },
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub devices: usize,
    pub per_device: usize,
    pub profile_source: ProfileSource,
    pub modulation: Modulation,
    pub sps: usize,
    pub rolloff: f64,
    pub filter_span: usize,
    pub sample_len: usize,
    /// `None` disables the channel.
    pub snr_db: Option<f64>,
    pub backoff_db: f64,
    pub ratios: (u32, u32, u32),
    pub labeled_per_device: usize,
    pub unlabeled_per_device: usize,
    pub num_conv_blocks: usize,
    pub stem_kernels: usize,
    pub stem_size: usize,
    pub stem_stride: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub mode: TrainingMode,
    pub kappa: f64,
    pub tau: f64,
    pub epochs: usize,
    pub labeled_batch: usize,
    pub pseudo_batch: usize,
    /// `None` picks the per-mode default (1e-3 supervised, 3e-4 otherwise).
    pub learning_rate: Option<f64>,
    pub k_segments: usize,
    pub eval_every_epoch: bool,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = Self {
            seed: 0,
            trials: 5,
            devices: 4,
            per_device: 500,
            profile_source: ProfileSource::ReferenceRows {
                rows: vec![0, 2, 5, 9],
            },
            modulation: Modulation::Qpsk,
            sps: 8,
            rolloff: 0.35,
            filter_span: 10,
            sample_len: 1024,
            snr_db: Some(18.0),
            backoff_db: 0.0,
            ratios: (3, 1, 1),
            labeled_per_device: 10,
            unlabeled_per_device: 250,
            num_conv_blocks: 1,
            stem_kernels: 64,
            stem_size: 7,
            stem_stride: 2,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
            mode: TrainingMode::Proposal,
            kappa: 0.5,
            tau: 0.7,
            epochs: 40,
            labeled_batch: 8,
            pseudo_batch: 32,
            learning_rate: None,
            k_segments: 16,
            eval_every_epoch: false,
        };
        match preset {
            Preset::Desk => base,
            Preset::Paper => Self {
                trials: 20,
                devices: 10,
                per_device: 10_000,
                profile_source: ProfileSource::Reference,
                unlabeled_per_device: 1000,
                num_conv_blocks: 2,
                epochs: 230,
                labeled_batch: 32,
                ..base
            },
        }
    }

    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            modulation: self.modulation,
            sps: self.sps,
            rolloff: self.rolloff,
            filter_span: self.filter_span,
            sample_len: self.sample_len,
            snr_db: self.snr_db.unwrap_or(f64::INFINITY),
            backoff_db: self.backoff_db,
            seed: self.seed,
        }
    }

    pub fn model(&self, num_classes: usize, input_len: usize) -> ModelConfig {
        ModelConfig {
            num_conv_blocks: self.num_conv_blocks,
            stem_kernels: self.stem_kernels,
            stem_size: self.stem_size,
            stem_stride: self.stem_stride,
            base_channels: self.stem_kernels,
            num_classes,
            input_len,
            input_channels: 2,
            bn_momentum: self.bn_momentum,
            bn_eps: self.bn_eps,
        }
    }

    /// The composite transform used for labeled augmentation and unlabeled
    /// perturbation.
    pub fn composite_augmentor(&self) -> Result<Augmentor> {
        let spec = AugmentationSpec::new(self.modulation, self.k_segments, false)?;
        spec.validate_for(self.sample_len, self.sps)?;
        Ok(Augmentor::Composite(spec))
    }

    pub fn trainer(&self, augment: Augmentor) -> TrainerConfig {
        let lr = self.learning_rate.unwrap_or(match self.mode {
            TrainingMode::Supervised => 1e-3,
            TrainingMode::Proposal | TrainingMode::Fixmatch => 3e-4,
        });
        TrainerConfig {
            mode: self.mode,
            kappa: self.kappa,
            tau: self.tau,
            epochs: self.epochs,
            labeled_batch: self.labeled_batch,
            pseudo_batch: self.pseudo_batch,
            learning_rate: lr,
            augment,
            weak_augment: Augmentor::Rotation {
                modulation: self.modulation,
            },
            eval_every_epoch: self.eval_every_epoch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.devices < 2 {
            return Err(Error::config("need at least 2 devices"));
        }
        match &self.profile_source {
            ProfileSource::Reference if self.devices > 10 => {
                return Err(Error::config(
                    "only 10 reference transmitters exist; use a perturbed profile source",
                ));
            }
            ProfileSource::ReferenceRows { rows } => {
                if self.devices > rows.len() {
                    return Err(Error::config(format!(
                        "profile row list has {} entries but {} devices requested",
                        rows.len(),
                        self.devices
                    )));
                }
                if rows.iter().any(|&r| r >= 10) {
                    return Err(Error::config("reference rows must be in 0..10"));
                }
            }
            _ => {}
        }
        self.simulation().validate()?;
        Ok(())
    }
}

/// The JSON config file: every field optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub trainer: TrainerSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub devices: Option<usize>,
    pub per_device: Option<usize>,
    pub profile_source: Option<ProfileSource>,
    pub modulation: Option<Modulation>,
    pub sps: Option<usize>,
    pub rolloff: Option<f64>,
    pub filter_span: Option<usize>,
    pub sample_len: Option<usize>,
    /// A number, or null to disable the channel.
    #[serde(default, with = "optional_field")]
    pub snr_db: Option<Option<f64>>,
    pub backoff_db: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub ratios: Option<(u32, u32, u32)>,
    pub labeled_per_device: Option<usize>,
    pub unlabeled_per_device: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub num_conv_blocks: Option<usize>,
    pub stem_kernels: Option<usize>,
    pub stem_size: Option<usize>,
    pub stem_stride: Option<usize>,
    pub bn_momentum: Option<f64>,
    pub bn_eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    pub mode: Option<TrainingMode>,
    pub kappa: Option<f64>,
    pub tau: Option<f64>,
    pub epochs: Option<usize>,
    pub labeled_batch: Option<usize>,
    pub pseudo_batch: Option<usize>,
    pub learning_rate: Option<f64>,
    pub k_segments: Option<usize>,
    pub eval_every_epoch: Option<bool>,
}

/// Distinguishes an absent key from an explicit `null`.
mod optional_field {
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D>(de: D) -> Result<Option<Option<f64>>, D::Error>
    where
        D: Deserializer<'de>,
    {
        Ok(Some(Option::<f64>::deserialize(de)?))
    }
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::config(format!("bad config file {}: {e}", path.display())))
    }

    /// Lays the file's explicit fields over a preset base.
    pub fn apply(&self, mut config: ExperimentConfig) -> ExperimentConfig {
        macro_rules! take {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        take!(config.seed, self.seed);
        take!(config.trials, self.trials);
        take!(config.devices, self.simulation.devices);
        take!(config.per_device, self.simulation.per_device);
        take!(config.profile_source, self.simulation.profile_source.clone());
        take!(config.modulation, self.simulation.modulation);
        take!(config.sps, self.simulation.sps);
        take!(config.rolloff, self.simulation.rolloff);
        take!(config.filter_span, self.simulation.filter_span);
        take!(config.sample_len, self.simulation.sample_len);
        take!(config.snr_db, self.simulation.snr_db);
        take!(config.backoff_db, self.simulation.backoff_db);
        take!(config.ratios, self.split.ratios);
        take!(config.labeled_per_device, self.split.labeled_per_device);
        take!(config.unlabeled_per_device, self.split.unlabeled_per_device);
        take!(config.num_conv_blocks, self.model.num_conv_blocks);
        take!(config.stem_kernels, self.model.stem_kernels);
        take!(config.stem_size, self.model.stem_size);
        take!(config.stem_stride, self.model.stem_stride);
        take!(config.bn_momentum, self.model.bn_momentum);
        take!(config.bn_eps, self.model.bn_eps);
        take!(config.mode, self.trainer.mode);
        take!(config.kappa, self.trainer.kappa);
        take!(config.tau, self.trainer.tau);
        take!(config.epochs, self.trainer.epochs);
        take!(config.labeled_batch, self.trainer.labeled_batch);
        take!(config.pseudo_batch, self.trainer.pseudo_batch);
        config.learning_rate = self.trainer.learning_rate.or(config.learning_rate);
        take!(config.k_segments, self.trainer.k_segments);
        take!(config.eval_every_epoch, self.trainer.eval_every_epoch);
        config
    }
}
