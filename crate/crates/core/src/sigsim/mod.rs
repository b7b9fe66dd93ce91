//! Baseband transmitter simulation.
//!
//! A sample is synthesized as: random constellation symbols, RRC pulse
//! shaping, the device's SSPA nonlinearity, then AWGN. Every record draws
//! its randomness from a stream derived from the master seed and the
//! record index, so datasets are reproducible and records are independent.

mod channel;
mod constellation;
mod rrc;
mod sspa;

pub use channel::add_awgn;
pub use constellation::{generate_symbols, Modulation, SymbolStream};
pub use rrc::{pulse_shape, rrc_taps, shape_untrimmed};
pub use sspa::{apply_sspa, perturb_profiles, DeviceProfile, REFERENCE_PROFILES};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{Dataset, DatasetRecord};
use crate::error::{Error, Result};
use crate::seed::derive_rng;
use crate::signal::ComplexSignal;

/// Parameters of the transmitter simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub modulation: Modulation,
    /// Oversampling ratio (samples per symbol).
    pub sps: usize,
    /// RRC rolloff factor.
    pub rolloff: f64,
    /// RRC span in symbols.
    pub filter_span: usize,
    /// Samples per emitted record.
    pub sample_len: usize,
    /// Channel SNR in dB; +inf disables the channel.
    pub snr_db: f64,
    /// Amplifier input backoff in dB (0 = peak-normalized drive).
    pub backoff_db: f64,
    /// Master seed for per-record randomness.
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            modulation: Modulation::Qpsk,
            sps: 8,
            rolloff: 0.35,
            filter_span: 10,
            sample_len: 1024,
            snr_db: 18.0,
            backoff_db: 0.0,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sps < 1 {
            return Err(Error::config("sps must be at least 1"));
        }
        if !(self.rolloff > 0.0 && self.rolloff <= 1.0) {
            return Err(Error::config("rolloff must lie in (0, 1]"));
        }
        if self.filter_span < 2 {
            return Err(Error::config("filter span must be at least 2 symbols"));
        }
        if self.sample_len == 0 || self.sample_len % self.sps != 0 {
            return Err(Error::config("sample_len must be a positive multiple of sps"));
        }
        if self.snr_db.is_nan() || (self.snr_db.is_infinite() && self.snr_db < 0.0) {
            return Err(Error::config("snr_db must be finite or +inf"));
        }
        if !self.backoff_db.is_finite() {
            return Err(Error::config("backoff_db must be finite"));
        }
        Ok(())
    }

    /// Symbols required so the centered trim keeps only steady-state output.
    fn symbols_per_record(&self) -> usize {
        self.sample_len / self.sps + self.filter_span
    }
}

/// Synthesizes one record for `profile`: symbols, pulse shaping, SSPA,
/// AWGN. The result has exactly `config.sample_len` samples.
pub fn synthesize_sample<R: Rng + ?Sized>(
    profile: &DeviceProfile,
    config: &SimulationConfig,
    rng: &mut R,
) -> Result<ComplexSignal> {
    run_pipeline(Some(profile), config, rng)
}

/// The staged pipeline behind [`synthesize_sample`]; `profile = None`
/// bypasses the amplifier (used to verify the composition is exactly the
/// chain of its stages).
pub(crate) fn run_pipeline<R: Rng + ?Sized>(
    profile: Option<&DeviceProfile>,
    config: &SimulationConfig,
    rng: &mut R,
) -> Result<ComplexSignal> {
    config.validate()?;
    let stream = generate_symbols(config.symbols_per_record(), config.modulation, rng)?;
    let shaped = pulse_shape(&stream, config)?;
    let emitted = match profile {
        Some(p) => apply_sspa(&shaped, p, config.backoff_db)?,
        None => shaped,
    };
    add_awgn(&emitted, config.snr_db, rng)
}

/// Generates `per_device` labeled records for every profile.
///
/// Record `k` of device `d` uses RNG stream `d * per_device + k` of the
/// master seed, so generation order (or parallelism) cannot change the
/// result.
pub fn build_dataset(
    profiles: &[DeviceProfile],
    config: &SimulationConfig,
    per_device: usize,
) -> Result<Dataset> {
    config.validate()?;
    if per_device == 0 {
        return Err(Error::config("per_device must be positive"));
    }
    if profiles.len() < 2 {
        return Err(Error::config("need at least two device profiles"));
    }
    for (i, p) in profiles.iter().enumerate() {
        p.validate()?;
        if p.id as usize != i {
            return Err(Error::config(format!(
                "profile ids must be 0..C-1 in order (found {} at position {i})",
                p.id
            )));
        }
    }

    use rayon::prelude::*;
    let total = profiles.len() * per_device;
    let records: Vec<DatasetRecord> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let device = idx / per_device;
            let mut rng = derive_rng(config.seed, idx as u64);
            let signal = synthesize_sample(&profiles[device], config, &mut rng)?;
            Ok(DatasetRecord {
                signal,
                label: device as u16,
                source: 0,
            })
        })
        .collect::<Result<_>>()?;

    Dataset::new(
        records,
        profiles.len() as u32,
        config.sample_len,
        generation_digest(config, profiles),
    )
}

/// SHA-256 over the canonical JSON of the generation inputs.
pub fn generation_digest(config: &SimulationConfig, profiles: &[DeviceProfile]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(&(config, profiles)).expect("config serializes"));
    hasher.finalize().into()
}
