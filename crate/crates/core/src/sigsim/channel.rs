//! AWGN channel.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::signal::ComplexSignal;

/// Adds circularly-symmetric complex Gaussian noise so that the expected
/// SNR relative to the measured signal power equals `snr_db`.
///
/// An infinite `snr_db` disables the channel entirely and returns the
/// input unchanged.
pub fn add_awgn<R: Rng + ?Sized>(
    signal: &ComplexSignal,
    snr_db: f64,
    rng: &mut R,
) -> Result<ComplexSignal> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(signal.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::config("SNR must be finite or +inf"));
    }
    let p_signal = signal.power();
    if p_signal <= 0.0 {
        return Err(Error::UndefinedSnr);
    }
    let p_noise = p_signal / 10f64.powf(snr_db / 10.0);
    let sigma = (p_noise / 2.0).sqrt();
    let out = signal
        .samples()
        .iter()
        .map(|&x| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            x + Complex64::new(re * sigma, im * sigma)
        })
        .collect();
    Ok(ComplexSignal::from_vec_unchecked(out))
}
