//! Square-root raised cosine pulse shaping.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::ComplexSignal;
use crate::sigsim::{SimulationConfig, SymbolStream};

/// Unit-energy square-root raised cosine taps.
///
/// The filter spans `span` symbols at `sps` samples per symbol, giving an
/// odd, symmetric tap vector of length `span * sps + 1`. The removable
/// singularities of the closed form at t = 0 and |t| = 1/(4*rolloff) are
/// evaluated by their analytic limits.
pub fn rrc_taps(sps: usize, rolloff: f64, span: usize) -> Result<Vec<f64>> {
    if sps < 1 {
        return Err(Error::config("sps must be at least 1"));
    }
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(Error::config("rolloff must lie in (0, 1]"));
    }
    if span < 2 {
        return Err(Error::config("filter span must be at least 2 symbols"));
    }

    let half = (span * sps) as i64 / 2;
    let n = span * sps + 1;
    let mut taps = Vec::with_capacity(n);
    for i in -half..=half {
        let t = i as f64 / sps as f64;
        taps.push(rrc_impulse(t, rolloff));
    }

    let energy: f64 = taps.iter().map(|h| h * h).sum();
    let norm = energy.sqrt();
    for h in &mut taps {
        *h /= norm;
    }
    Ok(taps)
}

/// Closed-form RRC impulse response at symbol-normalized time `t`.
fn rrc_impulse(t: f64, beta: f64) -> f64 {
    use std::f64::consts::PI;
    if t == 0.0 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    let singular = 1.0 / (4.0 * beta);
    if (t.abs() - singular).abs() < 1e-12 {
        let x = PI / (4.0 * beta);
        return (beta / 2f64.sqrt())
            * ((1.0 + 2.0 / PI) * x.sin() + (1.0 - 2.0 / PI) * x.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Zero-insertion upsampling followed by the full RRC convolution, with no
/// trimming. Output length is `symbols.len() * sps + taps.len() - 1`.
pub fn shape_untrimmed(symbols: &[Complex64], sps: usize, taps: &[f64]) -> Vec<Complex64> {
    let up_len = symbols.len() * sps;
    let out_len = up_len + taps.len() - 1;
    let mut out = vec![Complex64::new(0.0, 0.0); out_len];
    // Upsampled input is non-zero only at multiples of sps, so the
    // convolution reduces to a sparse accumulation.
    for (si, &sym) in symbols.iter().enumerate() {
        let base = si * sps;
        for (k, &h) in taps.iter().enumerate() {
            out[base + k] += sym * h;
        }
    }
    out
}

/// Upsamples and shapes a symbol stream, trimming the result to exactly
/// `config.sample_len` samples. Filter edge transients are discarded
/// symmetrically.
pub fn pulse_shape(stream: &SymbolStream, config: &SimulationConfig) -> Result<ComplexSignal> {
    if stream.symbols.is_empty() {
        return Err(Error::config("symbol stream is empty"));
    }
    let taps = rrc_taps(config.sps, config.rolloff, config.filter_span)?;
    let full = shape_untrimmed(&stream.symbols, config.sps, &taps);
    if full.len() < config.sample_len {
        return Err(Error::InsufficientSymbols {
            needed: config.sample_len,
            available: full.len(),
        });
    }
    let start = (full.len() - config.sample_len) / 2;
    Ok(ComplexSignal::from_vec_unchecked(
        full[start..start + config.sample_len].to_vec(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::derive_rng;
    use crate::sigsim::{add_awgn, generate_symbols, Modulation};

    #[test]
    fn taps_are_symmetric_unit_energy() {
        let taps = rrc_taps(8, 0.35, 10).unwrap();
        assert_eq!(taps.len(), 81);
        for i in 0..taps.len() {
            assert!(
                (taps[i] - taps[taps.len() - 1 - i]).abs() < 1e-15,
                "asymmetry at {i}"
            );
        }
        let energy: f64 = taps.iter().map(|h| h * h).sum();
        assert!((energy - 1.0).abs() < 1e-9);
    }

    #[test]
    fn center_tap_matches_independent_closed_form() {
        // Independent scalar evaluation of the textbook RRC formula over the
        // same grid, normalized the same way. For these parameters only
        // t = 0 needs its limit; no grid point lands on |4*beta*t| = 1.
        let (sps, beta, span) = (8usize, 0.35f64, 10usize);
        use std::f64::consts::PI;
        let half = (span * sps / 2) as i64;
        let mut reference = Vec::new();
        for i in -half..=half {
            let t = i as f64 / sps as f64;
            let h = if i == 0 {
                1.0 - beta + 4.0 * beta / PI
            } else {
                ((PI * t * (1.0 - beta)).sin()
                    + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos())
                    / (PI * t * (1.0 - (4.0 * beta * t).powi(2)))
            };
            reference.push(h);
        }
        let norm = reference.iter().map(|h| h * h).sum::<f64>().sqrt();
        let expected_center = reference[half as usize] / norm;

        let taps = rrc_taps(sps, beta, span).unwrap();
        assert!((taps[taps.len() / 2] - expected_center).abs() < 1e-12);
    }

    #[test]
    fn single_symbol_untrimmed_is_impulse_response() {
        let taps = rrc_taps(8, 0.35, 10).unwrap();
        let out = shape_untrimmed(&[Complex64::new(1.0, 0.0)], 8, &taps);
        assert_eq!(out.len(), 8 + taps.len() - 1);
        for (i, &h) in taps.iter().enumerate() {
            assert!((out[i].re - h).abs() < 1e-15 && out[i].im.abs() < 1e-15);
        }
        for s in &out[taps.len()..] {
            assert_eq!(*s, Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn output_length_matches_config() {
        let config = SimulationConfig::default();
        let mut rng = derive_rng(11, 0);
        let stream = generate_symbols(
            config.sample_len / config.sps + config.filter_span,
            Modulation::Qpsk,
            &mut rng,
        )
        .unwrap();
        let shaped = pulse_shape(&stream, &config).unwrap();
        assert_eq!(shaped.len(), config.sample_len);
    }

    #[test]
    fn too_few_symbols_is_an_error() {
        let config = SimulationConfig::default();
        let mut rng = derive_rng(11, 1);
        let stream = generate_symbols(4, Modulation::Qpsk, &mut rng).unwrap();
        match pulse_shape(&stream, &config) {
            Err(Error::InsufficientSymbols { .. }) => {}
            other => panic!("expected InsufficientSymbols, got {other:?}"),
        }
    }

    #[test]
    fn matched_filter_recovers_qpsk_at_18db() {
        // End-to-end demodulation oracle: shape, add noise, matched-filter,
        // decimate at symbol instants, slice to the nearest constellation
        // point. Interior symbols must agree at 99%+.
        let sps = 8usize;
        let span = 10usize;
        let n_sym = 256usize;
        let taps = rrc_taps(sps, 0.35, span).unwrap();
        let mut rng = derive_rng(21, 0);
        let stream = generate_symbols(n_sym, Modulation::Qpsk, &mut rng).unwrap();
        let shaped = shape_untrimmed(&stream.symbols, sps, &taps);
        let noisy = add_awgn(
            &ComplexSignal::new(shaped).unwrap(),
            18.0,
            &mut derive_rng(21, 1),
        )
        .unwrap();

        // Matched filter = same RRC; cascaded delay is taps.len() - 1.
        let mut filtered = vec![Complex64::new(0.0, 0.0); noisy.len() + taps.len() - 1];
        for (i, &x) in noisy.samples().iter().enumerate() {
            for (k, &h) in taps.iter().enumerate() {
                filtered[i + k] += x * h;
            }
        }
        let delay = taps.len() - 1;
        let points = Modulation::Qpsk.constellation();
        let mut agree = 0usize;
        let mut total = 0usize;
        for si in span..n_sym - span {
            let sample = filtered[delay + si * sps];
            let detected = points
                .iter()
                .min_by(|a, b| {
                    (sample - *a)
                        .norm()
                        .partial_cmp(&(sample - *b).norm())
                        .unwrap()
                })
                .unwrap();
            if (detected - stream.symbols[si]).norm() < 1e-9 {
                agree += 1;
            }
            total += 1;
        }
        let rate = agree as f64 / total as f64;
        assert!(rate >= 0.99, "symbol agreement {rate}");
    }
}
