//! The complex baseband signal carried through the whole pipeline.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A fixed-length sequence of complex baseband samples.
///
/// Every sample is finite; the length is always positive. Signals destined
/// for a dataset additionally carry exactly `sample_len` samples, enforced
/// at emission.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
}

impl ComplexSignal {
    /// Validates and wraps a sample vector.
    pub fn new(samples: Vec<Complex64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::config("signal must contain at least one sample"));
        }
        if let Some(i) = samples
            .iter()
            .position(|s| !s.re.is_finite() || !s.im.is_finite())
        {
            return Err(Error::NumericDomain(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self { samples })
    }

    /// Wraps samples that are known finite and non-empty by construction.
    pub(crate) fn from_vec_unchecked(samples: Vec<Complex64>) -> Self {
        debug_assert!(!samples.is_empty());
        debug_assert!(samples.iter().all(|s| s.re.is_finite() && s.im.is_finite()));
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Mean squared magnitude.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Largest sample magnitude.
    pub fn peak(&self) -> f64 {
        self.samples.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    /// Rounds each component to the nearest `f32` value. Dataset records
    /// live on this grid so that file round-trips are bit-exact.
    pub fn quantize_f32(&self) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|s| Complex64::new(s.re as f32 as f64, s.im as f32 as f64))
                .collect(),
        }
    }
}

impl std::ops::Index<usize> for ComplexSignal {
    type Output = Complex64;

    fn index(&self, i: usize) -> &Complex64 {
        &self.samples[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(ComplexSignal::new(vec![]).is_err());
        assert!(ComplexSignal::new(vec![Complex64::new(f64::NAN, 0.0)]).is_err());
        assert!(ComplexSignal::new(vec![Complex64::new(0.0, f64::INFINITY)]).is_err());
    }

    #[test]
    fn power_and_peak() {
        let s = ComplexSignal::new(vec![Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.0)])
            .unwrap();
        assert!((s.power() - 12.5).abs() < 1e-12);
        assert!((s.peak() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn quantize_is_idempotent() {
        let s = ComplexSignal::new(vec![Complex64::new(0.1, -0.2), Complex64::new(1.7, 2.9)])
            .unwrap();
        let q = s.quantize_f32();
        assert_eq!(q, q.quantize_f32());
    }
}
