//! Solid-state power amplifier behavioral model.
//!
//! Each simulated transmitter is a pair of rational AM/AM and AM/PM
//! curves. The coefficient sets are small perturbations of a measured
//! GaAs FET amplifier, so the resulting fingerprints are close but
//! distinguishable.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ComplexSignal;

/// Per-transmitter SSPA coefficients.
///
/// `alpha` drives the AM/AM conversion A(r), `beta` the AM/PM conversion
/// Phi(r) (radians). The second entry of each vector is an exponent and
/// must be positive so that A(0) = Phi(0) = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub id: u16,
    pub alpha: [f64; 4],
    pub beta: [f64; 4],
}

/// The ten reference transmitters (amplitude and phase coefficient rows).
pub const REFERENCE_PROFILES: [([f64; 4], [f64; 4]); 10] = [
    ([10.2598, 1.9926, -0.2782, 9.5297], [6.0838, 1.3190, -0.0375, 16.2325]),
    ([10.7344, 2.0668, -0.5015, 9.5297], [6.3304, 1.3058, -0.0348, 16.2325]),
    ([11.6849, 2.0193, -0.6689, 9.5297], [6.7758, 2.0689, -0.0280, 16.2325]),
    ([10.2963, 1.7932, -0.2929, 9.5297], [6.1256, 1.4660, -0.0297, 16.2325]),
    ([11.3625, 2.0100, -0.4304, 9.5297], [6.6729, 2.2441, -0.0168, 16.2325]),
    ([11.4996, 2.0766, -0.5835, 9.5297], [6.7440, 2.9490, -0.0454, 16.2325]),
    ([10.5223, 1.7999, -0.5658, 9.5297], [6.4241, 1.4531, -0.0425, 16.2325]),
    ([10.4870, 1.8997, -0.4515, 9.5297], [6.4135, 1.4193, -0.0305, 16.2325]),
    ([11.3525, 2.2360, -0.2442, 9.5297], [6.9513, 2.1135, -0.0366, 16.2325]),
    ([10.0237, 1.9307, -0.4582, 9.5297], [6.0633, 2.4454, -0.0363, 16.2325]),
];

impl DeviceProfile {
    pub fn new(id: u16, alpha: [f64; 4], beta: [f64; 4]) -> Result<Self> {
        let p = Self { id, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    /// Reference transmitter `index` (0..10).
    pub fn reference(index: usize) -> Result<Self> {
        let (alpha, beta) = REFERENCE_PROFILES
            .get(index)
            .copied()
            .ok_or_else(|| Error::config(format!("no reference transmitter {index}")))?;
        Self::new(index as u16, alpha, beta)
    }

    /// The first `count` reference transmitters.
    pub fn reference_set(count: usize) -> Result<Vec<Self>> {
        (0..count).map(Self::reference).collect()
    }

    /// A pass-through profile: A(r) = r, Phi(r) = 0.
    pub fn linear(id: u16) -> Self {
        Self {
            id,
            alpha: [1.0, 1.0, 0.0, 0.0],
            beta: [0.0, 1.0, 0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha[1] > 0.0 && self.beta[1] > 0.0) {
            return Err(Error::config(
                "SSPA exponents alpha[1] and beta[1] must be positive",
            ));
        }
        for v in self.alpha.iter().chain(self.beta.iter()) {
            if !v.is_finite() {
                return Err(Error::config("SSPA coefficients must be finite"));
            }
        }
        // The rational denominators must stay away from zero on r in [0, 1].
        for r in 0..=100 {
            let r = r as f64 / 100.0;
            if (1.0 + self.alpha[3] * r.powf(self.alpha[1] + 1.0)).abs() < 1e-9
                || (1.0 + self.beta[3] * r.powf(self.beta[1] + 1.0)).abs() < 1e-9
            {
                return Err(Error::config(format!(
                    "SSPA denominator vanishes near r = {r} for device {}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// AM/AM conversion A(r).
    pub fn am_am(&self, r: f64) -> f64 {
        let [a1, a2, a3, a4] = self.alpha;
        (a1 * r.powf(a2) + a3 * r.powf(a2 + 1.0)) / (1.0 + a4 * r.powf(a2 + 1.0))
    }

    /// AM/PM conversion Phi(r) in radians.
    pub fn am_pm(&self, r: f64) -> f64 {
        let [b1, b2, b3, b4] = self.beta;
        (b1 * r.powf(b2) + b3 * r.powf(b2 + 1.0)) / (1.0 + b4 * r.powf(b2 + 1.0))
    }
}

/// Applies a transmitter's nonlinearity to a waveform.
///
/// The waveform is first scaled so its peak magnitude equals
/// `10^(-backoff_db/20)`, then each sample `r * e^{j phi}` maps to
/// `A(r) * e^{j (phi + Phi(r))}`.
pub fn apply_sspa(
    signal: &ComplexSignal,
    profile: &DeviceProfile,
    backoff_db: f64,
) -> Result<ComplexSignal> {
    let peak = signal.peak();
    if peak <= 0.0 {
        return Err(Error::NumericDomain(
            "cannot set amplifier drive level for an all-zero signal".into(),
        ));
    }
    let scale = 10f64.powf(-backoff_db / 20.0) / peak;
    let mut out = Vec::with_capacity(signal.len());
    for &x in signal.samples() {
        let scaled = x * scale;
        let r = scaled.norm();
        let y = if r == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::from_polar(profile.am_am(r), scaled.arg() + profile.am_pm(r))
        };
        if !y.re.is_finite() || !y.im.is_finite() {
            return Err(Error::NumericDomain(format!(
                "SSPA output non-finite at r = {r} for device {} (alpha {:?}, beta {:?})",
                profile.id, profile.alpha, profile.beta
            )));
        }
        out.push(y);
    }
    Ok(ComplexSignal::from_vec_unchecked(out))
}

/// Derives `n` device profiles from `base` by scaling the first three
/// amplitude and phase coefficients with independent uniform offsets in
/// `[-offset_scale, +offset_scale]`. The fourth coefficients are shared
/// across devices, matching the reference set.
pub fn perturb_profiles<R: Rng + ?Sized>(
    base: &DeviceProfile,
    offset_scale: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<DeviceProfile>> {
    if n == 0 {
        return Err(Error::config("device count must be positive"));
    }
    if offset_scale < 0.0 {
        return Err(Error::config("offset scale must be non-negative"));
    }
    let mut out = Vec::with_capacity(n);
    for id in 0..n {
        let mut alpha = base.alpha;
        let mut beta = base.beta;
        for c in 0..3 {
            alpha[c] *= 1.0 + offset(rng, offset_scale);
            beta[c] *= 1.0 + offset(rng, offset_scale);
        }
        out.push(DeviceProfile::new(id as u16, alpha, beta)?);
    }
    Ok(out)
}

fn offset<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        rng.random_range(-scale..=scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::derive_rng;
    use rand::Rng;

    fn random_signal(n: usize, seed: u64) -> ComplexSignal {
        let mut rng = derive_rng(seed, 0);
        ComplexSignal::new(
            (0..n)
                .map(|_| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_input_maps_to_zero() {
        let p = DeviceProfile::reference(0).unwrap();
        assert_eq!(p.am_am(0.0), 0.0);
        assert_eq!(p.am_pm(0.0), 0.0);
    }

    #[test]
    fn xmtr0_at_full_drive() {
        let p = DeviceProfile::reference(0).unwrap();
        let a1 = (10.2598 - 0.2782) / (1.0 + 9.5297);
        let p1 = (6.0838 - 0.0375) / (1.0 + 16.2325);
        assert!((p.am_am(1.0) - a1).abs() < 1e-15);
        assert!((p.am_pm(1.0) - p1).abs() < 1e-15);
        assert!((p.am_am(1.0) - 0.94795).abs() < 1e-5);
        assert!((p.am_pm(1.0) - 0.35086).abs() < 1e-5);
    }

    #[test]
    fn sample_wise_against_scalar_loop() {
        // Scalar-loop oracle: re-derive each output sample from polar form.
        let p = DeviceProfile::reference(3).unwrap();
        let signal = random_signal(257, 40);
        let out = apply_sspa(&signal, &p, 0.0).unwrap();
        let scale = 1.0 / signal.peak();
        for (x, y) in signal.samples().iter().zip(out.samples()) {
            let r = (x * scale).norm();
            let expected = Complex64::from_polar(p.am_am(r), (x * scale).arg() + p.am_pm(r));
            assert!((y - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn output_phase_is_input_phase_plus_am_pm() {
        let p = DeviceProfile::reference(1).unwrap();
        let signal = random_signal(64, 41);
        let out = apply_sspa(&signal, &p, 0.0).unwrap();
        let scale = 1.0 / signal.peak();
        for (x, y) in signal.samples().iter().zip(out.samples()) {
            let r = (x * scale).norm();
            let mut dphi = y.arg() - x.arg() - p.am_pm(r);
            while dphi > std::f64::consts::PI {
                dphi -= 2.0 * std::f64::consts::PI;
            }
            while dphi < -std::f64::consts::PI {
                dphi += 2.0 * std::f64::consts::PI;
            }
            assert!(dphi.abs() < 1e-12);
        }
    }

    #[test]
    fn distinct_profiles_are_distinguishable() {
        let signal = random_signal(512, 42);
        let profiles = DeviceProfile::reference_set(10).unwrap();
        for i in 0..profiles.len() {
            for j in i + 1..profiles.len() {
                let a = apply_sspa(&signal, &profiles[i], 0.0).unwrap();
                let b = apply_sspa(&signal, &profiles[j], 0.0).unwrap();
                let max_diff = a
                    .samples()
                    .iter()
                    .zip(b.samples())
                    .map(|(x, y)| (x - y).norm())
                    .fold(0.0, f64::max);
                assert!(max_diff > 1e-6, "devices {i} and {j} indistinguishable");
            }
        }
    }

    #[test]
    fn backoff_sets_peak_drive() {
        let signal = random_signal(128, 43);
        let p = DeviceProfile::linear(0);
        // With a pass-through profile the output peak equals the drive level.
        let out = apply_sspa(&signal, &p, 6.0).unwrap();
        let expected = 10f64.powf(-6.0 / 20.0);
        assert!((out.peak() - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_signal_is_rejected() {
        let z = ComplexSignal::new(vec![Complex64::new(0.0, 0.0); 8]).unwrap();
        let p = DeviceProfile::reference(0).unwrap();
        assert!(apply_sspa(&z, &p, 0.0).is_err());
    }

    #[test]
    fn perturb_zero_offset_copies_base() {
        let base = DeviceProfile::reference(0).unwrap();
        let mut rng = derive_rng(44, 0);
        let got = perturb_profiles(&base, 0.0, 3, &mut rng).unwrap();
        for (i, p) in got.iter().enumerate() {
            assert_eq!(p.id, i as u16);
            assert_eq!(p.alpha, base.alpha);
            assert_eq!(p.beta, base.beta);
        }
    }

    #[test]
    fn perturb_keeps_fourth_coefficients() {
        let base = DeviceProfile::reference(0).unwrap();
        let mut rng = derive_rng(44, 1);
        let got = perturb_profiles(&base, 0.1, 10, &mut rng).unwrap();
        for p in &got {
            assert_eq!(p.alpha[3], 9.5297);
            assert_eq!(p.beta[3], 16.2325);
        }
    }

    #[test]
    fn reference_set_is_a_small_offset_regime() {
        // The large coefficients of the ten reference rows stay within 15%
        // of the first row. (The small third coefficients and the phase
        // exponents spread much wider relative to their tiny bases, so only
        // the dominant terms characterize the offset regime.)
        let base = DeviceProfile::reference(0).unwrap();
        for p in DeviceProfile::reference_set(10).unwrap() {
            for (name, got, reference) in [
                ("alpha1", p.alpha[0], base.alpha[0]),
                ("alpha2", p.alpha[1], base.alpha[1]),
                ("beta1", p.beta[0], base.beta[0]),
            ] {
                let rel = (got - reference).abs() / reference.abs();
                assert!(rel <= 0.15, "{name} of device {} off by {rel}", p.id);
            }
        }
    }
}
