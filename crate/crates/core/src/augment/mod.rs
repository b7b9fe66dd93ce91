//! Signal augmentation.
//!
//! Constellation-preserving rotation, the two conjugation flips, additive
//! Gaussian noise, stochastic segment permutation, and the composite
//! transform (random rotation followed by permutation) used both to
//! augment labeled data and to perturb unlabeled samples.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ComplexSignal;
use crate::sigsim::Modulation;

/// The rotation angles that keep a modulation's constellation invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSet {
    angles: Vec<f64>,
}

impl RotationSet {
    /// Angles `i * 2pi / m` for a symmetry order `m`.
    pub fn cyclic(order: usize) -> Self {
        let angles = (0..order)
            .map(|i| i as f64 * std::f64::consts::TAU / order as f64)
            .collect();
        Self { angles }
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Angles excluding the identity rotation.
    pub fn non_identity(&self) -> &[f64] {
        &self.angles[1..]
    }
}

/// The valid rotation set for a modulation scheme.
pub fn rotation_set_for(modulation: Modulation) -> RotationSet {
    RotationSet::cyclic(modulation.symmetry_order())
}

/// Rotates every sample by `e^{j theta}`.
pub fn rotate(signal: &ComplexSignal, theta: f64) -> ComplexSignal {
    let phasor = Complex64::from_polar(1.0, theta);
    ComplexSignal::from_vec_unchecked(signal.samples().iter().map(|s| s * phasor).collect())
}

/// Horizontal flip: `s -> conj(-s)` (real part negated).
pub fn flip_horizontal(signal: &ComplexSignal) -> ComplexSignal {
    ComplexSignal::from_vec_unchecked(
        signal
            .samples()
            .iter()
            .map(|s| Complex64::new(-s.re, s.im))
            .collect(),
    )
}

/// Vertical flip: `s -> conj(s)` (imaginary part negated).
pub fn flip_vertical(signal: &ComplexSignal) -> ComplexSignal {
    ComplexSignal::from_vec_unchecked(signal.samples().iter().map(|s| s.conj()).collect())
}

/// Adds i.i.d. complex Gaussian noise with total per-sample variance
/// `sigma^2`. Kept as an ablation baseline.
pub fn add_noise_augment<R: Rng + ?Sized>(
    signal: &ComplexSignal,
    sigma: f64,
    rng: &mut R,
) -> Result<ComplexSignal> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::config("noise sigma must be finite and non-negative"));
    }
    if sigma == 0.0 {
        return Ok(signal.clone());
    }
    let component = sigma / 2f64.sqrt();
    let out = signal
        .samples()
        .iter()
        .map(|&s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            s + Complex64::new(re * component, im * component)
        })
        .collect();
    Ok(ComplexSignal::from_vec_unchecked(out))
}

/// Cuts the signal into `k` contiguous segments at distinct interior
/// positions and reorders them by a uniformly random non-identity
/// permutation.
pub fn stochastic_permutation<R: Rng + ?Sized>(
    signal: &ComplexSignal,
    k: usize,
    rng: &mut R,
) -> Result<ComplexSignal> {
    let len = signal.len();
    if k < 2 || k > len {
        return Err(Error::InvalidSegmentation { k, len });
    }
    // k-1 distinct cut points from the interior positions 1..len-1.
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, len - 1, k - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();

    let mut order: Vec<usize> = (0..k).collect();
    loop {
        order.shuffle(rng);
        if order.iter().enumerate().any(|(i, &o)| i != o) {
            break;
        }
    }

    let bounds: Vec<(usize, usize)> = std::iter::once(0)
        .chain(cuts.iter().copied())
        .zip(cuts.iter().copied().chain(std::iter::once(len)))
        .collect();
    let mut out = Vec::with_capacity(len);
    for &seg in &order {
        let (a, b) = bounds[seg];
        out.extend_from_slice(&signal.samples()[a..b]);
    }
    Ok(ComplexSignal::from_vec_unchecked(out))
}

/// The composite transform: what rotation pool to draw from and how many
/// permutation segments to cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationSpec {
    pub modulation: Modulation,
    pub k_segments: usize,
    /// Skip the 0-degree rotation; required when the transform is used as
    /// a perturbation, where a no-op draw would be wasted.
    pub exclude_identity_rotation: bool,
}

impl AugmentationSpec {
    pub fn new(modulation: Modulation, k_segments: usize, exclude_identity_rotation: bool) -> Result<Self> {
        if k_segments < 2 {
            return Err(Error::config("k_segments must be at least 2"));
        }
        Ok(Self {
            modulation,
            k_segments,
            exclude_identity_rotation,
        })
    }

    /// Checks the segment count against the symbol-integrity bound
    /// `k <= sample_len / sps`.
    pub fn validate_for(&self, sample_len: usize, sps: usize) -> Result<()> {
        let bound = sample_len / sps;
        if self.k_segments > bound {
            return Err(Error::config(format!(
                "k_segments = {} exceeds sample_len/sps = {bound}",
                self.k_segments
            )));
        }
        Ok(())
    }
}

/// Applies the composite augmentation g: a rotation drawn uniformly from
/// the modulation's rotation set, then stochastic permutation.
pub fn composite_augment<R: Rng + ?Sized>(
    signal: &ComplexSignal,
    spec: &AugmentationSpec,
    rng: &mut R,
) -> Result<ComplexSignal> {
    let set = rotation_set_for(spec.modulation);
    let pool = if spec.exclude_identity_rotation {
        set.non_identity()
    } else {
        set.angles()
    };
    let theta = pool[rng.random_range(0..pool.len())];
    stochastic_permutation(&rotate(signal, theta), spec.k_segments, rng)
}

/// One of the augmentation policies compared in the ablation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Augmentor {
    /// No augmentation.
    None,
    /// Uniform draw from the modulation's rotation set (identity included).
    Rotation { modulation: Modulation },
    /// Uniform draw from identity, horizontal flip, vertical flip.
    Flipping,
    /// Additive complex Gaussian noise.
    Noise { sigma: f64 },
    /// Stochastic permutation alone.
    Permutation { k: usize },
    /// Rotation followed by permutation.
    Composite(AugmentationSpec),
}

impl Augmentor {
    pub fn apply<R: Rng + ?Sized>(&self, signal: &ComplexSignal, rng: &mut R) -> Result<ComplexSignal> {
        match self {
            Augmentor::None => Ok(signal.clone()),
            Augmentor::Rotation { modulation } => {
                let set = rotation_set_for(*modulation);
                let theta = set.angles()[rng.random_range(0..set.angles().len())];
                Ok(rotate(signal, theta))
            }
            Augmentor::Flipping => match rng.random_range(0..3) {
                0 => Ok(signal.clone()),
                1 => Ok(flip_horizontal(signal)),
                _ => Ok(flip_vertical(signal)),
            },
            Augmentor::Noise { sigma } => add_noise_augment(signal, *sigma, rng),
            Augmentor::Permutation { k } => stochastic_permutation(signal, *k, rng),
            Augmentor::Composite(spec) => composite_augment(signal, spec, rng),
        }
    }
}
