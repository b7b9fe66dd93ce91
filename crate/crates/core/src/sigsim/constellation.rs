//! PSK constellations and random symbol generation.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported modulation schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Psk8,
}

impl Modulation {
    /// Constellation points in Gray-code order, unit average power.
    pub fn constellation(self) -> Vec<Complex64> {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Modulation::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            Modulation::Qpsk => vec![
                Complex64::new(a, a),
                Complex64::new(-a, a),
                Complex64::new(-a, -a),
                Complex64::new(a, -a),
            ],
            // Gray-coded 8PSK on multiples of 45 degrees.
            Modulation::Psk8 => [0u32, 1, 3, 2, 6, 7, 5, 4]
                .iter()
                .map(|&k| Complex64::from_polar(1.0, k as f64 * std::f64::consts::FRAC_PI_4))
                .collect(),
        }
    }

    /// Rotational symmetry order of the constellation.
    pub fn symmetry_order(self) -> usize {
        match self {
            Modulation::Bpsk => 2,
            Modulation::Qpsk => 4,
            Modulation::Psk8 => 8,
        }
    }
}

impl std::fmt::Display for Modulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
            Modulation::Psk8 => "8psk",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qpsk" => Ok(Modulation::Qpsk),
            "8psk" | "psk8" => Ok(Modulation::Psk8),
            other => Err(Error::config(format!("unknown modulation `{other}`"))),
        }
    }
}

/// A sequence of constellation points awaiting pulse shaping.
#[derive(Debug, Clone)]
pub struct SymbolStream {
    pub symbols: Vec<Complex64>,
    pub modulation: Modulation,
}

/// Draws `n` symbols i.i.d. uniformly from the constellation.
pub fn generate_symbols<R: Rng + ?Sized>(
    n: usize,
    modulation: Modulation,
    rng: &mut R,
) -> Result<SymbolStream> {
    if n == 0 {
        return Err(Error::config("symbol count must be positive"));
    }
    let points = modulation.constellation();
    let symbols = (0..n)
        .map(|_| points[rng.random_range(0..points.len())])
        .collect();
    Ok(SymbolStream {
        symbols,
        modulation,
    })
}
