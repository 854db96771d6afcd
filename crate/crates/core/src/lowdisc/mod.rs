//! Stochastic inputs: Sobol' points, digital shifts, the inverse normal CDF and
//! counter-based pseudo-random streams.

mod normal;
mod sobol;

pub use normal::{inverse_normal_cdf, normal_cdf};
pub use sobol::SobolGenerator;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Random XOR masks, one per dimension, applied to 32-bit fixed-point coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DigitalShift {
    masks: Vec<u32>,
}

impl DigitalShift {
    pub fn zero(dims: usize) -> Self {
        Self { masks: vec![0; dims] }
    }

    pub fn from_masks(masks: Vec<u32>) -> Self {
        Self { masks }
    }

    /// Uniform masks drawn from `stream`.
    pub fn random(dims: usize, stream: &RandomStream) -> Self {
        let mut rng = stream.rng();
        Self { masks: (0..dims).map(|_| rng.next_u32()).collect() }
    }

    pub fn dims(&self) -> usize {
        self.masks.len()
    }

    pub fn masks(&self) -> &[u32] {
        &self.masks
    }

    pub fn apply_bits(&self, bits: &[u32]) -> Result<Vec<u32>> {
        if bits.len() != self.masks.len() {
            return Err(Error::LengthMismatch { expected: self.masks.len(), actual: bits.len() });
        }
        Ok(bits.iter().zip(&self.masks).map(|(b, m)| b ^ m).collect())
    }
}

/// Fixed-point representation of `x` in `[0, 1)` with 32 fractional bits.
pub fn unit_to_bits(x: f64) -> u32 {
    (x * 4294967296.0).floor().clamp(0.0, u32::MAX as f64) as u32
}

/// Applies `shift` to a point in `[0, 1)^s` by XOR of the 32-bit representations.
pub fn shifted_point(point: &[f64], shift: &DigitalShift) -> Result<Vec<f64>> {
    let bits: Vec<u32> = point.iter().map(|&x| unit_to_bits(x)).collect();
    Ok(shift.apply_bits(&bits)?.into_iter().map(sobol::bits_to_unit).collect())
}

/// Point `n` of the digitally shifted Sobol' sequence. Coordinates that land
/// exactly on zero are moved to `2^-33` so that the inverse normal CDF stays
/// finite.
pub fn shifted_sobol_point(gen: &SobolGenerator, n: u32, shift: &DigitalShift) -> Result<Vec<f64>> {
    let bits = gen.point_bits(n, shift.dims())?;
    Ok(shift
        .apply_bits(&bits)?
        .into_iter()
        .map(|b| if b == 0 { 2f64.powi(-33) } else { sobol::bits_to_unit(b) })
        .collect())
}

/// What a random stream is used for; part of the stream's identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Digital-shift masks of one randomization.
    Shift,
    /// Wavelet coefficients outside the QMC block.
    WaveletTail,
    /// Coefficients of the QMC block when running in pure Monte Carlo mode.
    WaveletHead,
    /// Supermesh-cell-local normals of the correction term.
    CellLocal,
    /// Free-form use (synthetic samplers, tests).
    Other(u32),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Shift => 1,
            Purpose::WaveletTail => 2,
            Purpose::WaveletHead => 3,
            Purpose::CellLocal => 4,
            Purpose::Other(k) => 0x100 + k as u64,
        }
    }
}

/// Identity of a pseudo-random stream: `(seed, level, m, n, purpose)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub seed: u64,
    pub level: u64,
    pub m: u64,
    pub n: u64,
    pub purpose: Purpose,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, level: u64, m: u64, n: u64, purpose: Purpose) -> Self {
        Self { seed, level, m, n, purpose }
    }

    fn key(&self) -> [u8; 32] {
        let mut h = splitmix64(self.seed);
        for part in [self.level, self.m, self.n, self.purpose.tag()] {
            h = splitmix64(h ^ splitmix64(part));
        }
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_mut(8).enumerate() {
            chunk.copy_from_slice(&splitmix64(h.wrapping_add(i as u64)).to_le_bytes());
        }
        key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }

    /// `length` i.i.d. standard normal draws.
    pub fn normal_vector(&self, length: usize) -> Vec<f64> {
        let mut rng = self.rng();
        (0..length).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }
}
