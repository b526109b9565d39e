//! Training sequences: Zadoff-Chu vectors, their circulant shifts and
//! spectral masks, phase quantization, and the Barker-13 pilot.
//!
//! ```
//! use swiftlink::sequences::{zc, spectral_mask};
//!
//! let z = zc(32, 11).unwrap();
//! let mask = spectral_mask(&z);
//! assert!(mask.diag().iter().all(|d| (d.norm() - 1.0).abs() < 1e-10));
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cis, dft, C64, ComplexVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZcSequence {
    n: usize,
    u: i64,
    bits: Option<u32>,
    entries: ComplexVector,
}

impl ZcSequence {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn root(&self) -> i64 {
        self.u
    }

    /// Phase resolution if the sequence was quantized.
    pub fn bits(&self) -> Option<u32> {
        self.bits
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    /// Same root and length with every phase snapped to a `bits`-bit grid.
    pub fn quantized(&self, bits: u32) -> Self {
        Self { n: self.n, u: self.u, bits: Some(bits), entries: quantize_phases(&self.entries, bits) }
    }

    /// The `s`-th column of the circulant training matrix.
    pub fn shifted(&self, s: i64) -> ComplexVector {
        circshift(&self.entries, s)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Unit-norm Zadoff-Chu sequence of length `n` and root `u`.
///
/// Odd `n` uses the phase `π u k (k+1) / n`, even `n` uses `π u k² / n`.
pub fn zc(n: usize, u: i64) -> Result<ZcSequence> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("ZC length must be >= 2, got {n}")));
    }
    if gcd(u.unsigned_abs(), n as u64) != 1 {
        return Err(Error::NotCoprime { n, u });
    }
    let two_n = 2 * n as i128;
    let scale = 1.0 / (n as f64).sqrt();
    let entries = (0..n as i128)
        .map(|k| {
            let q = if n % 2 == 1 { k * (k + 1) } else { k * k };
            // Reduce the exponent exactly before going to floating point.
            let m = (u as i128 * q).rem_euclid(two_n);
            cis(PI * m as f64 / n as f64) * scale
        })
        .collect();
    Ok(ZcSequence { n, u, bits: None, entries })
}

/// Circular delay: `out[k] = v[(k − s) mod N]`, so `circshift([a,b,c], 1) = [c,a,b]`.
///
/// Shifts outside `0..N` are reduced mod `N`. This is the direction for which
/// `U_N · circshift(z, s) = Λ_z · U_N · e_s` holds.
pub fn circshift(v: &[C64], s: i64) -> ComplexVector {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let s = s.rem_euclid(n as i64) as usize;
    (0..n).map(|k| v[(k + n - s) % n]).collect()
}

/// Diagonal of `Λ_z = √N diag(U_N z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralMask {
    diag: ComplexVector,
}

impl SpectralMask {
    pub fn from_diag(diag: ComplexVector) -> Self {
        Self { diag }
    }

    pub fn diag(&self) -> &[C64] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Largest deviation of `|Λ(k,k)|` from 1.
    pub fn flatness_deviation(&self) -> f64 {
        self.diag.iter().map(|d| (d.norm() - 1.0).abs()).fold(0.0, f64::max)
    }
}

pub fn spectral_mask(z: &ZcSequence) -> SpectralMask {
    let s = (z.len() as f64).sqrt();
    SpectralMask { diag: dft(z.entries()).into_iter().map(|d| d * s).collect() }
}

/// Snap each phase to the nearest multiple of `2π / 2^bits`, keeping magnitudes.
///
/// Phases exactly halfway between two levels (up to floating-point noise) go to
/// the counter-clockwise level. A consistent tie rule matters: ZC phases often
/// land on exact midpoints, and breaking ties differently for positive and
/// negative angles destroys the flat spectrum of the quantized sequence.
pub fn quantize_phases(v: &[C64], bits: u32) -> ComplexVector {
    let levels = (1u64 << bits) as f64;
    let step = 2.0 * PI / levels;
    v.iter()
        .map(|z| {
            let r = z.norm();
            if r == 0.0 {
                return *z;
            }
            let x = z.arg().rem_euclid(2.0 * PI) / step;
            let frac = x - x.floor();
            let idx = if (frac - 0.5).abs() < 1e-9 { x.floor() + 1.0 } else { x.round() };
            C64::from_polar(r, idx.rem_euclid(levels) * step)
        })
        .collect()
}

pub const BARKER13: [f64; 13] = [1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0, 1.0];

pub fn barker13() -> ComplexVector {
    BARKER13.iter().map(|&b| C64::new(b, 0.0)).collect()
}
