//! Baseline beam-alignment schemes and evaluation metrics.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{channel_from_beamspace, complex_gaussian, ChannelRealization};
use crate::error::{Error, Result};
use crate::measurement::projection;
use crate::numerics::{cis, norm, vandermonde, C64, ComplexGrid, ComplexVector};
use crate::recovery::{omp, SeparableDictionary};
use crate::sequences::quantize_phases;

/// NMSE values at or below this are reported as this floor (dB).
pub const NMSE_FLOOR_DB: f64 = -120.0;

/// Beamformer pair: `f_e` on the receive side, `f_a` on the transmit side.
/// The beamformed SISO gain of a channel matrix `H` is `f_eᴴ H conj(f_a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamPair {
    pub f_e: ComplexVector,
    pub f_a: ComplexVector,
    pub bits: Option<u32>,
}

impl BeamPair {
    pub fn gain(&self, h: &ComplexGrid) -> Result<C64> {
        projection(h, &self.f_e, &self.f_a)
    }

    /// DFT codebook pair steering at bins `(p, q)`.
    pub fn dft(n: usize, p: usize, q: usize) -> Self {
        let s = 1.0 / (n as f64).sqrt();
        let w = 2.0 * PI / n as f64;
        let f_e = vandermonde(n, w * p as f64).into_iter().map(|x| x * s).collect();
        let f_a = vandermonde(n, w * q as f64).into_iter().map(|x| x * s).collect();
        Self { f_e, f_a, bits: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub beams: BeamPair,
    pub best: (usize, usize),
    /// All `N²` measurements in scan order (`p` major).
    pub y: ComplexVector,
}

/// Exhaustive scan over the `N × N` DFT codebook with a caller-supplied
/// measurement `measure(b, d, slot)`; picks the largest `|y|`.
pub fn exhaustive_scan_with(n: usize, mut measure: impl FnMut(&[C64], &[C64], usize) -> C64) -> ScanResult {
    let mut y = Vec::with_capacity(n * n);
    let mut best = (0, 0);
    let mut best_mag = -1.0;
    for p in 0..n {
        for q in 0..n {
            let beams = BeamPair::dft(n, p, q);
            let v = measure(&beams.f_e, &beams.f_a, y.len());
            if v.norm() > best_mag {
                best_mag = v.norm();
                best = (p, q);
            }
            y.push(v);
        }
    }
    ScanResult { beams: BeamPair::dft(n, best.0, best.1), best, y }
}

fn noise<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> C64 {
    if sigma > 0.0 {
        complex_gaussian(rng) * sigma
    } else {
        C64::new(0.0, 0.0)
    }
}

/// Narrowband exhaustive scan under CFO `eps` per slot.
///
/// Only magnitudes are compared, and the CFO rotates signal and noise together,
/// so the selection does not depend on `eps` for a fixed noise stream.
pub fn exhaustive_scan<R: Rng + ?Sized>(h: &ComplexGrid, eps: f64, sigma: f64, rng: &mut R) -> Result<ScanResult> {
    let n = h.require_square()?;
    Ok(exhaustive_scan_with(n, |b, d, slot| {
        let x = projection(h, b, d).expect("square channel") + noise(sigma, rng);
        cis(eps * slot as f64) * x
    }))
}

/// `m` pairs of random beams with unit-modulus `bits`-bit phases, scaled by `1/√N`.
pub fn random_phase_beams<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    bits: u32,
    rng: &mut R,
) -> (Vec<ComplexVector>, Vec<ComplexVector>) {
    let levels = 1u32 << bits;
    let s = 1.0 / (n as f64).sqrt();
    let draw = |rng: &mut R| -> ComplexVector {
        (0..n).map(|_| cis(2.0 * PI * rng.random_range(0..levels) as f64 / levels as f64) * s).collect()
    };
    let mut b = Vec::with_capacity(m);
    let mut d = Vec::with_capacity(m);
    for _ in 0..m {
        b.push(draw(rng));
        d.push(draw(rng));
    }
    (b, d)
}

/// Sparse beamspace recovery from projections `y_i = b_iᴴ H conj(d_i)`,
/// ignoring any CFO. Returns the channel estimate.
pub fn iid_cs_recover(b: &[ComplexVector], d: &[ComplexVector], y: &[C64], k_max: usize, sigma: f64) -> Result<ComplexGrid> {
    if y.is_empty() {
        return Err(Error::InvalidArgument("IID-CS needs at least one measurement".into()));
    }
    let dict = SeparableDictionary::from_beams(b, d)?;
    let n = dict.n();
    let tol = (1e-10 * norm(y)).max((y.len() as f64).sqrt() * sigma);
    let res = omp(&dict, y, k_max.min(y.len()), tol)?;
    channel_from_beamspace(&ComplexGrid::from_vec(n, n, res.dense(n * n))?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IidCsResult {
    pub h_hat: ComplexGrid,
    pub beams: BeamPair,
    pub y: ComplexVector,
}

/// IID random-phase compressive sensing on a narrowband channel under CFO
/// `eps` per slot. With `eps = 0` this is the genie benchmark.
pub fn iid_cs_baseline<R: Rng + ?Sized>(
    h: &ComplexGrid,
    m: usize,
    eps: f64,
    sigma: f64,
    bits: u32,
    k_max: usize,
    rng: &mut R,
) -> Result<IidCsResult> {
    let n = h.require_square()?;
    if m == 0 {
        return Err(Error::InvalidArgument("IID-CS needs M >= 1".into()));
    }
    let (b, d) = random_phase_beams(n, m, bits, rng);
    let mut y = Vec::with_capacity(m);
    for i in 0..m {
        y.push(cis(eps * i as f64) * (projection(h, &b[i], &d[i])? + noise(sigma, rng)));
    }
    let h_hat = iid_cs_recover(&b, &d, &y, k_max, sigma)?;
    let beams = extract_beams(&h_hat, Some(bits))?;
    Ok(IidCsResult { h_hat, beams, y })
}

fn unit_modulus(v: &[C64], bits: Option<u32>) -> ComplexVector {
    let s = 1.0 / (v.len() as f64).sqrt();
    let unit: ComplexVector = v.iter().map(|x| if x.norm() > 0.0 { x / x.norm() } else { C64::new(1.0, 0.0) }).collect();
    let q = match bits {
        Some(b) => quantize_phases(&unit, b),
        None => unit,
    };
    q.into_iter().map(|x| x * s).collect()
}

/// Dominant left singular vector `u₁` and `conj(v₁)` by power iteration on
/// `HHᴴ`. nalgebra's complex SVD returns wrong factors for some exactly
/// rank-deficient channels, so it is not used here.
fn dominant_pair(h: &ComplexGrid, n: usize) -> (Vec<C64>, Vec<C64>) {
    let col = |c: usize| (0..n).map(|r| h[(r, c)]).collect::<Vec<_>>();
    let best = (0..n).max_by(|&a, &b| norm(&col(a)).total_cmp(&norm(&col(b)))).unwrap_or(0);
    let mut u = col(best);
    let s = norm(&u);
    u.iter_mut().for_each(|x| *x /= s);
    let mut va = vec![C64::new(0.0, 0.0); n];
    for _ in 0..10_000 {
        // va = uᴴH (the conjugate of Hᴴu), then u ∝ H conj(va).
        for (c, out) in va.iter_mut().enumerate() {
            *out = (0..n).map(|r| u[r].conj() * h[(r, c)]).sum();
        }
        let mut next: Vec<C64> = (0..n).map(|r| (0..n).map(|c| h[(r, c)] * va[c].conj()).sum()).collect();
        let s = norm(&next);
        next.iter_mut().for_each(|x| *x /= s);
        let diff = next.iter().zip(&u).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        u = next;
        if diff < 1e-14 {
            break;
        }
    }
    for (c, out) in va.iter_mut().enumerate() {
        *out = (0..n).map(|r| u[r].conj() * h[(r, c)]).sum();
    }
    let s = norm(&va);
    va.iter_mut().for_each(|x| *x /= s);
    (u, va)
}

/// Quantized dominant singular vectors: `f_e` from `u₁`, `f_a` from `conj(v₁)`,
/// each with unit-modulus entries scaled to unit norm. `bits = None` keeps the
/// continuous phases.
pub fn extract_beams(h_hat: &ComplexGrid, bits: Option<u32>) -> Result<BeamPair> {
    let n = h_hat.require_square()?;
    if h_hat.fro_norm() == 0.0 || !h_hat.is_finite() {
        return Err(Error::NoSignal("channel estimate"));
    }
    let (u, va) = dominant_pair(h_hat, n);
    // Fix the arbitrary phase so quantization is reproducible: make the
    // first entry real unless it is much weaker than the strongest one.
    let ref_phase = |v: &[C64]| {
        let peak = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let k = v.iter().position(|x| x.norm() >= 0.5 * peak).unwrap_or(0);
        cis(-v[k].arg())
    };
    let ru = ref_phase(&u);
    let rv = ref_phase(&va);
    let u: Vec<C64> = u.iter().map(|x| x * ru).collect();
    let va: Vec<C64> = va.iter().map(|x| x * rv).collect();
    Ok(BeamPair { f_e: unit_modulus(&u, bits), f_a: unit_modulus(&va, bits), bits })
}

/// Equivalent SISO taps `f_eᴴ H[ℓ] conj(f_a)`.
pub fn beamformed_taps(ch: &ChannelRealization, beams: &BeamPair) -> Result<ComplexVector> {
    ch.taps().iter().map(|h| beams.gain(h)).collect()
}

fn subcarrier_gains(ch: &ChannelRealization, beams: &BeamPair, sigma: f64, n_subcarriers: usize) -> Result<Vec<f64>> {
    if sigma <= 0.0 {
        return Err(Error::InvalidArgument("rate needs sigma > 0".into()));
    }
    if n_subcarriers < ch.l() {
        return Err(Error::InvalidArgument(format!("{n_subcarriers} subcarriers for {} taps", ch.l())));
    }
    let taps = beamformed_taps(ch, beams)?;
    let mut buf = vec![C64::new(0.0, 0.0); n_subcarriers];
    buf[..taps.len()].copy_from_slice(&taps);
    let fft = rustfft::FftPlanner::new().plan_fft_forward(n_subcarriers);
    fft.process(&mut buf);
    Ok(buf.iter().map(|x| x.norm_sqr() / (sigma * sigma)).collect())
}

/// Water-filling powers for gains `g` with average power 1 per subcarrier.
pub fn water_fill(g: &[f64]) -> Vec<f64> {
    let total = g.len() as f64;
    let mut sorted: Vec<f64> = g.iter().copied().filter(|&x| x > 0.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut mu = 0.0;
    let mut inv_sum = 0.0;
    for (m, &gm) in sorted.iter().enumerate() {
        inv_sum += 1.0 / gm;
        let cand = (total + inv_sum) / (m + 1) as f64;
        if cand - 1.0 / gm > 0.0 {
            mu = cand;
        } else {
            break;
        }
    }
    g.iter().map(|&x| if x > 0.0 { (mu - 1.0 / x).max(0.0) } else { 0.0 }).collect()
}

/// Mean spectral efficiency (bits/s/Hz) of the beamformed channel over
/// `n_subcarriers` OFDM subcarriers with water-filling, average transmit power 1
/// per subcarrier and noise variance `σ²`. Residual CFO is not modeled.
pub fn achievable_rate(ch: &ChannelRealization, beams: &BeamPair, sigma: f64, n_subcarriers: usize) -> Result<f64> {
    let g = subcarrier_gains(ch, beams, sigma, n_subcarriers)?;
    let p = water_fill(&g);
    Ok(g.iter().zip(&p).map(|(g, p)| (1.0 + p * g).log2()).sum::<f64>() / g.len() as f64)
}

/// Same as [`achievable_rate`] with equal power on every subcarrier.
pub fn uniform_power_rate(ch: &ChannelRealization, beams: &BeamPair, sigma: f64, n_subcarriers: usize) -> Result<f64> {
    let g = subcarrier_gains(ch, beams, sigma, n_subcarriers)?;
    Ok(g.iter().map(|g| (1.0 + g).log2()).sum::<f64>() / g.len() as f64)
}

/// Peak-to-average power ratio of received samples, dB.
pub fn papr(y: &[C64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Empty("PAPR input"));
    }
    let p: Vec<f64> = y.iter().map(|x| x.norm_sqr()).collect();
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    if mean == 0.0 {
        return Err(Error::NoSignal("PAPR input"));
    }
    Ok(10.0 * (p.iter().cloned().fold(0.0, f64::max) / mean).log10())
}

/// `min_α ‖H − e^{jα} Ĥ‖² / ‖H‖²` as a plain ratio, without a floor.
pub fn nmse_linear(h: &ComplexGrid, h_hat: &ComplexGrid) -> f64 {
    let eh = h.fro_norm_sqr();
    let ee = h_hat.fro_norm_sqr();
    if eh == 0.0 {
        return if ee == 0.0 { 0.0 } else { f64::INFINITY };
    }
    // Direct residual after phase alignment; the expanded form cancels badly.
    let alpha = h.inner(h_hat).arg();
    h.sub(&h_hat.scale(cis(alpha))).fro_norm_sqr() / eh
}

/// Phase-invariant NMSE in dB, floored at [`NMSE_FLOOR_DB`].
pub fn nmse(h: &ComplexGrid, h_hat: &ComplexGrid) -> f64 {
    let r = nmse_linear(h, h_hat);
    if r == 0.0 {
        return NMSE_FLOOR_DB;
    }
    (10.0 * r.log10()).max(NMSE_FLOOR_DB)
}

/// Mean of `(ε̂ − ε)²`.
pub fn cfo_mse(eps: &[f64], eps_hat: &[f64]) -> Result<f64> {
    if eps.len() != eps_hat.len() {
        return Err(Error::DimensionMismatch(format!("{} true vs {} estimated CFOs", eps.len(), eps_hat.len())));
    }
    if eps.is_empty() {
        return Err(Error::Empty("CFO list"));
    }
    Ok(eps.iter().zip(eps_hat).map(|(a, b)| (b - a).powi(2)).sum::<f64>() / eps.len() as f64)
}
