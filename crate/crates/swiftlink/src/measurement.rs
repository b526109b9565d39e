//! Beam-training measurements under CFO and noise.
//!
//! Narrowband slot `n` applies TX beams `b_n`, `d_n` and receives
//! `y[n] = e^{jεn} (b_nᴴ H conj(d_n) + v[n])`, with `v ~ CN(0, σ²)`. The
//! oscillator offset rotates noise and signal alike, which is why the CFO
//! factor multiplies both. With circularly shifted ZC training
//! `b_n = circshift(z, r[n])`, `d_n = circshift(z, c[n])` the noiseless part is
//! exactly the virtual-channel entry `G(r[n], c[n])`.
//!
//! The wideband path sends a Barker-13 pilot followed by `L−1` zero guard
//! symbols per beam configuration, correlates at lags `0..L`, sums the lag
//! outputs and divides by 13. Noise is added after correlation.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_gaussian, virtual_channel, ChannelRealization};
use crate::error::{Error, Result};
use crate::numerics::{cis, C64, ComplexGrid, ComplexVector};
use crate::sequences::{spectral_mask, ZcSequence, BARKER13};
use crate::trajectories::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub y: ComplexVector,
    pub trajectory: Trajectory,
    /// CFO per measurement slot, radians.
    pub epsilon: f64,
    pub sigma: f64,
    /// Per-measurement CFO of a wideband frame, `(N_s + L − 1)·2π f / W`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl MeasurementSet {
    /// CFO actually seen from one measurement to the next.
    pub fn step_epsilon(&self) -> f64 {
        self.effective_epsilon.unwrap_or(self.epsilon)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("measurement set serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidArgument(format!("measurement JSON: {e}")))
    }

    /// Rows of `n,r,c,re,im`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        wr.write_record(["n", "r", "c", "re", "im"]).map_err(io)?;
        for (n, (y, &(r, c))) in self.y.iter().zip(&self.trajectory.steps).enumerate() {
            wr.write_record(&[n.to_string(), r.to_string(), c.to_string(), y.re.to_string(), y.im.to_string()])
                .map_err(io)?;
        }
        wr.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(())
    }
}

fn noise<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> C64 {
    if sigma > 0.0 {
        complex_gaussian(rng) * sigma
    } else {
        C64::new(0.0, 0.0)
    }
}

/// `bᴴ H conj(d)`.
pub fn projection(h: &ComplexGrid, b: &[C64], d: &[C64]) -> Result<C64> {
    let n = h.require_square()?;
    if b.len() != n || d.len() != n {
        return Err(Error::DimensionMismatch(format!("beams of length {} and {} for N = {n}", b.len(), d.len())));
    }
    let mut acc = C64::new(0.0, 0.0);
    for r in 0..n {
        let br = b[r].conj();
        let mut row = C64::new(0.0, 0.0);
        for c in 0..n {
            row += h[(r, c)] * d[c].conj();
        }
        acc += br * row;
    }
    Ok(acc)
}

/// One noisy beam projection in slot `n`.
pub fn project_beam<R: Rng + ?Sized>(
    h: &ComplexGrid,
    b: &[C64],
    d: &[C64],
    eps: f64,
    n: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<C64> {
    Ok(cis(eps * n as f64) * (projection(h, b, d)? + noise(sigma, rng)))
}

/// `P_Ω(A)`: the entries of `A` along the trajectory.
pub fn sample_operator(a: &ComplexGrid, t: &Trajectory) -> ComplexVector {
    t.steps.iter().map(|&rc| a[rc]).collect()
}

/// Zero-filled grid holding `values` at the trajectory coordinates
/// (later steps overwrite earlier ones on repeated coordinates).
pub fn scatter(values: &[C64], t: &Trajectory) -> ComplexGrid {
    let mut out = ComplexGrid::square(t.n);
    for (v, &rc) in values.iter().zip(&t.steps) {
        out[rc] = *v;
    }
    out
}

/// Adjoint of [`sample_operator`]: repeated coordinates accumulate.
pub fn scatter_add(values: &[C64], t: &Trajectory) -> ComplexGrid {
    let mut out = ComplexGrid::square(t.n);
    for (v, &rc) in values.iter().zip(&t.steps) {
        out[rc] += *v;
    }
    out
}

/// Sample a known virtual channel along `t` with CFO and noise.
pub fn measure_virtual<R: Rng + ?Sized>(
    g: &ComplexGrid,
    t: &Trajectory,
    eps: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<MeasurementSet> {
    if g.n() != t.n {
        return Err(Error::DimensionMismatch(format!("virtual channel {} vs trajectory {}", g.n(), t.n)));
    }
    let y = t
        .steps
        .iter()
        .enumerate()
        .map(|(n, &rc)| cis(eps * n as f64) * (g[rc] + noise(sigma, rng)))
        .collect();
    Ok(MeasurementSet { y, trajectory: t.clone(), epsilon: eps, sigma, effective_epsilon: None, seed: None })
}

/// Narrowband measurements with shifted-ZC training along `t`.
pub fn measure_trajectory<R: Rng + ?Sized>(
    h: &ComplexGrid,
    t: &Trajectory,
    z: &ZcSequence,
    eps: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<MeasurementSet> {
    if z.len() != h.require_square()? {
        return Err(Error::DimensionMismatch(format!("ZC length {} for N = {}", z.len(), h.n())));
    }
    let g = virtual_channel(h, &spectral_mask(z))?;
    measure_virtual(&g, t, eps, sigma, rng)
}

/// The same measurements computed slot by slot from explicit beam projections.
pub fn measure_trajectory_direct<R: Rng + ?Sized>(
    h: &ComplexGrid,
    t: &Trajectory,
    z: &ZcSequence,
    eps: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<MeasurementSet> {
    let mut y = Vec::with_capacity(t.len());
    for (n, &(r, c)) in t.steps.iter().enumerate() {
        y.push(project_beam(h, &z.shifted(r as i64), &z.shifted(c as i64), eps, n, sigma, rng)?);
    }
    Ok(MeasurementSet { y, trajectory: t.clone(), epsilon: eps, sigma, effective_epsilon: None, seed: None })
}

/// Symbol-rate CFO `2π f / W` in radians per symbol.
pub fn symbol_epsilon(analog_cfo_hz: f64, bandwidth_hz: f64) -> f64 {
    2.0 * PI * analog_cfo_hz / bandwidth_hz
}

/// Per-measurement CFO of a Barker frame: `(N_s + L − 1)·2π f / W`.
pub fn effective_epsilon(analog_cfo_hz: f64, bandwidth_hz: f64, l: usize) -> f64 {
    (BARKER13.len() + l - 1) as f64 * symbol_epsilon(analog_cfo_hz, bandwidth_hz)
}

/// Correlator response of one Barker frame to each channel tap.
///
/// `weights[ℓ]` is the normalized correlator output when only tap `ℓ` is
/// present with unit gain, including the CFO rotation inside the frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameModel {
    pub l: usize,
    pub eps_symbol: f64,
    pub weights: Vec<C64>,
}

impl FrameModel {
    pub fn new(l: usize, eps_symbol: f64) -> Self {
        let ns = BARKER13.len();
        let period = ns + l - 1;
        let pilot = |k: isize| if (0..ns as isize).contains(&k) { BARKER13[k as usize] } else { 0.0 };
        let weights = (0..l)
            .map(|tap| {
                // Received samples for a unit tap at delay `tap`.
                let rx: Vec<C64> =
                    (0..period).map(|t| cis(eps_symbol * t as f64) * pilot(t as isize - tap as isize)).collect();
                let mut acc = C64::new(0.0, 0.0);
                for lag in 0..l {
                    for i in 0..ns {
                        acc += rx[i + lag] * BARKER13[i];
                    }
                }
                acc / ns as f64
            })
            .collect();
        Self { l, eps_symbol, weights }
    }

    pub fn period(&self) -> usize {
        BARKER13.len() + self.l - 1
    }

    pub fn effective_epsilon(&self) -> f64 {
        self.period() as f64 * self.eps_symbol
    }

    /// Correlator output (before the inter-frame CFO rotation) for per-tap
    /// projections `h[ℓ]`.
    pub fn combine(&self, h: &[C64]) -> C64 {
        self.weights.iter().zip(h).map(|(w, x)| w * x).sum()
    }

    /// Largest deviation of any tap's correlator gain from 1.
    pub fn leakage(&self) -> f64 {
        self.weights.iter().map(|w| (w - C64::new(1.0, 0.0)).norm()).fold(0.0, f64::max)
    }

    /// Measurement of frame `n` given its per-tap projections.
    pub fn measure<R: Rng + ?Sized>(&self, h: &[C64], n: usize, sigma: f64, rng: &mut R) -> C64 {
        cis(self.effective_epsilon() * n as f64) * (self.combine(h) + noise(sigma, rng))
    }
}

/// Wideband shifted-ZC training along `t`, one Barker frame per step.
pub fn wideband_measure<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    t: &Trajectory,
    z: &ZcSequence,
    analog_cfo_hz: f64,
    bandwidth_hz: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<MeasurementSet> {
    if ch.n() != t.n || z.len() != ch.n() {
        return Err(Error::DimensionMismatch(format!(
            "channel {}, trajectory {}, ZC {}",
            ch.n(),
            t.n,
            z.len()
        )));
    }
    let mask = spectral_mask(z);
    let g_taps = ch.taps().iter().map(|h| virtual_channel(h, &mask)).collect::<Result<Vec<_>>>()?;
    let frame = FrameModel::new(ch.l(), symbol_epsilon(analog_cfo_hz, bandwidth_hz));
    let mut h = vec![C64::new(0.0, 0.0); ch.l()];
    let y = t
        .steps
        .iter()
        .enumerate()
        .map(|(n, &rc)| {
            for (hl, g) in h.iter_mut().zip(&g_taps) {
                *hl = g[rc];
            }
            frame.measure(&h, n, sigma, rng)
        })
        .collect();
    Ok(MeasurementSet {
        y,
        trajectory: t.clone(),
        epsilon: frame.eps_symbol,
        sigma,
        effective_epsilon: Some(frame.effective_epsilon()),
        seed: None,
    })
}
