//! Numerical checks of the average-RIP argument for p-trajectories.
//!
//! `T_{x,y}[n] = E[e^{j(x r[n] + y c[n])}]` is the characteristic function of
//! the coordinate sampled on contour `n`; `B_{x,y}` sums it over the contours a
//! p-trajectory visits. Bounds on `|B|` control how far the expected energy of
//! the sampled measurements can drift from `‖S‖²_F`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cis, C64, ComplexGrid};
use crate::trajectories::{contour, p_trajectory, start_contour, ContourDistribution};
use std::f64::consts::PI;

/// Independent RNG stream for trial `trial` of a run seeded with `seed`.
/// The stream depends only on `(seed, trial)`, never on scheduling.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// `E[e^{j(x r + y c)}]` over contour `k` of an `n x n` grid, by enumeration.
pub fn t_xy(k: usize, x: f64, y: f64, n: usize, dist: ContourDistribution) -> Result<C64> {
    let pts = contour(k, n)?;
    let probs = dist.probabilities(pts.len());
    Ok(pts.iter().zip(&probs).map(|(&(r, c), p)| cis(x * r as f64 + y * c as f64) * *p).sum())
}

/// Evenly spaced points `−π + 2πi/m`, `i = 0..m`.
pub fn angle_grid(m: usize) -> Vec<f64> {
    (0..m).map(|i| -PI + 2.0 * PI * i as f64 / m as f64).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub checked: usize,
    /// Differences above the bound (beyond floating-point slack).
    pub violations: usize,
    /// Differences equal to the bound to within rounding.
    pub ties: usize,
    pub worst_ratio: f64,
}

/// Checks `|T[n+1] − e^{jx}T[n]| < 2/(n+2)` and the `y` analogue for
/// `p0 ≤ n < N−1` at every `(x, y)` in `grid × grid`.
pub fn lemma1_check(n: usize, dist: ContourDistribution, grid: &[f64], p0: usize) -> Result<Lemma1Report> {
    if p0 + 1 >= n {
        return Err(Error::InvalidArgument(format!("p0 = {p0} leaves no contours below N − 1 = {}", n - 1)));
    }
    let mut rep = Lemma1Report::default();
    for &x in grid {
        for &y in grid {
            let mut t = t_xy(p0, x, y, n, dist)?;
            for k in p0..n - 1 {
                let next = t_xy(k + 1, x, y, n, dist)?;
                let bound = 2.0 / (k + 2) as f64;
                for d in [(next - cis(x) * t).norm(), (next - cis(y) * t).norm()] {
                    rep.checked += 1;
                    let ratio = d / bound;
                    rep.worst_ratio = rep.worst_ratio.max(ratio);
                    if ratio > 1.0 + 1e-12 {
                        rep.violations += 1;
                    } else if ratio >= 1.0 - 1e-12 {
                        rep.ties += 1;
                    }
                }
                t = next;
            }
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Report {
    pub b_upper: f64,
    pub b_total: f64,
    pub eta: f64,
    /// `(2 + log(N / (N + 1 − (M_p+1)/2)))·η`.
    pub bound_upper: f64,
    /// `(4 + 2 log(N / (N + 1 − (M_p+1)/2)))·η`.
    pub bound_total: f64,
    /// The same two bounds with `log(N / (p0 + 2))`, the form the proof reaches.
    pub tight_bound_upper: f64,
    pub tight_bound_total: f64,
}

impl Lemma2Report {
    pub fn holds(&self) -> bool {
        self.b_upper <= self.bound_upper && self.b_total <= self.bound_total
    }
}

/// `|B^U_{x,y}|`, `|B_{x,y}|` for uniform p-trajectories of odd length `m_p`
/// and the corresponding bounds. Rejects `(x, y)` where `η` diverges.
pub fn lemma2_check(n: usize, m_p: usize, x: f64, y: f64) -> Result<Lemma2Report> {
    if m_p.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("M_p must be odd, got {m_p}")));
    }
    let p0 = start_contour(n, m_p)?;
    let s = (x / 2.0).sin().abs().max((y / 2.0).sin().abs());
    if s < 1e-9 {
        return Err(Error::InvalidArgument(format!("eta diverges at ({x}, {y})")));
    }
    let eta = 1.0 / s;
    let mut upper = C64::new(0.0, 0.0);
    let mut total = C64::new(0.0, 0.0);
    for k in p0..p0 + m_p {
        let t = t_xy(k, x, y, n, ContourDistribution::Uniform)?;
        total += t;
        if k < n {
            upper += t;
        }
    }
    let l = (n as f64 / (n as f64 + 1.0 - (m_p as f64 + 1.0) / 2.0)).ln();
    let lt = (n as f64 / (p0 as f64 + 2.0)).ln();
    Ok(Lemma2Report {
        b_upper: upper.norm(),
        b_total: total.norm(),
        eta,
        bound_upper: (2.0 + l) * eta,
        bound_total: (4.0 + 2.0 * l) * eta,
        tight_bound_upper: (2.0 + lt) * eta,
        tight_bound_total: (4.0 + 2.0 * lt) * eta,
    })
}

/// Wrap-around distance `|x|⁺ = min(x mod N, N − x mod N)`.
fn wrap_dist(a: usize, b: usize, n: usize) -> usize {
    let d = (a + n - b) % n;
    d.min(n - d)
}

/// Minimum over pairs of `max(|Δx|⁺, |Δy|⁺)`; `None` for fewer than two points.
pub fn d_min(support: &[(usize, usize)], n: usize) -> Option<usize> {
    let mut best = None;
    for (i, a) in support.iter().enumerate() {
        for b in &support[i + 1..] {
            let d = wrap_dist(a.0, b.0, n).max(wrap_dist(a.1, b.1, n));
            best = Some(best.map_or(d, |x: usize| x.min(d)));
        }
    }
    best
}

/// Right side of the expected-energy condition, as a multiple of `‖S‖²_F`:
/// `(K−1)(4 + 2 log(N / (N + 1 − (M_p−1)/2))) / (M_p sin(π d_min / N))`.
pub fn theorem2_bound(n: usize, m_p: usize, k: usize, d_min: usize) -> f64 {
    if k <= 1 {
        return 0.0;
    }
    let nf = n as f64;
    let l = (nf / (nf + 1.0 - (m_p as f64 - 1.0) / 2.0)).ln();
    (k - 1) as f64 * (4.0 + 2.0 * l) / (m_p as f64 * (PI * d_min as f64 / nf).sin())
}

/// Smallest odd `M_p ≤ 2N − 1` whose bound is at most `delta`.
pub fn sufficient_mp(n: usize, k: usize, d_min: usize, delta: f64) -> Option<usize> {
    (1..2 * n).step_by(2).find(|&m| theorem2_bound(n, m, k, d_min) <= delta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub n: usize,
    pub m_p: usize,
    pub k: usize,
    /// 0 when `K = 1`.
    pub d_min: usize,
    pub trials: usize,
    pub energy: f64,
    /// `|mean(E) − ‖S‖²_F|`.
    pub empirical_deviation: f64,
    pub standard_error: f64,
    /// Bound in absolute units (already multiplied by `‖S‖²_F`).
    pub bound: f64,
    pub lemma_violations: usize,
}

impl RipReport {
    /// `mean + 3·SE ≤ bound`, or the exact `K = 1` case.
    pub fn passes(&self) -> bool {
        if self.k <= 1 {
            return self.empirical_deviation <= 1e-9 * self.energy.max(1.0);
        }
        self.empirical_deviation + 3.0 * self.standard_error <= self.bound
    }
}

/// Noiseless p-trajectory samples of `Σ_k s_k e^{j2π(x_k r + y_k c)/N}`.
pub fn sampled_energy(s: &ComplexGrid, steps: &[(usize, usize)]) -> f64 {
    let n = s.n();
    let atoms: Vec<(usize, usize, C64)> = (0..n)
        .flat_map(|x| (0..n).map(move |y| (x, y)))
        .filter(|&rc| s[rc].norm() > 0.0)
        .map(|(x, y)| (x, y, s[(x, y)]))
        .collect();
    let w = 2.0 * PI / n as f64;
    steps
        .iter()
        .map(|&(r, c)| {
            atoms
                .iter()
                .map(|&(x, y, v)| v * cis(w * ((x * r + y * c) % n) as f64))
                .sum::<C64>()
                .norm_sqr()
        })
        .sum::<f64>()
        / steps.len() as f64
}

/// Monte-Carlo estimate of `E[E]` over uniform p-trajectories of odd length
/// `m_p`, compared against the bound. Parallel over trials; the result does
/// not depend on the number of worker threads.
pub fn theorem2_check(n: usize, m_p: usize, s: &ComplexGrid, trials: usize, seed: u64) -> Result<RipReport> {
    if s.n() != n {
        return Err(Error::DimensionMismatch(format!("S is {}x{}, N = {n}", s.rows(), s.cols())));
    }
    if m_p.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("M_p must be odd, got {m_p}")));
    }
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least two trials".into()));
    }
    let support: Vec<(usize, usize)> =
        (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).filter(|&rc| s[rc].norm() > 0.0).collect();
    let k = support.len();
    if k == 0 {
        return Err(Error::NoSignal("sparse beamspace"));
    }
    let energy = s.fro_norm_sqr();
    let dm = d_min(&support, n).unwrap_or(0);
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i as u64);
            let t = p_trajectory(n, m_p, ContourDistribution::Uniform, &mut rng).expect("valid p-trajectory");
            sampled_energy(s, &t.steps)
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / trials as f64;
    let var = samples.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok(RipReport {
        n,
        m_p,
        k,
        d_min: dm,
        trials,
        energy,
        empirical_deviation: (mean - energy).abs(),
        standard_error: (var / trials as f64).sqrt(),
        bound: if k > 1 { theorem2_bound(n, m_p, k, dm) * energy } else { 0.0 },
        lemma_violations: 0,
    })
}

/// Harmonic number `H_i`.
pub fn harmonic(i: usize) -> f64 {
    (1..=i).map(|k| 1.0 / k as f64).sum()
}

/// Largest `I ≤ max_i` failing `log(I+1) < H_I ≤ 1 + log I`, if any.
pub fn harmonic_bound_failure(max_i: usize) -> Option<usize> {
    let mut h = 0.0;
    for i in 1..=max_i {
        h += 1.0 / i as f64;
        let lf = i as f64;
        if !((lf + 1.0).ln() < h && h <= 1.0 + lf.ln() + 1e-15) {
            return Some(i);
        }
    }
    None
}
