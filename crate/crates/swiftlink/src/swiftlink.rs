//! The Swift-Link estimator for type I and type II trajectories.
//!
//! Both trajectory types split into a p-branch (contours visited in increasing
//! order) and an n-branch (decreasing order). CFO shifts the two branch
//! beamspaces in opposite directions, so `G_p ⊙ conj(G_n)` summed over each
//! contour is a tone whose frequency is `2ε` (type I) or `4ε` (type II) per
//! contour. Its peak gives the CFO estimate.
//!
//! With `refine` enabled (the default) the estimate from the g-vector is only a
//! starting point: a few spectral peaks are tried, each is polished by
//! minimizing the branch residual after projecting out the recovered supports,
//! and the candidate whose compensated measurements are explained best by a
//! single joint sparse fit wins. This removes the bias that off-grid
//! beamspace shifts introduce into the coarse estimate.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines_metrics::nmse;
use crate::channel::channel_from_virtual;
use crate::error::{Error, Result};
use crate::numerics::{cis, idft2, norm, oversampled_dft, wrap, C64, ComplexGrid, ComplexVector};
use crate::recovery::{omp, projection_residual_sqr, support_basis, Dictionary, OmpResult, PartialDft2};
use crate::sequences::{spectral_mask, ZcSequence, BARKER13};
use crate::trajectories::{p_cnt, Trajectory, TrajectoryKind};

/// `g[k] = Σ_{r+c=k} G_p(r,c)·conj(G_n(r,c))`, length `2N−1`.
pub fn g_vector(gp: &ComplexGrid, gn: &ComplexGrid) -> Result<ComplexVector> {
    gp.require_same_shape(gn)?;
    let n = gp.require_square()?;
    let mut g = vec![C64::new(0.0, 0.0); 2 * n - 1];
    for r in 0..n {
        for c in 0..n {
            g[r + c] += gp[(r, c)] * gn[(r, c)].conj();
        }
    }
    Ok(g)
}

/// `X(ω) = Σ g[k] e^{−jωk}` and its first two derivatives in `ω`.
fn dtft3(g: &[C64], w: f64) -> (C64, C64, C64) {
    let mut x = C64::new(0.0, 0.0);
    let mut d1 = C64::new(0.0, 0.0);
    let mut d2 = C64::new(0.0, 0.0);
    for (k, gk) in g.iter().enumerate() {
        let k = k as f64;
        let t = gk * cis(-w * k);
        x += t;
        d1 += t * C64::new(0.0, -k);
        d2 += t * (-k * k);
    }
    (x, d1, d2)
}

/// Peak frequency near grid point `w0` (spacing `bin`): complex-ratio
/// interpolation on phase-centered neighbours, then Newton steps on `|X|²`.
fn refine_peak(g: &[C64], w0: f64, bin: f64) -> f64 {
    let center = (g.len() as f64 - 1.0) / 2.0;
    let xc = |w: f64| dtft3(g, w).0 * cis(w * center);
    let (xm, x0, xp) = (xc(w0 - bin), xc(w0), xc(w0 + bin));
    let den = x0 * 2.0 - xm - xp;
    let delta = if den.norm() > 0.0 { ((xm - xp) / den).re.clamp(-0.5, 0.5) } else { 0.0 };
    let mut w = w0 + delta * bin;
    for _ in 0..3 {
        let (x, d1, d2) = dtft3(g, w);
        let f1 = 2.0 * (d1 * x.conj()).re;
        let f2 = 2.0 * (d1.norm_sqr() + (d2 * x.conj()).re);
        if f2 >= 0.0 {
            break;
        }
        let next = w - f1 / f2;
        if (next - w0).abs() > bin {
            break;
        }
        w = next;
    }
    w
}

fn check_spacing(spacing: usize, oversample: usize) -> Result<()> {
    if spacing != 2 && spacing != 4 {
        return Err(Error::InvalidArgument(format!("spacing must be 2 or 4, got {spacing}")));
    }
    if oversample < 4 {
        return Err(Error::InvalidArgument(format!("oversample must be >= 4, got {oversample}")));
    }
    Ok(())
}

/// Up to `count` local maxima of `|Σ g[k] e^{−j·spacing·Δ·k}|` with
/// `|Δ| < range_limit`, strongest first, each refined. Values are `Δ` in
/// radians per slot.
pub fn spectrum_peaks(g: &[C64], spacing: usize, range_limit: f64, oversample: usize, count: usize) -> Result<Vec<f64>> {
    check_spacing(spacing, oversample)?;
    if g.iter().all(|x| x.norm() == 0.0) {
        return Err(Error::NoSignal("g-vector"));
    }
    let spec: Vec<f64> = oversampled_dft(g, oversample)?.iter().map(|x| x.norm()).collect();
    let f = spec.len();
    let bin = 2.0 * PI / f as f64;
    let s = spacing as f64;
    let allowed = |i: usize| wrap(i as f64 * bin, PI).abs() / s < range_limit;
    let mut peaks: Vec<usize> = (0..f)
        .filter(|&i| allowed(i) && spec[i] >= spec[(i + f - 1) % f] && spec[i] >= spec[(i + 1) % f])
        .collect();
    if peaks.is_empty() {
        // Range excludes every local maximum; fall back to the best allowed bin.
        peaks = (0..f).filter(|&i| allowed(i)).collect();
        peaks.sort_by(|&a, &b| spec[b].total_cmp(&spec[a]));
        peaks.truncate(1);
    }
    peaks.sort_by(|&a, &b| spec[b].total_cmp(&spec[a]).then(a.cmp(&b)));
    peaks.truncate(count.max(1));
    if peaks.is_empty() {
        return Err(Error::InvalidArgument(format!("range limit {range_limit} leaves no frequencies")));
    }
    Ok(peaks
        .into_iter()
        .map(|i| {
            let w = refine_peak(g, wrap(i as f64 * bin, PI), bin);
            let d = wrap(w, PI) / s;
            d.clamp(-range_limit, range_limit)
        })
        .collect())
}

/// CFO per slot maximizing `|Σ_k g[k] e^{−j·spacing·Δ·k}|` over `|Δ| < range_limit`.
pub fn estimate_cfo(g: &[C64], spacing: usize, range_limit: f64, oversample: usize) -> Result<f64> {
    Ok(spectrum_peaks(g, spacing, range_limit, oversample, 1)?[0])
}

/// Coherent combination of the two branch estimates.
///
/// `M_p = G_p ⊙ P_cnt(−ε̂)`, `M_n = G_n ⊙ P_cnt(ε̂)`, `φ = phase⟨M_p, M_n⟩`,
/// and the result is `M_p + e^{jφ} M_n`. Returns `(M, φ)`.
pub fn compensate_and_combine(gp: &ComplexGrid, gn: &ComplexGrid, eps_hat: f64) -> Result<(ComplexGrid, f64)> {
    gp.require_same_shape(gn)?;
    let n = gp.require_square()?;
    let mp = gp.hadamard(&p_cnt(n, -eps_hat));
    let mn = gn.hadamard(&p_cnt(n, eps_hat));
    let phi = mp.inner(&mn).arg();
    Ok((mp.add(&mn.scale(cis(phi))), phi))
}

/// Largest CFO in Hz a trajectory type can correct with `N_s`-symbol pilots over
/// `L` taps: `W / (4(N_s + L − 1))` for type I and half of that for type II.
pub fn cfo_range(kind: TrajectoryKind, bandwidth_hz: f64, ns: usize, l: usize) -> Result<f64> {
    let f1 = bandwidth_hz / (4.0 * (ns + l - 1) as f64);
    match kind {
        TrajectoryKind::TypeI => Ok(f1),
        TrajectoryKind::TypeII => Ok(f1 / 2.0),
        other => Err(Error::InvalidArgument(format!("no CFO range for {other:?} trajectories"))),
    }
}

/// Per-slot CFO back to Hz for a Barker frame of `N_s + L − 1` symbols.
pub fn epsilon_to_hz(eps: f64, bandwidth_hz: f64, l: usize) -> f64 {
    eps * bandwidth_hz / (2.0 * PI * (BARKER13.len() + l - 1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwiftLinkParams {
    pub k_max: usize,
    /// Noise standard deviation per measurement; sets the OMP stopping rule.
    pub sigma: f64,
    pub oversample: usize,
    /// Search limit on `|ε̂|`; `None` means the full aliasing range `π/spacing`.
    pub range_limit: Option<f64>,
    pub refine: bool,
    pub candidates: usize,
}

impl Default for SwiftLinkParams {
    fn default() -> Self {
        Self { k_max: 16, sigma: 0.0, oversample: 64, range_limit: None, refine: true, candidates: 6 }
    }
}

impl SwiftLinkParams {
    pub fn new(k_max: usize, sigma: f64) -> Self {
        Self { k_max, sigma, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub epsilon: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub g: ComplexVector,
    pub coarse_epsilon: f64,
    pub candidates: Vec<Candidate>,
    /// Residual norms of the first-stage p and n recoveries.
    pub branch_residuals: [f64; 2],
    pub final_residual: f64,
    pub support: Vec<(usize, usize)>,
    pub runtime_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwiftLinkResult {
    pub epsilon_hat: f64,
    pub h_hat: ComplexGrid,
    /// Phase aligning the n-branch to the p-branch (type I); 0 for type II.
    pub phi_hat: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, Serialize)]
pub struct SwiftLinkReport {
    pub epsilon_hat_rad: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_hat_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmse_db: Option<f64>,
    pub phi_hat: f64,
    pub support: Vec<(usize, usize)>,
    pub runtime_ms: f64,
    pub diagnostics: Diagnostics,
}

impl SwiftLinkResult {
    /// Summary with `ε̂` in Hz when the frame timing `(W, L)` is known and NMSE
    /// when the true channel is.
    pub fn report(&self, frame: Option<(f64, usize)>, truth: Option<&ComplexGrid>) -> SwiftLinkReport {
        SwiftLinkReport {
            epsilon_hat_rad: self.epsilon_hat,
            epsilon_hat_hz: frame.map(|(w, l)| epsilon_to_hz(self.epsilon_hat, w, l)),
            nmse_db: truth.map(|h| nmse(h, &self.h_hat)),
            phi_hat: self.phi_hat,
            support: self.diagnostics.support.clone(),
            runtime_ms: self.diagnostics.runtime_ms,
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn to_json(&self, frame: Option<(f64, usize)>, truth: Option<&ComplexGrid>) -> String {
        serde_json::to_string_pretty(&self.report(frame, truth)).expect("report serializes")
    }
}

struct Branch {
    name: &'static str,
    idx: Vec<usize>,
    dict: PartialDft2,
}

impl Branch {
    fn samples(&self, y: &[C64], eps: f64) -> ComplexVector {
        self.idx.iter().map(|&i| y[i] * cis(-eps * i as f64)).collect()
    }

    fn tol(&self, sigma: f64, y: &[C64]) -> f64 {
        stop_tol(self.idx.len(), sigma, norm(y))
    }

    fn recover(&self, y: &[C64], eps: f64, params: &SwiftLinkParams) -> Result<OmpResult> {
        let s = self.samples(y, eps);
        omp(&self.dict, &s, params.k_max, self.tol(params.sigma, &s))
            .map_err(|e| Error::Branch { branch: self.name, source: Box::new(e) })
    }

    fn virtual_channel(&self, res: &OmpResult) -> Result<ComplexGrid> {
        let n = (self.dict.n_atoms() as f64).sqrt().round() as usize;
        idft2(&ComplexGrid::from_vec(n, n, res.dense(n * n))?)
    }
}

fn stop_tol(m: usize, sigma: f64, y_norm: f64) -> f64 {
    (1e-10 * y_norm).max((m as f64).sqrt() * sigma)
}

/// Minimize a unimodal `f` on `[a, b]` by golden-section search.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

struct Setup {
    n: usize,
    spacing: usize,
    range: f64,
    p: Branch,
    q: Branch,
    joint: PartialDft2,
}

fn setup(y: &[C64], t: &Trajectory, kind: TrajectoryKind, params: &SwiftLinkParams) -> Result<Setup> {
    if t.kind != kind {
        return Err(Error::InvalidArgument(format!("expected a {kind:?} trajectory, got {:?}", t.kind)));
    }
    if y.len() != t.len() {
        return Err(Error::DimensionMismatch(format!("{} measurements for a {}-step trajectory", y.len(), t.len())));
    }
    let (pi, ni) = t
        .branch_indices()
        .ok_or_else(|| Error::InvalidArgument("trajectory has no branch split".into()))?;
    let joint = PartialDft2::from_trajectory(t);
    let spacing = if kind == TrajectoryKind::TypeI { 2 } else { 4 };
    let full = PI / spacing as f64;
    let range = params.range_limit.map_or(full, |r| r.min(full));
    Ok(Setup {
        n: t.n,
        spacing,
        range,
        p: Branch { name: "p", dict: joint.rows(&pi), idx: pi },
        q: Branch { name: "n", dict: joint.rows(&ni), idx: ni },
        joint,
    })
}

struct CfoSearch {
    epsilon: f64,
    g: ComplexVector,
    coarse: f64,
    candidates: Vec<Candidate>,
    branch_residuals: [f64; 2],
    first_stage: (ComplexGrid, ComplexGrid),
}

fn search_cfo(y: &[C64], s: &Setup, params: &SwiftLinkParams) -> Result<CfoSearch> {
    let rp = s.p.recover(y, 0.0, params)?;
    let rn = s.q.recover(y, 0.0, params)?;
    let gp = s.p.virtual_channel(&rp)?;
    let gn = s.q.virtual_channel(&rn)?;
    let g = g_vector(&gp, &gn)?;
    let branch_residuals = [rp.residual_norm(), rn.residual_norm()];
    let peaks = spectrum_peaks(&g, s.spacing, s.range, params.oversample, params.candidates)?;
    let coarse = peaks[0];
    if !params.refine {
        return Ok(CfoSearch { epsilon: coarse, g, coarse, candidates: Vec::new(), branch_residuals, first_stage: (gp, gn) });
    }

    // One beamspace bin of shift, expressed as CFO per slot.
    let bin = (2.0 * PI / s.n as f64) / (s.spacing as f64 / 2.0);
    let mut candidates = Vec::new();
    for &peak in &peaks {
        for off in [-0.5, 0.0, 0.5] {
            let mut eh = peak + off * bin;
            for _ in 0..2 {
                let sp = s.p.recover(y, eh, params)?.support;
                let sn = s.q.recover(y, eh, params)?.support;
                let qp = support_basis(&s.p.dict, &sp);
                let qn = support_basis(&s.q.dict, &sn);
                let cost = |d: f64| {
                    projection_residual_sqr(&qp, &s.p.samples(y, d)) + projection_residual_sqr(&qn, &s.q.samples(y, d))
                };
                eh = golden_min(cost, eh - bin / 4.0, eh + bin / 4.0, 1e-10);
            }
            let yc: ComplexVector = y.iter().enumerate().map(|(i, v)| v * cis(-eh * i as f64)).collect();
            let score = omp(&s.joint, &yc, params.k_max.min(yc.len()), 0.0)?.residual_norm();
            candidates.push(Candidate { epsilon: eh, score });
        }
    }
    let best = candidates
        .iter()
        .min_by(|a, b| a.score.total_cmp(&b.score))
        .expect("at least one candidate");
    let half = PI / s.spacing as f64;
    let epsilon = wrap(best.epsilon, half).clamp(-s.range, s.range);
    Ok(CfoSearch { epsilon, g, coarse, candidates, branch_residuals, first_stage: (gp, gn) })
}

/// Swift-Link on a type I trajectory: CFO estimate, coherent branch
/// combination and mask inversion.
///
/// `h_hat` is built from the average of the two aligned branch estimates, so
/// it carries the scale of the true channel up to a global phase.
pub fn run_type1(y: &[C64], t: &Trajectory, z: &ZcSequence, params: &SwiftLinkParams) -> Result<SwiftLinkResult> {
    let start = Instant::now();
    let s = setup(y, t, TrajectoryKind::TypeI, params)?;
    let cfo = search_cfo(y, &s, params)?;
    let (m, phi, support, final_residual) = if params.refine {
        let rp = s.p.recover(y, cfo.epsilon, params)?;
        let rn = s.q.recover(y, cfo.epsilon, params)?;
        let (m, phi) = compensate_and_combine(&s.p.virtual_channel(&rp)?, &s.q.virtual_channel(&rn)?, 0.0)?;
        let mut support: Vec<_> = rp.support.iter().chain(&rn.support).map(|&j| (j / s.n, j % s.n)).collect();
        support.sort_unstable();
        support.dedup();
        let res = (rp.residual_norm().powi(2) + rn.residual_norm().powi(2)).sqrt();
        (m, phi, support, res)
    } else {
        let (gp, gn) = &cfo.first_stage;
        let (m, phi) = compensate_and_combine(gp, gn, cfo.epsilon)?;
        (m, phi, Vec::new(), (cfo.branch_residuals[0].powi(2) + cfo.branch_residuals[1].powi(2)).sqrt())
    };
    let h_hat = channel_from_virtual(&m.scale(C64::new(0.5, 0.0)), &spectral_mask(z))?;
    Ok(SwiftLinkResult {
        epsilon_hat: cfo.epsilon,
        h_hat,
        phi_hat: phi,
        diagnostics: Diagnostics {
            g: cfo.g,
            coarse_epsilon: cfo.coarse,
            candidates: cfo.candidates,
            branch_residuals: cfo.branch_residuals,
            final_residual,
            support,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        },
    })
}

/// Swift-Link on a type II trajectory: CFO estimate from the interleaved
/// branches, then one sparse recovery over all compensated measurements.
pub fn run_type2(y: &[C64], t: &Trajectory, z: &ZcSequence, params: &SwiftLinkParams) -> Result<SwiftLinkResult> {
    let start = Instant::now();
    let s = setup(y, t, TrajectoryKind::TypeII, params)?;
    let cfo = search_cfo(y, &s, params)?;
    let yc: ComplexVector = y.iter().enumerate().map(|(i, v)| v * cis(-cfo.epsilon * i as f64)).collect();
    let res = omp(&s.joint, &yc, params.k_max.min(yc.len()), stop_tol(yc.len(), params.sigma, norm(&yc)))?;
    let n = s.n;
    let sh = ComplexGrid::from_vec(n, n, res.dense(n * n))?;
    let h_hat = channel_from_virtual(&idft2(&sh)?, &spectral_mask(z))?;
    let mut support: Vec<_> = res.support.iter().map(|&j| (j / n, j % n)).collect();
    support.sort_unstable();
    Ok(SwiftLinkResult {
        epsilon_hat: cfo.epsilon,
        h_hat,
        phi_hat: 0.0,
        diagnostics: Diagnostics {
            g: cfo.g,
            coarse_epsilon: cfo.coarse,
            candidates: cfo.candidates,
            branch_residuals: cfo.branch_residuals,
            final_residual: res.residual_norm(),
            support,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        },
    })
}

/// Dispatch on the trajectory kind.
pub fn run(y: &[C64], t: &Trajectory, z: &ZcSequence, params: &SwiftLinkParams) -> Result<SwiftLinkResult> {
    match t.kind {
        TrajectoryKind::TypeI => run_type1(y, t, z, params),
        TrajectoryKind::TypeII => run_type2(y, t, z, params),
        other => Err(Error::InvalidArgument(format!("Swift-Link needs a type I or II trajectory, got {other:?}"))),
    }
}

/// First-stage branch recoveries without CFO compensation, as used for the
/// g-vector. Returns the p and n virtual-channel estimates.
pub fn branch_estimates(y: &[C64], t: &Trajectory, params: &SwiftLinkParams) -> Result<(ComplexGrid, ComplexGrid)> {
    let s = setup(y, t, t.kind, params)?;
    let rp = s.p.recover(y, 0.0, params)?;
    let rn = s.q.recover(y, 0.0, params)?;
    Ok((s.p.virtual_channel(&rp)?, s.q.virtual_channel(&rn)?))
}
