//! Experiment configuration, Monte-Carlo orchestration and CSV/JSON export.
//!
//! Every trial draws its channel from `trial_rng(seed, trial)` and each method
//! family draws its trajectory, beams and noise from a separate stream keyed on
//! the same trial index, so methods and operating points see paired channels and
//! the output does not depend on how trials are scheduled.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines_metrics::{
    achievable_rate, exhaustive_scan_with, extract_beams, iid_cs_recover, nmse, papr, random_phase_beams, BeamPair,
};
use crate::channel::{channel_from_beamspace, random_channel, GridMode, Normalization};
use crate::error::{Error, Result};
use crate::measurement::{measure_trajectory, projection, symbol_epsilon, wideband_measure, FrameModel};
use crate::numerics::{dft2, ComplexGrid, C64};
use crate::recovery::{invert_mask, recover_masked_beamspace};
use crate::ripcheck::{
    angle_grid, harmonic_bound_failure, lemma1_check, lemma2_check, sufficient_mp, theorem2_check, trial_rng,
    Lemma1Report, RipReport,
};
use crate::sequences::{spectral_mask, zc, BARKER13};
use crate::swiftlink::{self, cfo_range, SwiftLinkParams};
use crate::trajectories::{
    block_trajectory, p_trajectory, row_trajectory, type1, type2, ContourDistribution, TrajectoryKind,
};

/// First line of every results CSV.
pub const RESULTS_SCHEMA: &str = "# swiftlink-results v1";
pub const SWEEP_SCHEMA: &str = "# swiftlink-sweep v1";
pub const RIP_SCHEMA: &str = "# swiftlink-ripcheck v1";
/// Second header line of results and sweep files.
pub const RATE_NOTE: &str = "# rate: beams from the estimate; residual CFO after compensation is not modeled";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SwiftlinkT1,
    SwiftlinkT2,
    IidCs,
    IidCsZeroCfo,
    Exhaustive,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::SwiftlinkT1, Method::SwiftlinkT2, Method::IidCs, Method::IidCsZeroCfo, Method::Exhaustive];

    pub fn name(self) -> &'static str {
        match self {
            Method::SwiftlinkT1 => "swiftlink-t1",
            Method::SwiftlinkT2 => "swiftlink-t2",
            Method::IidCs => "iid-cs",
            Method::IidCsZeroCfo => "iid-cs-zero-cfo",
            Method::Exhaustive => "exhaustive",
        }
    }

    /// Trajectory kind for the Swift-Link methods.
    pub fn trajectory_kind(self) -> Option<TrajectoryKind> {
        match self {
            Method::SwiftlinkT1 => Some(TrajectoryKind::TypeI),
            Method::SwiftlinkT2 => Some(TrajectoryKind::TypeII),
            _ => None,
        }
    }

    // The two IID-CS variants share a stream so they are paired on beams and noise.
    fn stream_salt(self) -> u64 {
        match self {
            Method::SwiftlinkT1 => 0x7431,
            Method::SwiftlinkT2 => 0x7432,
            Method::IidCs | Method::IidCsZeroCfo => 0x1dc5,
            Method::Exhaustive => 0xe8a5,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Flat experiment description; units are part of the key names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Total measurements per trial (both branches for Swift-Link).
    pub m: usize,
    /// Measurement counts for `sweep`; empty means `[m]`.
    pub m_list: Vec<usize>,
    pub k_max: usize,
    /// Channel taps `L`.
    pub taps: usize,
    /// Pilot length `N_s`; the Barker pilot fixes it at 13.
    pub pilot_len: usize,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub snr_db: Vec<f64>,
    /// CFO operating points in Hz. Exactly one of `cfo_hz`, `cfo_ppm` is used.
    pub cfo_hz: Vec<f64>,
    /// CFO operating points in ppm of `carrier_hz`.
    pub cfo_ppm: Vec<f64>,
    pub paths: usize,
    pub grid: GridMode,
    pub contour_dist: ContourDistribution,
    pub phase_bits: u32,
    pub n_subcarriers: usize,
    pub zc_root: i64,
    pub oversample: usize,
    pub candidates: usize,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    /// Allow Swift-Link runs outside the correctable CFO range.
    pub override_range: bool,
    pub rip_n: Vec<usize>,
    pub rip_grid_points: usize,
    pub rip_trials: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 32,
            m: 124,
            m_list: Vec::new(),
            k_max: 16,
            taps: 13,
            pilot_len: 13,
            bandwidth_hz: 100e6,
            carrier_hz: 28e9,
            snr_db: vec![0.0],
            cfo_hz: Vec::new(),
            cfo_ppm: vec![1.0],
            paths: 3,
            grid: GridMode::Off,
            contour_dist: ContourDistribution::Binomial,
            phase_bits: 3,
            n_subcarriers: 64,
            zc_root: 1,
            oversample: 64,
            candidates: 6,
            methods: Method::ALL.to_vec(),
            trials: 100,
            seed: 1,
            override_range: false,
            rip_n: vec![16, 32],
            rip_grid_points: 64,
            rip_trials: 100_000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// CFO operating points in Hz.
    pub fn cfo_points_hz(&self) -> Vec<f64> {
        if self.cfo_hz.is_empty() {
            self.cfo_ppm.iter().map(|p| p * 1e-6 * self.carrier_hz).collect()
        } else {
            self.cfo_hz.clone()
        }
    }

    pub fn m_points(&self) -> Vec<usize> {
        if self.m_list.is_empty() {
            vec![self.m]
        } else {
            self.m_list.clone()
        }
    }

    /// Rejects configurations the experiment loop cannot run as requested.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.snr_db.is_empty() {
            return bad("empty snr_db list".into());
        }
        if !self.cfo_hz.is_empty() && !self.cfo_ppm.is_empty() {
            return bad("set either cfo_hz or cfo_ppm, not both".into());
        }
        if self.cfo_points_hz().is_empty() {
            return bad("empty CFO list".into());
        }
        if self.pilot_len != BARKER13.len() {
            return bad(format!("pilot_len must be {} (Barker pilot)", BARKER13.len()));
        }
        if self.taps == 0 || self.n_subcarriers < self.taps {
            return bad(format!("need 1 <= taps <= n_subcarriers, got {} and {}", self.taps, self.n_subcarriers));
        }
        if self.paths == 0 || self.k_max == 0 {
            return bad("paths and k_max must be positive".into());
        }
        if self.bandwidth_hz <= 0.0 || self.carrier_hz <= 0.0 {
            return bad("bandwidth_hz and carrier_hz must be positive".into());
        }
        zc(self.n, self.zc_root).map_err(|e| Error::Config(e.to_string()))?;
        let cap = 2 * (2 * self.n - 1);
        for &m in &self.m_points() {
            if m == 0 {
                return bad("m must be positive".into());
            }
            for kind in self.methods.iter().filter_map(|m| m.trajectory_kind()) {
                if m > cap || m % 2 != 0 {
                    return bad(format!("Swift-Link needs an even m <= 2(2N-1) = {cap}, got {m}"));
                }
                if !self.override_range {
                    let lim = cfo_range(kind, self.bandwidth_hz, self.pilot_len, self.taps)?;
                    if let Some(f) = self.cfo_points_hz().into_iter().find(|f| f.abs() > lim) {
                        return bad(format!("CFO {f} Hz outside the {kind:?} range of {lim} Hz"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One row per (trial, method, operating point).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub seed: u64,
    pub trial: usize,
    pub snr_db: f64,
    pub cfo_hz: f64,
    pub m: usize,
    pub method: Method,
    pub rate: f64,
    pub nmse_db: Option<f64>,
    /// Squared CFO error `(ε̂ − ε)²` per measurement slot.
    pub cfo_mse: Option<f64>,
    pub papr_db: Option<f64>,
    pub runtime_ms: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatingPoint {
    pub snr_db: f64,
    pub cfo_hz: f64,
    pub m: usize,
}

/// Noise standard deviation for an SNR in dB, relative to unit mean power per
/// virtual-channel entry (channels are normalized to `Σ_ℓ ‖H[ℓ]‖² = N²`).
pub fn sigma_from_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0)
}

fn method_rng(seed: u64, method: Method, trial: usize) -> rand_chacha::ChaCha8Rng {
    trial_rng(seed ^ method.stream_salt().wrapping_mul(0x9e37_79b9_7f4a_7c15), trial as u64)
}

/// Narrowband channel seen through the Barker correlator, `Σ_ℓ w_ℓ H[ℓ]`.
fn effective_channel(taps: &[ComplexGrid], frame: &FrameModel) -> ComplexGrid {
    let mut h = ComplexGrid::square(taps[0].n());
    for (t, w) in taps.iter().zip(&frame.weights) {
        h = h.add(&t.scale(*w));
    }
    h
}

/// Beams from an estimate, falling back to boresight when nothing was recovered.
fn beams_or_boresight(h_hat: &ComplexGrid, bits: u32) -> Result<BeamPair> {
    match extract_beams(h_hat, Some(bits)) {
        Err(Error::NoSignal(_)) => Ok(BeamPair::dft(h_hat.n(), 0, 0)),
        other => other,
    }
}

/// Runs one method on one trial at one operating point.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize, point: OperatingPoint, method: Method) -> Result<ResultRow> {
    let n = cfg.n;
    let sigma = sigma_from_snr(point.snr_db);
    let mut ch_rng = trial_rng(cfg.seed, trial as u64);
    let ch = random_channel(n, cfg.paths, cfg.taps, cfg.grid, Normalization::PerRealization, &mut ch_rng)?;
    let mut rng = method_rng(cfg.seed, method, trial);
    let start = Instant::now();
    let frame = FrameModel::new(cfg.taps, symbol_epsilon(point.cfo_hz, cfg.bandwidth_hz));
    let mut row = ResultRow {
        seed: cfg.seed,
        trial,
        snr_db: point.snr_db,
        cfo_hz: point.cfo_hz,
        m: point.m,
        method,
        rate: 0.0,
        nmse_db: None,
        cfo_mse: None,
        papr_db: None,
        runtime_ms: None,
    };
    let beams = match method {
        Method::SwiftlinkT1 | Method::SwiftlinkT2 => {
            let t = if method == Method::SwiftlinkT1 {
                type1(n, point.m, cfg.contour_dist, &mut rng)?
            } else {
                type2(n, point.m, cfg.contour_dist, &mut rng)?
            };
            let z = zc(n, cfg.zc_root)?;
            let meas = wideband_measure(&ch, &t, &z, point.cfo_hz, cfg.bandwidth_hz, sigma, &mut rng)?;
            let params = SwiftLinkParams {
                k_max: cfg.k_max,
                sigma,
                oversample: cfg.oversample,
                candidates: cfg.candidates,
                ..SwiftLinkParams::default()
            };
            let res = swiftlink::run(&meas.y, &t, &z, &params)?;
            let eps = meas.effective_epsilon.unwrap_or(meas.epsilon);
            row.cfo_mse = Some((res.epsilon_hat - eps).powi(2));
            row.nmse_db = Some(nmse(&effective_channel(ch.taps(), &frame), &res.h_hat));
            row.papr_db = Some(papr(&meas.y)?);
            beams_or_boresight(&res.h_hat, cfg.phase_bits)?
        }
        Method::IidCs | Method::IidCsZeroCfo => {
            let frame = if method == Method::IidCs { frame.clone() } else { FrameModel::new(cfg.taps, 0.0) };
            let (b, d) = random_phase_beams(n, point.m, cfg.phase_bits, &mut rng);
            let mut proj = vec![C64::new(0.0, 0.0); cfg.taps];
            let mut y = Vec::with_capacity(point.m);
            for i in 0..point.m {
                for (p, h) in proj.iter_mut().zip(ch.taps()) {
                    *p = projection(h, &b[i], &d[i])?;
                }
                y.push(frame.measure(&proj, i, sigma, &mut rng));
            }
            let h_hat = iid_cs_recover(&b, &d, &y, cfg.k_max, sigma)?;
            row.nmse_db = Some(nmse(&effective_channel(ch.taps(), &frame), &h_hat));
            row.papr_db = Some(papr(&y)?);
            beams_or_boresight(&h_hat, cfg.phase_bits)?
        }
        Method::Exhaustive => {
            let mut proj = vec![C64::new(0.0, 0.0); cfg.taps];
            let scan = exhaustive_scan_with(n, |b, d, slot| {
                for (p, h) in proj.iter_mut().zip(ch.taps()) {
                    *p = projection(h, b, d).expect("square taps");
                }
                frame.measure(&proj, slot, sigma, &mut rng)
            });
            row.papr_db = Some(papr(&scan.y)?);
            let (p, q) = scan.best;
            let mut beams = BeamPair::dft(n, p, q);
            beams.f_e = crate::sequences::quantize_phases(&beams.f_e, cfg.phase_bits);
            beams.f_a = crate::sequences::quantize_phases(&beams.f_a, cfg.phase_bits);
            beams.bits = Some(cfg.phase_bits);
            beams
        }
    };
    row.rate = achievable_rate(&ch, &beams, sigma, cfg.n_subcarriers)?;
    row.runtime_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    Ok(row)
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        a.snr_db
            .total_cmp(&b.snr_db)
            .then(a.cfo_hz.total_cmp(&b.cfo_hz))
            .then(a.m.cmp(&b.m))
            .then(a.trial.cmp(&b.trial))
            .then(a.method.cmp(&b.method))
    });
}

fn run_grid(cfg: &ExperimentConfig, m_points: &[usize]) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &snr_db in &cfg.snr_db {
        for cfo_hz in cfg.cfo_points_hz() {
            for &m in m_points {
                for trial in 0..cfg.trials {
                    for &method in &cfg.methods {
                        jobs.push((trial, OperatingPoint { snr_db, cfo_hz, m }, method));
                    }
                }
            }
        }
    }
    let mut rows =
        jobs.into_par_iter().map(|(t, p, m)| run_trial(cfg, t, p, m)).collect::<Result<Vec<_>>>()?;
    sort_rows(&mut rows);
    Ok(rows)
}

/// All trials, methods and (SNR, CFO) points at the single measurement count `m`.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    run_grid(cfg, &[cfg.m])
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes rows under the versioned header. Runtimes are wall-clock and vary
/// between runs, so the column stays empty unless `timings` is set.
pub fn write_results_csv<W: Write>(rows: &[ResultRow], w: W, timings: bool) -> Result<()> {
    let mut w = w;
    writeln!(w, "{RESULTS_SCHEMA}\n{RATE_NOTE}").map_err(io_err)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["seed", "trial", "snr_db", "cfo_hz", "m", "method", "rate", "nmse_db", "cfo_mse", "papr_db", "runtime_ms"])
        .map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.seed.to_string(),
            r.trial.to_string(),
            r.snr_db.to_string(),
            r.cfo_hz.to_string(),
            r.m.to_string(),
            r.method.name().to_string(),
            r.rate.to_string(),
            opt(r.nmse_db),
            opt(r.cfo_mse),
            opt(r.papr_db),
            if timings { opt(r.runtime_ms) } else { String::new() },
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidArgument(format!("I/O: {e}"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("CSV: {e}"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Standard error of the mean; 0 for a single sample.
    pub se: f64,
}

impl Stat {
    pub fn of(v: &[f64]) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let se = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, se })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub snr_db: f64,
    pub cfo_hz: f64,
    pub m: usize,
    pub method: Method,
    pub trials: usize,
    pub rate: Stat,
    pub nmse_db: Option<Stat>,
    pub cfo_mse: Option<Stat>,
    pub papr_db: Option<Stat>,
}

/// Grid over SNR × CFO × M with per-cell mean and standard error.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>> {
    let m_points = cfg.m_points();
    if m_points.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    Ok(aggregate(&run_grid(cfg, &m_points)?))
}

type CellKey = (u64, u64, usize, Method);

/// Groups rows by operating point and method.
pub fn aggregate(rows: &[ResultRow]) -> Vec<SweepCell> {
    let mut groups: BTreeMap<CellKey, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((ordered(r.snr_db), ordered(r.cfo_hz), r.m, r.method)).or_default().push(r);
    }
    let stat = |g: &[&ResultRow], f: fn(&ResultRow) -> Option<f64>| {
        Stat::of(&g.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
    };
    groups
        .into_values()
        .map(|g| SweepCell {
            snr_db: g[0].snr_db,
            cfo_hz: g[0].cfo_hz,
            m: g[0].m,
            method: g[0].method,
            trials: g.len(),
            rate: stat(&g, |r| Some(r.rate)).expect("non-empty group"),
            nmse_db: stat(&g, |r| r.nmse_db),
            cfo_mse: stat(&g, |r| r.cfo_mse),
            papr_db: stat(&g, |r| r.papr_db),
        })
        .collect()
}

// Total order on f64 keys that matches `f64::total_cmp`.
fn ordered(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

pub fn write_sweep_csv<W: Write>(cells: &[SweepCell], w: W) -> Result<()> {
    let mut w = w;
    writeln!(w, "{SWEEP_SCHEMA}\n{RATE_NOTE}").map_err(io_err)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "snr_db", "cfo_hz", "m", "method", "trials", "rate_mean", "rate_se", "nmse_db_mean", "nmse_db_se", "cfo_mse",
        "papr_db_mean",
    ])
    .map_err(csv_err)?;
    for c in cells {
        out.write_record([
            c.snr_db.to_string(),
            c.cfo_hz.to_string(),
            c.m.to_string(),
            c.method.name().to_string(),
            c.trials.to_string(),
            c.rate.mean.to_string(),
            c.rate.se.to_string(),
            opt(c.nmse_db.map(|s| s.mean)),
            opt(c.nmse_db.map(|s| s.se)),
            opt(c.cfo_mse.map(|s| s.mean)),
            opt(c.papr_db.map(|s| s.mean)),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

/// Magnitude of the beamspace reconstructed from noiseless measurements of a
/// single `(0, 0)` component under per-slot CFO `eps`.
///
/// `Row` and `Block` sample the whole grid and invert it directly; `P` runs a
/// one-atom recovery on a full-length p-trajectory drawn from `rng`.
pub fn demo_shift<R: Rng + ?Sized>(n: usize, eps: f64, kind: TrajectoryKind, rng: &mut R) -> Result<ComplexGrid> {
    let mut x = ComplexGrid::square(n);
    x[(0, 0)] = C64::new(n as f64, 0.0);
    let h = channel_from_beamspace(&x)?;
    let z = zc(n, 1)?;
    let mask = spectral_mask(&z);
    let s_hat = match kind {
        TrajectoryKind::Row | TrajectoryKind::Block => {
            let t = if kind == TrajectoryKind::Row { row_trajectory(n) } else { block_trajectory(n)? };
            let meas = measure_trajectory(&h, &t, &z, eps, 0.0, rng)?;
            dft2(&crate::measurement::scatter(&meas.y, &t))?
        }
        TrajectoryKind::P => {
            let t = p_trajectory(n, 2 * n - 1, ContourDistribution::Uniform, rng)?;
            let meas = measure_trajectory(&h, &t, &z, eps, 0.0, rng)?;
            recover_masked_beamspace(&meas.y, &t, 1, 0.0)?.s_hat
        }
        other => return Err(Error::InvalidArgument(format!("no shift demo for {other:?} trajectories"))),
    };
    Ok(invert_mask(&s_hat, &mask)?.map(|v| C64::new(v.norm(), 0.0)))
}

/// `r,c,magnitude` rows.
pub fn write_grid_csv<W: Write>(g: &ComplexGrid, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["r", "c", "magnitude"]).map_err(csv_err)?;
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            out.write_record([r.to_string(), c.to_string(), g[(r, c)].re.to_string()]).map_err(csv_err)?;
        }
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma2Summary {
    pub n: usize,
    pub m_p: usize,
    pub checked: usize,
    pub excluded: usize,
    pub violations: usize,
    /// Largest `|B| / bound` over the grid.
    pub worst_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RipCase {
    pub label: String,
    pub report: RipReport,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RipSuite {
    pub lemma1: Vec<(usize, Lemma1Report)>,
    pub lemma2: Vec<Lemma2Summary>,
    pub theorem2: Vec<RipCase>,
    pub harmonic_ok: bool,
    /// Smallest odd `M_p` meeting `δ_K = 0.5` for `K = 2`, `d_min = 1`, `N = 16`.
    pub sufficient_mp_dmin1: Option<usize>,
}

impl RipSuite {
    pub fn violations(&self) -> usize {
        self.lemma1.iter().map(|(_, r)| r.violations).sum::<usize>()
            + self.lemma2.iter().map(|s| s.violations).sum::<usize>()
            + self.theorem2.iter().filter(|c| !c.passes).count()
            + usize::from(!self.harmonic_ok)
    }
}

fn two_point(n: usize, a: (usize, usize), b: (usize, usize)) -> ComplexGrid {
    let mut s = ComplexGrid::square(n);
    s[a] = C64::new(1.0, 0.0);
    s[b] = C64::new(0.0, 1.0);
    s
}

/// Lemma and theorem checks for every `N` in `rip_n`, with `M_p = 2N − 1`.
pub fn ripcheck_suite(cfg: &ExperimentConfig) -> Result<RipSuite> {
    if cfg.rip_n.is_empty() || cfg.rip_grid_points == 0 {
        return Err(Error::Config("ripcheck needs rip_n and rip_grid_points".into()));
    }
    if cfg.rip_trials < 2 {
        return Err(Error::Config("rip_trials must be at least 2".into()));
    }
    let grid = angle_grid(cfg.rip_grid_points);
    let mut suite = RipSuite {
        lemma1: Vec::new(),
        lemma2: Vec::new(),
        theorem2: Vec::new(),
        harmonic_ok: harmonic_bound_failure(10_000).is_none(),
        sufficient_mp_dmin1: sufficient_mp(16, 2, 1, 0.5),
    };
    for &n in &cfg.rip_n {
        if n < 2 {
            return Err(Error::Config(format!("rip_n entries must be >= 2, got {n}")));
        }
        let m_p = 2 * n - 1;
        suite.lemma1.push((n, lemma1_check(n, ContourDistribution::Uniform, &grid, 0)?));
        let pts: Vec<(f64, f64)> = grid.iter().flat_map(|&x| grid.iter().map(move |&y| (x, y))).collect();
        let reports: Vec<_> = pts.par_iter().map(|&(x, y)| lemma2_check(n, m_p, x, y).ok()).collect();
        let mut sum = Lemma2Summary { n, m_p, checked: 0, excluded: 0, violations: 0, worst_ratio: 0.0 };
        for r in reports {
            match r {
                None => sum.excluded += 1,
                Some(r) => {
                    sum.checked += 1;
                    sum.violations += usize::from(!r.holds());
                    sum.worst_ratio =
                        sum.worst_ratio.max(r.b_upper / r.bound_upper).max(r.b_total / r.bound_total);
                }
            }
        }
        suite.lemma2.push(sum);
        let cases = [
            (format!("N={n} K=2 d_min={}", n / 2), two_point(n, (0, 0), (n / 2, n / 2))),
            (format!("N={n} K=2 d_min=1"), two_point(n, (3, 4), (4, 4))),
            (format!("N={n} K=1"), {
                let mut s = ComplexGrid::square(n);
                s[(1, 2)] = C64::new(1.0, 0.0);
                s
            }),
        ];
        for (i, (label, s)) in cases.into_iter().enumerate() {
            let report = theorem2_check(n, m_p, &s, cfg.rip_trials, cfg.seed.wrapping_add(i as u64))?;
            let passes = report.passes();
            suite.theorem2.push(RipCase { label, report, passes });
        }
    }
    Ok(suite)
}

pub fn write_rip_csv<W: Write>(suite: &RipSuite, w: W) -> Result<()> {
    let mut w = w;
    writeln!(w, "{RIP_SCHEMA}").map_err(io_err)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["check", "n", "m_p", "k", "d_min", "empirical_deviation", "bound", "violations", "pass"])
        .map_err(csv_err)?;
    for (n, r) in &suite.lemma1 {
        out.write_record([
            "lemma1".into(),
            n.to_string(),
            String::new(),
            String::new(),
            String::new(),
            r.worst_ratio.to_string(),
            "1".into(),
            r.violations.to_string(),
            (r.violations == 0).to_string(),
        ])
        .map_err(csv_err)?;
    }
    for s in &suite.lemma2 {
        out.write_record([
            "lemma2".into(),
            s.n.to_string(),
            s.m_p.to_string(),
            String::new(),
            String::new(),
            s.worst_ratio.to_string(),
            "1".into(),
            s.violations.to_string(),
            (s.violations == 0).to_string(),
        ])
        .map_err(csv_err)?;
    }
    for c in &suite.theorem2 {
        let r = &c.report;
        out.write_record([
            "theorem2".into(),
            r.n.to_string(),
            r.m_p.to_string(),
            r.k.to_string(),
            r.d_min.to_string(),
            r.empirical_deviation.to_string(),
            r.bound.to_string(),
            usize::from(!c.passes).to_string(),
            c.passes.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}
