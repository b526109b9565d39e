//! Sampling trajectories over the `N x N` virtual grid.
//!
//! Measurement `n` of a trajectory samples `G(r[n], c[n])` and picks up a CFO
//! phase `e^{jεn}`. Row and block orders smear that phase over the grid in
//! ways that shift or replicate the beamspace. Contour-following (p/n)
//! trajectories advance one anti-diagonal per step, so the phase is constant
//! along every anti-diagonal and the beamspace is only shifted by `(ε, ε)`.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cis, vandermonde, ComplexGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    Row,
    Block,
    P,
    N,
    TypeI,
    TypeII,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ContourDistribution {
    #[default]
    Uniform,
    /// Coordinate `i` of a `(k+1)`-point contour with probability `C(k,i)/2^k`.
    Binomial,
}

impl ContourDistribution {
    pub fn probabilities(self, size: usize) -> Vec<f64> {
        match self {
            Self::Uniform => vec![1.0 / size as f64; size],
            Self::Binomial => {
                let k = size - 1;
                let mut p = Vec::with_capacity(size);
                let mut c = 1.0f64;
                for i in 0..size {
                    p.push(c / 2f64.powi(k as i32));
                    c = c * (k - i) as f64 / (i + 1) as f64;
                }
                p
            }
        }
    }

    fn sample<R: Rng + ?Sized>(self, size: usize, rng: &mut R) -> usize {
        match self {
            Self::Uniform => rng.random_range(0..size),
            Self::Binomial => {
                if size == 1 {
                    0
                } else {
                    Binomial::new((size - 1) as u64, 0.5).expect("valid binomial").sample(rng) as usize
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n: usize,
    pub kind: TrajectoryKind,
    pub steps: Vec<(usize, usize)>,
    /// First contour of a p/n trajectory (lowest contour index visited).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_contour: Option<usize>,
    /// Length of the p part of a composed trajectory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Trajectory {
    pub fn new(n: usize, kind: TrajectoryKind, steps: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(&(r, c)) = steps.iter().find(|&&(r, c)| r >= n || c >= n) {
            return Err(Error::InvalidArgument(format!("step ({r}, {c}) outside {n}x{n} grid")));
        }
        Ok(Self { n, kind, steps, start_contour: None, p_len: None, seed: None })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Time indices of the p and n parts of a composed trajectory.
    pub fn branch_indices(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match self.kind {
            TrajectoryKind::TypeI => {
                let p = self.p_len?;
                Some(((0..p).collect(), (p..self.len()).collect()))
            }
            TrajectoryKind::TypeII => {
                Some(((0..self.len()).step_by(2).collect(), (1..self.len()).step_by(2).collect()))
            }
            _ => None,
        }
    }

    /// The p and n parts of a composed trajectory as standalone trajectories.
    pub fn branches(&self) -> Option<(Trajectory, Trajectory)> {
        let (pi, ni) = self.branch_indices()?;
        let sub = |idx: &[usize], kind| Trajectory {
            n: self.n,
            kind,
            steps: idx.iter().map(|&i| self.steps[i]).collect(),
            start_contour: self.start_contour,
            p_len: None,
            seed: None,
        };
        Some((sub(&pi, TrajectoryKind::P), sub(&ni, TrajectoryKind::N)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Trajectory =
            serde_json::from_str(s).map_err(|e| Error::InvalidArgument(format!("trajectory JSON: {e}")))?;
        Trajectory::new(t.n, t.kind, t.steps.clone())?;
        Ok(t)
    }
}

/// The `k`-th anti-diagonal `{(r, c) : r + c = k}`, ordered by ascending `r`.
pub fn contour(k: usize, n: usize) -> Result<Vec<(usize, usize)>> {
    if n == 0 || k > 2 * n - 2 {
        return Err(Error::InvalidArgument(format!("contour {k} outside 0..={}", (2 * n).saturating_sub(2))));
    }
    let lo = k.saturating_sub(n - 1);
    let hi = k.min(n - 1);
    Ok((lo..=hi).map(|r| (r, k - r)).collect())
}

pub fn contour_len(k: usize, n: usize) -> usize {
    (k + 1).min(2 * n - 1 - k)
}

/// Raster order: `r[n] = ⌊n/N⌋`, `c[n] = n mod N`.
pub fn row_trajectory(n: usize) -> Trajectory {
    let steps = (0..n * n).map(|m| (m / n, m % n)).collect();
    Trajectory { n, kind: TrajectoryKind::Row, steps, start_contour: None, p_len: None, seed: None }
}

/// Four-quadrant order whose CFO phases form the block phase matrix of [`p_blk`].
///
/// Top-left quadrant in reverse raster order, top-right in raster order,
/// bottom-left column by column from the bottom up, bottom-right column by
/// column from the right.
pub fn block_trajectory(n: usize) -> Result<Trajectory> {
    if !n.is_multiple_of(2) || n == 0 {
        return Err(Error::InvalidArgument(format!("block trajectory needs even N, got {n}")));
    }
    let h = n / 2;
    let (u1, u2, u3, u4) = block_offsets(n);
    let mut steps = vec![(0, 0); n * n];
    for r in 0..n {
        for c in 0..n {
            let m = match (r < h, c < h) {
                (true, true) => u1 - (r * h + c) as i64,
                (true, false) => u2 + (r * h + (c - h)) as i64,
                (false, true) => u3 - (r - h) as i64 + (c * h) as i64,
                (false, false) => u4 + (r - h) as i64 - ((c - h) * h) as i64,
            };
            steps[m as usize] = (r, c);
        }
    }
    Ok(Trajectory { n, kind: TrajectoryKind::Block, steps, start_contour: None, p_len: None, seed: None })
}

fn block_offsets(n: usize) -> (i64, i64, i64, i64) {
    let n = n as i64;
    (n * n / 4 - 1, n * n / 4, n * n / 2 + n / 2 - 1, n * n - n / 2)
}

/// First contour of a length-`m` p-trajectory centred on contour `N−1`:
/// `N − 1 − ⌊m/2⌋`, which equals `N − (m+1)/2` for odd `m`.
pub fn start_contour(n: usize, m: usize) -> Result<usize> {
    if m == 0 || m > 2 * n - 1 {
        return Err(Error::InvalidArgument(format!("trajectory length {m} outside 1..={}", 2 * n - 1)));
    }
    Ok(n - 1 - m / 2)
}

fn contour_walk<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    dist: ContourDistribution,
    descending: bool,
    rng: &mut R,
) -> Result<(Vec<(usize, usize)>, usize)> {
    let p0 = start_contour(n, m)?;
    let mut steps = Vec::with_capacity(m);
    for i in 0..m {
        let k = if descending { p0 + m - 1 - i } else { p0 + i };
        let pts = contour(k, n)?;
        steps.push(pts[dist.sample(pts.len(), rng)]);
    }
    Ok((steps, p0))
}

/// One randomly chosen coordinate on each of the contours `p0, p0+1, …, p0+m−1`.
pub fn p_trajectory<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    dist: ContourDistribution,
    rng: &mut R,
) -> Result<Trajectory> {
    let (steps, p0) = contour_walk(n, m, dist, false, rng)?;
    Ok(Trajectory { n, kind: TrajectoryKind::P, steps, start_contour: Some(p0), p_len: None, seed: None })
}

/// Same contours as [`p_trajectory`], visited in decreasing order.
pub fn n_trajectory<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    dist: ContourDistribution,
    rng: &mut R,
) -> Result<Trajectory> {
    let (steps, p0) = contour_walk(n, m, dist, true, rng)?;
    Ok(Trajectory { n, kind: TrajectoryKind::N, steps, start_contour: Some(p0), p_len: None, seed: None })
}

fn check_pair(p: &Trajectory, q: &Trajectory) -> Result<()> {
    if p.n != q.n {
        return Err(Error::DimensionMismatch(format!("grids {} and {}", p.n, q.n)));
    }
    Ok(())
}

/// p-trajectory followed by n-trajectory.
pub fn compose_type1(p: &Trajectory, n: &Trajectory) -> Result<Trajectory> {
    check_pair(p, n)?;
    let mut steps = p.steps.clone();
    steps.extend_from_slice(&n.steps);
    Ok(Trajectory {
        n: p.n,
        kind: TrajectoryKind::TypeI,
        steps,
        start_contour: p.start_contour,
        p_len: Some(p.len()),
        seed: None,
    })
}

/// `p(1), n(1), p(2), n(2), …`.
pub fn compose_type2(p: &Trajectory, n: &Trajectory) -> Result<Trajectory> {
    check_pair(p, n)?;
    if p.len() != n.len() {
        return Err(Error::DimensionMismatch(format!("interleaving lengths {} and {}", p.len(), n.len())));
    }
    let steps = p.steps.iter().zip(&n.steps).flat_map(|(&a, &b)| [a, b]).collect();
    Ok(Trajectory {
        n: p.n,
        kind: TrajectoryKind::TypeII,
        steps,
        start_contour: p.start_contour,
        p_len: Some(p.len()),
        seed: None,
    })
}

/// Type I trajectory with `m/2` steps per branch (`m` even, `m ≤ 2(2N−1)`).
pub fn type1<R: Rng + ?Sized>(n: usize, m: usize, dist: ContourDistribution, rng: &mut R) -> Result<Trajectory> {
    let half = branch_len(n, m)?;
    let p = p_trajectory(n, half, dist, rng)?;
    let q = n_trajectory(n, half, dist, rng)?;
    compose_type1(&p, &q)
}

/// Type II trajectory with `m/2` steps per branch.
pub fn type2<R: Rng + ?Sized>(n: usize, m: usize, dist: ContourDistribution, rng: &mut R) -> Result<Trajectory> {
    let half = branch_len(n, m)?;
    let p = p_trajectory(n, half, dist, rng)?;
    let q = n_trajectory(n, half, dist, rng)?;
    compose_type2(&p, &q)
}

fn branch_len(n: usize, m: usize) -> Result<usize> {
    if !m.is_multiple_of(2) || m == 0 || m > 2 * (2 * n - 1) {
        return Err(Error::InvalidArgument(format!(
            "composite length {m} must be even and at most {}",
            2 * (2 * n - 1)
        )));
    }
    Ok(m / 2)
}

/// Fill `e^{jmε}` at the coordinate visited at time `m`; unvisited cells are 0.
/// A coordinate visited more than once keeps its last phase.
pub fn induced_phase_matrix(t: &Trajectory, eps: f64) -> ComplexGrid {
    let mut out = ComplexGrid::square(t.n);
    for (m, &(r, c)) in t.steps.iter().enumerate() {
        out[(r, c)] = cis(eps * m as f64);
    }
    out
}

/// `P_cnt(ε) = a_N(ε) a_N(ε)ᵀ`, entry `(r,c) = e^{jε(r+c)}`.
pub fn p_cnt(n: usize, eps: f64) -> ComplexGrid {
    let a = vandermonde(n, eps);
    ComplexGrid::outer(&a, &a)
}

/// `Q_cnt(ε) = e^{j2(N−1)ε} P_cnt(−ε)`, entry `(r,c) = e^{jε(2(N−1)−r−c)}`.
pub fn q_cnt(n: usize, eps: f64) -> ComplexGrid {
    p_cnt(n, -eps).scale(cis(2.0 * (n as f64 - 1.0) * eps))
}

/// Row-trajectory phase matrix `a_N(Nε) a_N(ε)ᵀ`.
pub fn p_row(n: usize, eps: f64) -> ComplexGrid {
    ComplexGrid::outer(&vandermonde(n, n as f64 * eps), &vandermonde(n, eps))
}

/// Block-trajectory phase matrix, built quadrant by quadrant.
pub fn p_blk(n: usize, eps: f64) -> Result<ComplexGrid> {
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("block phase matrix needs even N, got {n}")));
    }
    let h = n / 2;
    let nf = n as f64;
    let (u1, u2, u3, u4) = block_offsets(n);
    let quads: [(i64, f64, f64); 4] = [
        (u1, -nf * eps / 2.0, -eps),
        (u2, nf * eps / 2.0, eps),
        (u3, -eps, nf * eps / 2.0),
        (u4, eps, -nf * eps / 2.0),
    ];
    let mut out = ComplexGrid::square(n);
    for (qi, &(u, wr, wc)) in quads.iter().enumerate() {
        let block = ComplexGrid::outer(&vandermonde(h, wr), &vandermonde(h, wc)).scale(cis(eps * u as f64));
        let (r0, c0) = [(0, 0), (0, h), (h, 0), (h, h)][qi];
        for r in 0..h {
            for c in 0..h {
                out[(r0 + r, c0 + c)] = block[(r, c)];
            }
        }
    }
    Ok(out)
}

/// 1 on visited cells, 0 elsewhere.
pub fn indicator(t: &Trajectory) -> ComplexGrid {
    induced_phase_matrix(t, 0.0)
}
