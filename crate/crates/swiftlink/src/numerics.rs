//! Dense complex grids and the unitary Fourier transforms used throughout.
//!
//! All 2D transforms are unitary: `dft2(X) = U X U` with
//! `U[m][k] = exp(-j 2π m k / N) / √N`, and `idft2` is its inverse.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::{Index, IndexMut};
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type ComplexVector = Vec<C64>;

pub const J: C64 = C64 { re: 0.0, im: 1.0 };

/// `exp(j θ)`.
#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

/// Row-major complex matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexGrid {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn square(n: usize) -> Self {
        Self::zeros(n, n)
    }

    pub fn filled(rows: usize, cols: usize, value: C64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} grid",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// `a bᵀ` (no conjugation).
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        Self::from_fn(a.len(), b.len(), |r, c| a[r] * b[c])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Side length of a square grid.
    pub fn n(&self) -> usize {
        debug_assert!(self.is_square());
        self.rows
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn require_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(Error::NotSquare { rows: self.rows, cols: self.cols })
        }
    }

    pub fn require_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows == other.rows && self.cols == other.cols {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )))
        }
    }

    pub fn fro_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn fro_norm(&self) -> f64 {
        self.fro_norm_sqr().sqrt()
    }

    /// `Σ self ⊙ conj(other)`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b.conj()).sum()
    }

    pub fn hadamard(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| f(z)).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other[(k, c)];
                }
            }
        }
        Ok(out)
    }

    /// `self · v`.
    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| self.data[r * self.cols..(r + 1) * self.cols].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `diag(left) · self · diag(right)`.
    pub fn scale_diag(&self, left: &[C64], right: &[C64]) -> Self {
        assert_eq!(left.len(), self.rows);
        assert_eq!(right.len(), self.cols);
        Self::from_fn(self.rows, self.cols, |r, c| left[r] * self[(r, c)] * right[c])
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Position of the largest-magnitude entry (first one on ties).
    pub fn argmax_abs(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, z) in self.data.iter().enumerate() {
            if z.norm_sqr() > self.data[best].norm_sqr() {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    /// Number of entries with magnitude above `tol`.
    pub fn count_nonzero(&self, tol: f64) -> usize {
        self.data.iter().filter(|z| z.norm() > tol).count()
    }

    /// Circularly shift so entry `(r, c)` moves to `(r + dr, c + dc)`.
    pub fn circshift2(&self, dr: usize, dc: usize) -> Self {
        Self::from_fn(self.rows, self.cols, |r, c| {
            self[((r + self.rows - dr % self.rows) % self.rows, (c + self.cols - dc % self.cols) % self.cols)]
        })
    }

    pub fn abs(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }
}

impl Index<(usize, usize)> for ComplexGrid {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexGrid {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Unnormalized in-place 2D FFT of a row-major `rows x cols` buffer.
pub(crate) fn fft2_raw(data: &mut [C64], rows: usize, cols: usize, inverse: bool) {
    let row_fft = plan(cols, inverse);
    for row in data.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let col_fft = plan(rows, inverse);
    let mut col = vec![C64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            col[r] = data[r * cols + c];
        }
        col_fft.process(&mut col);
        for r in 0..rows {
            data[r * cols + c] = col[r];
        }
    }
}

/// `U_N X U_N`.
pub fn dft2(x: &ComplexGrid) -> Result<ComplexGrid> {
    let n = x.require_square()?;
    let mut out = x.clone();
    fft2_raw(&mut out.data, n, n, false);
    let s = 1.0 / n as f64;
    out.data.iter_mut().for_each(|z| *z *= s);
    Ok(out)
}

/// `U*_N X U*_N`, the inverse of [`dft2`].
pub fn idft2(x: &ComplexGrid) -> Result<ComplexGrid> {
    let n = x.require_square()?;
    let mut out = x.clone();
    fft2_raw(&mut out.data, n, n, true);
    let s = 1.0 / n as f64;
    out.data.iter_mut().for_each(|z| *z *= s);
    Ok(out)
}

/// 2D circular convolution `(A ⊛ B)(p,q) = Σ A(m,k) B(p−m, q−k)`.
///
/// With the unitary transforms, `dft2(A ⊙ B) = circconv2(dft2(A), dft2(B)) / N`.
pub fn circconv2(a: &ComplexGrid, b: &ComplexGrid) -> Result<ComplexGrid> {
    a.require_same_shape(b)?;
    let (rows, cols) = (a.rows, a.cols);
    let mut fa = a.data.clone();
    let mut fb = b.data.clone();
    fft2_raw(&mut fa, rows, cols, false);
    fft2_raw(&mut fb, rows, cols, false);
    let s = 1.0 / (rows * cols) as f64;
    let mut prod: Vec<C64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    fft2_raw(&mut prod, rows, cols, true);
    prod.iter_mut().for_each(|z| *z *= s);
    Ok(ComplexGrid { rows, cols, data: prod })
}

/// `a_N(Δ) = [1, e^{jΔ}, …, e^{j(N−1)Δ}]`.
pub fn vandermonde(n: usize, delta: f64) -> ComplexVector {
    (0..n).map(|k| cis(delta * k as f64)).collect()
}

/// Unitary 1D DFT, `U_N v`.
pub fn dft(v: &[C64]) -> ComplexVector {
    let mut out = v.to_vec();
    plan(v.len(), false).process(&mut out);
    let s = 1.0 / (v.len() as f64).sqrt();
    out.iter_mut().for_each(|z| *z *= s);
    out
}

/// Unitary 1D inverse DFT, `U*_N v`.
pub fn idft(v: &[C64]) -> ComplexVector {
    let mut out = v.to_vec();
    plan(v.len(), true).process(&mut out);
    let s = 1.0 / (v.len() as f64).sqrt();
    out.iter_mut().for_each(|z| *z *= s);
    out
}

/// Zero-padded DFT of length `factor · len(g)`; bin `b` sits at `2πb / (factor·len(g))`.
pub fn oversampled_dft(g: &[C64], factor: usize) -> Result<ComplexVector> {
    if g.is_empty() {
        return Err(Error::Empty("oversampled_dft input"));
    }
    if factor == 0 {
        return Err(Error::InvalidArgument("oversampling factor must be >= 1".into()));
    }
    let mut buf = vec![C64::new(0.0, 0.0); g.len() * factor];
    buf[..g.len()].copy_from_slice(g);
    plan(buf.len(), false).process(&mut buf);
    Ok(buf)
}

/// Dense unitary DFT matrix, mostly for cross-checks.
pub fn dft_matrix(n: usize) -> ComplexGrid {
    let s = 1.0 / (n as f64).sqrt();
    ComplexGrid::from_fn(n, n, |m, k| cis(-2.0 * PI * ((m * k) % n) as f64 / n as f64) * s)
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Σ a ⊙ conj(b)`.
pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// Wrap an angle into `(−half, half]` with period `2·half`.
pub fn wrap(x: f64, half: f64) -> f64 {
    let p = 2.0 * half;
    let mut w = (x + half).rem_euclid(p) - half;
    if w <= -half {
        w += p;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(n: usize, rng: &mut impl Rng) -> ComplexGrid {
        ComplexGrid::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn e(n: usize, r: usize, c: usize) -> ComplexGrid {
        let mut g = ComplexGrid::square(n);
        g[(r, c)] = C64::new(1.0, 0.0);
        g
    }

    #[test]
    fn dc_impulse_transforms_to_flat() {
        let x = dft2(&e(4, 0, 0)).unwrap();
        for z in x.as_slice() {
            assert!((z - C64::new(0.25, 0.0)).norm() < 1e-15);
        }
        let back = idft2(&ComplexGrid::filled(4, 4, C64::new(0.25, 0.0))).unwrap();
        assert!(back.max_abs_diff(&e(4, 0, 0)) < 1e-15);
    }

    #[test]
    fn idft2_of_two_by_two_impulse() {
        let out = idft2(&e(2, 0, 0)).unwrap();
        let want = ComplexGrid::filled(2, 2, C64::new(0.5, 0.0));
        assert!(out.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn dft2_matches_matrix_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_grid(8, &mut rng);
        let u = dft_matrix(8);
        let oracle = u.matmul(&x).unwrap().matmul(&u).unwrap();
        assert!(dft2(&x).unwrap().max_abs_diff(&oracle) < 1e-12);
        let uc = u.conj();
        let oracle = uc.matmul(&x).unwrap().matmul(&uc).unwrap();
        assert!(idft2(&x).unwrap().max_abs_diff(&oracle) < 1e-12);
    }

    #[test]
    fn round_trip_n32() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_grid(32, &mut rng);
        let y = dft2(&idft2(&x).unwrap()).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-12);
        assert!((dft2(&x).unwrap().fro_norm() - x.fro_norm()).abs() < 1e-12);
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(dft2(&ComplexGrid::zeros(2, 3)), Err(Error::NotSquare { .. })));
        assert!(idft2(&ComplexGrid::zeros(3, 2)).is_err());
        assert!(circconv2(&ComplexGrid::zeros(2, 2), &ComplexGrid::zeros(3, 3)).is_err());
    }

    #[test]
    fn circconv_identity_and_delta_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_grid(6, &mut rng);
        assert!(circconv2(&x, &e(6, 0, 0)).unwrap().max_abs_diff(&x) < 1e-12);
        let out = circconv2(&e(5, 0, 1), &e(5, 1, 0)).unwrap();
        assert!(out.max_abs_diff(&e(5, 1, 1)) < 1e-12);
    }

    fn brute_conv(a: &ComplexGrid, b: &ComplexGrid) -> ComplexGrid {
        let n = a.n();
        ComplexGrid::from_fn(n, n, |p, q| {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..n {
                for k in 0..n {
                    acc += a[(m, k)] * b[((p + n - m) % n, (q + n - k) % n)];
                }
            }
            acc
        })
    }

    #[test]
    fn convolution_duality_against_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 8;
        let a = random_grid(n, &mut rng);
        let b = random_grid(n, &mut rng);
        let lhs = dft2(&a.hadamard(&b)).unwrap();
        let conv = brute_conv(&dft2(&a).unwrap(), &dft2(&b).unwrap());
        assert!(circconv2(&dft2(&a).unwrap(), &dft2(&b).unwrap()).unwrap().max_abs_diff(&conv) < 1e-10);
        assert!(lhs.max_abs_diff(&conv.scale(C64::new(1.0 / n as f64, 0.0))) < 1e-10);
    }

    #[test]
    fn vandermonde_examples() {
        assert_eq!(vandermonde(4, 0.0), vec![C64::new(1.0, 0.0); 4]);
        let v = vandermonde(2, PI);
        assert!((v[1] - C64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!(vandermonde(9, 1.234).iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn oversampled_dft_examples() {
        let g = vec![C64::new(1.0, 0.0); 4];
        let f = oversampled_dft(&g, 2).unwrap();
        assert_eq!(f.len(), 8);
        let best = (0..8).max_by(|&a, &b| f[a].norm().total_cmp(&f[b].norm())).unwrap();
        assert_eq!(best, 0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g: Vec<C64> = (0..5).map(|_| C64::new(rng.random(), rng.random())).collect();
        let f1 = oversampled_dft(&g, 1).unwrap();
        let direct: Vec<C64> = (0..5)
            .map(|b| (0..5).map(|k| g[k] * cis(-2.0 * PI * (b * k) as f64 / 5.0)).sum())
            .collect();
        for (a, b) in f1.iter().zip(&direct) {
            assert!((a - b).norm() < 1e-12);
        }

        let tone: Vec<C64> = (0..16).map(|k| cis(2.0 * PI * k as f64 * 3.0 / 32.0)).collect();
        let f = oversampled_dft(&tone, 2).unwrap();
        let best = (0..32).max_by(|&a, &b| f[a].norm().total_cmp(&f[b].norm())).unwrap();
        assert_eq!(best, 3);

        assert!(oversampled_dft(&[], 2).is_err());
    }

    #[test]
    fn shift_theorem_on_integer_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 8;
        let x = random_grid(n, &mut rng);
        let (p, q) = (3, 5);
        let w = ComplexGrid::outer(
            &vandermonde(n, 2.0 * PI * p as f64 / n as f64),
            &vandermonde(n, 2.0 * PI * q as f64 / n as f64),
        );
        let lhs = dft2(&x.hadamard(&w)).unwrap();
        let rhs = dft2(&x).unwrap().circshift2(p, q);
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn wrap_into_half_open_interval() {
        assert!((wrap(3.0 * PI / 2.0, PI) + PI / 2.0).abs() < 1e-15);
        assert!((wrap(PI, PI) - PI).abs() < 1e-15);
        assert!((wrap(-PI, PI) - PI).abs() < 1e-15);
        assert!((wrap(0.7, PI / 2.0) - 0.7).abs() < 1e-15);
    }
}
