//! Property tests for the module invariants.

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swiftlink::baselines_metrics::{achievable_rate, exhaustive_scan, extract_beams};
use swiftlink::channel::{
    beamspace, channel_from_virtual, complex_gaussian, masked_beamspace, random_channel, random_sparse_beamspace,
    virtual_channel, GridMode, Normalization,
};
use swiftlink::harness::{ExperimentConfig, Method};
use swiftlink::measurement::{measure_trajectory, measure_trajectory_direct, scatter};
use swiftlink::numerics::{circconv2, cis, dft, dft2, vandermonde, ComplexGrid, C64};
use swiftlink::recovery::{omp, recover_masked_beamspace, PartialDft2};
use swiftlink::ripcheck::{sampled_energy, t_xy};
use swiftlink::sequences::{quantize_phases, spectral_mask, zc};
use swiftlink::swiftlink::{compensate_and_combine, run_type1, SwiftLinkParams};
use swiftlink::trajectories::{contour, p_cnt, p_trajectory, row_trajectory, type1, ContourDistribution};

fn random_grid(n: usize, rng: &mut ChaCha8Rng) -> ComplexGrid {
    ComplexGrid::from_fn(n, n, |_, _| complex_gaussian(rng))
}

fn coprime_root(n: usize, u: i64) -> i64 {
    let mut u = u.max(1);
    while gcd(u as usize, n) != 1 {
        u += 1;
    }
    u
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dft2_is_unitary(n in 1usize..=64, seed in any::<u64>()) {
        let x = random_grid(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let y = dft2(&x).unwrap();
        prop_assert!((y.fro_norm() / x.fro_norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn product_transforms_to_convolution(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_grid(8, &mut r), random_grid(8, &mut r));
        let lhs = dft2(&a.hadamard(&b)).unwrap();
        let rhs = circconv2(&dft2(&a).unwrap(), &dft2(&b).unwrap()).unwrap().scale(C64::new(1.0 / 8.0, 0.0));
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn modulation_shifts_the_spectrum(n in 2usize..=32, p in 0usize..32, q in 0usize..32, seed in any::<u64>()) {
        let (p, q) = (p % n, q % n);
        let x = random_grid(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let w = 2.0 * PI / n as f64;
        let m = ComplexGrid::outer(&vandermonde(n, w * p as f64), &vandermonde(n, w * q as f64));
        let shifted = dft2(&x.hadamard(&m)).unwrap();
        let base = dft2(&x).unwrap();
        // The forward DFT uses e^{-j...}, so modulating by +p moves bin k to k + p.
        let expect = ComplexGrid::from_fn(n, n, |r, c| base[((r + n - p) % n, (c + n - q) % n)]);
        prop_assert!(shifted.max_abs_diff(&expect) < 1e-10);
    }

    #[test]
    fn zc_has_zero_autocorrelation_and_flat_spectrum(n in 2usize..=64, u in 1i64..64) {
        let z = zc(n, coprime_root(n, u)).unwrap();
        let e = z.entries();
        for lag in 1..n {
            let ac: C64 = (0..n).map(|k| e[k] * e[(k + lag) % n].conj()).sum();
            prop_assert!(ac.norm() < 1e-10);
        }
        let f = dft(e);
        prop_assert!(f.iter().all(|v| (v.norm() - 1.0 / (n as f64).sqrt()).abs() < 1e-10));
    }

    #[test]
    fn quantization_is_idempotent(bits in 1u32..=6, seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<C64> = (0..16).map(|_| complex_gaussian(&mut r)).collect();
        let once = quantize_phases(&v, bits);
        let twice = quantize_phases(&once, bits);
        prop_assert!(once.iter().zip(&twice).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn transform_chain_preserves_norm(n in 2usize..=32, seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let h = random_grid(n, &mut r);
        let mask = spectral_mask(&zc(n, 1).unwrap());
        let x = beamspace(&h).unwrap();
        let s = masked_beamspace(&x, &mask).unwrap();
        let g = virtual_channel(&h, &mask).unwrap();
        let e = h.fro_norm();
        for m in [x.fro_norm(), s.fro_norm(), g.fro_norm()] {
            prop_assert!((m / e - 1.0).abs() < 1e-10);
        }
        prop_assert!(channel_from_virtual(&g, &mask).unwrap().max_abs_diff(&h) < 1e-10 * e.max(1.0));
    }

    #[test]
    fn on_grid_beamspace_has_k_nonzeros(n in 4usize..=16, k in 1usize..=6, seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let h = random_sparse_beamspace(n, k, GridMode::On, &mut r).unwrap().equivalent_narrowband();
        prop_assert_eq!(beamspace(&h).unwrap().count_nonzero(1e-9), k);
    }

    #[test]
    fn contours_partition_the_grid(n in 1usize..=40) {
        let total: usize = (0..2 * n - 1).map(|k| contour(k, n).unwrap().len()).sum();
        prop_assert_eq!(total, n * n);
    }

    #[test]
    fn p_trajectories_follow_contours(n in 2usize..=32, frac in 0.0f64..1.0, seed in any::<u64>(), binomial in any::<bool>()) {
        let m = 1 + ((2 * n - 2) as f64 * frac) as usize;
        let dist = if binomial { ContourDistribution::Binomial } else { ContourDistribution::Uniform };
        let t = p_trajectory(n, m, dist, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let p0 = t.start_contour.unwrap();
        prop_assert!(t.steps.iter().enumerate().all(|(i, &(r, c))| r + c == p0 + i && r < n && c < n));
    }

    #[test]
    fn contour_phase_spectrum_peaks_next_to_the_shift(n in 4usize..=32, frac in 0.01f64..0.99) {
        let eps = frac * PI / n as f64;
        let s = dft2(&p_cnt(n, eps)).unwrap();
        let (r, c) = s.argmax_abs();
        // Within one bin of (Nε/2π, Nε/2π) ∈ (0, 1/2) on both axes.
        prop_assert!(r <= 1 && c <= 1, "peak at ({}, {})", r, c);
    }

    #[test]
    fn projection_path_matches_virtual_path(n in 2usize..=16, seed in any::<u64>(), eps in -1.0f64..1.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let h = random_grid(n, &mut r);
        let z = zc(n, 1).unwrap();
        let t = row_trajectory(n);
        let a = measure_trajectory(&h, &t, &z, eps, 0.0, &mut r).unwrap().y;
        let b = measure_trajectory_direct(&h, &t, &z, eps, 0.0, &mut r).unwrap().y;
        prop_assert!(a.iter().zip(&b).all(|(u, v)| (u - v).norm() < 1e-10));
    }

    #[test]
    fn measurement_is_linear_in_the_channel(seed in any::<u64>(), alpha in -2.0f64..2.0) {
        let n = 8;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (h1, h2) = (random_grid(n, &mut r), random_grid(n, &mut r));
        let z = zc(n, 3).unwrap();
        let t = type1(n, 20, ContourDistribution::Uniform, &mut r).unwrap();
        let sum = h1.scale(C64::new(alpha, 0.0)).add(&h2);
        let y = |h: &ComplexGrid, r: &mut ChaCha8Rng| measure_trajectory(h, &t, &z, 0.2, 0.0, r).unwrap().y;
        let (a, b, c) = (y(&h1, &mut r), y(&h2, &mut r), y(&sum, &mut r));
        prop_assert!(a.iter().zip(&b).zip(&c).all(|((a, b), c)| (a * alpha + b - c).norm() < 1e-10));
    }

    #[test]
    fn full_sampling_recovery_is_the_inverse_transform(n in 2usize..=8, seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let g = random_grid(n, &mut r);
        let t = row_trajectory(n);
        let y: Vec<C64> = t.steps.iter().map(|&rc| g[rc]).collect();
        let est = recover_masked_beamspace(&y, &t, n * n, 0.0).unwrap();
        let direct = dft2(&scatter(&y, &t)).unwrap();
        prop_assert!(est.s_hat.max_abs_diff(&direct) < 1e-10 * g.fro_norm());
    }

    #[test]
    fn omp_residual_never_increases(seed in any::<u64>(), m in 15usize..40) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let t = p_trajectory(n, 15, ContourDistribution::Uniform, &mut r).unwrap();
        let mut steps = t.steps.clone();
        while steps.len() < m {
            steps.push((steps.len() % n, (3 * steps.len()) % n));
        }
        let dict = PartialDft2::new(n, steps);
        let y: Vec<C64> = (0..m).map(|_| complex_gaussian(&mut r)).collect();
        let res = omp(&dict, &y, m.min(12), 0.0).unwrap();
        prop_assert!(res.residual_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn combining_is_constructive(n in 2usize..=16, seed in any::<u64>(), eps in -0.5f64..0.5) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (gp, gn) = (random_grid(n, &mut r), random_grid(n, &mut r));
        let (m, _) = compensate_and_combine(&gp, &gn, eps).unwrap();
        let mp = gp.hadamard(&p_cnt(n, -eps));
        let mn = gn.hadamard(&p_cnt(n, eps));
        prop_assert!(m.fro_norm_sqr() >= mp.fro_norm_sqr() + mn.fro_norm_sqr() - 1e-9);
    }

    #[test]
    fn exhaustive_scan_ignores_cfo(seed in any::<u64>(), eps in -3.0f64..3.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let h = random_grid(8, &mut r);
        let a = exhaustive_scan(&h, 0.0, 0.5, &mut ChaCha8Rng::seed_from_u64(seed ^ 1)).unwrap();
        let b = exhaustive_scan(&h, eps, 0.5, &mut ChaCha8Rng::seed_from_u64(seed ^ 1)).unwrap();
        prop_assert_eq!(a.best, b.best);
        prop_assert!(a.y.iter().zip(&b.y).all(|(u, v)| (u.norm() - v.norm()).abs() < 1e-12 * v.norm().max(1.0)));
    }

    #[test]
    fn t_recursion_matches_enumeration(n in 3usize..=20, x in -PI..PI, y in -PI..PI) {
        for k in 0..n - 1 {
            let t = t_xy(k, x, y, n, ContourDistribution::Uniform).unwrap();
            let next = t_xy(k + 1, x, y, n, ContourDistribution::Uniform).unwrap();
            let kf = k as f64;
            let rec = cis(x) * t * (kf + 1.0) / (kf + 2.0) + cis((kf + 1.0) * y) / (kf + 2.0);
            prop_assert!((next - rec).norm() < 1e-12);
        }
    }

    #[test]
    fn sampled_energy_splits_into_norm_and_cross_term(seed in any::<u64>(), a in (0usize..16, 0usize..16), b in (0usize..16, 0usize..16)) {
        prop_assume!(a != b);
        let n = 16;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ComplexGrid::square(n);
        s[a] = complex_gaussian(&mut r);
        s[b] = complex_gaussian(&mut r);
        let t = p_trajectory(n, 31, ContourDistribution::Uniform, &mut r).unwrap();
        let w = 2.0 * PI / n as f64;
        let (dx, dy) = (a.0 as f64 - b.0 as f64, a.1 as f64 - b.1 as f64);
        let cross: C64 = t.steps.iter().map(|&(rr, cc)| cis(w * (dx * rr as f64 + dy * cc as f64))).sum();
        let want = s.fro_norm_sqr() + 2.0 * (s[a] * s[b].conj() * cross).re / t.len() as f64;
        prop_assert!((sampled_energy(&s, &t.steps) - want).abs() < 1e-10);
    }

    #[test]
    fn config_validation_enforces_limits(n in 4usize..=32, extra in 1usize..10, over in any::<bool>()) {
        let mut c = ExperimentConfig { n, m: 2 * (2 * n - 1) + 2 * extra, ..ExperimentConfig::default() };
        c.methods = vec![Method::SwiftlinkT1];
        prop_assert!(c.validate().is_err());
        c.m = 2 * (2 * n - 1);
        c.validate().unwrap();
        c.cfo_ppm = Vec::new();
        c.cfo_hz = vec![1.2e6];
        c.override_range = over;
        prop_assert_eq!(c.validate().is_ok(), over);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn global_phase_rotates_the_estimate(seed in any::<u64>(), theta in -PI..PI, eps in -1.0f64..1.0) {
        let n = 8;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let h = random_sparse_beamspace(n, 2, GridMode::On, &mut r).unwrap().equivalent_narrowband();
        let z = zc(n, 3).unwrap();
        let t = type1(n, 2 * (2 * n - 1), ContourDistribution::Uniform, &mut r).unwrap();
        let y = measure_trajectory(&h, &t, &z, eps, 0.0, &mut r).unwrap().y;
        let yr: Vec<C64> = y.iter().map(|v| v * cis(theta)).collect();
        let p = SwiftLinkParams::new(4, 0.0);
        let (a, b) = (run_type1(&y, &t, &z, &p).unwrap(), run_type1(&yr, &t, &z, &p).unwrap());
        // The golden-section search resolves ε̂ to about 1e-8 on a flat minimum.
        prop_assert!((a.epsilon_hat.abs() - b.epsilon_hat.abs()).abs() < 1e-7, "{} vs {} (true {})", a.epsilon_hat, b.epsilon_hat, eps);
        prop_assert!((a.h_hat.fro_norm() - b.h_hat.fro_norm()).abs() < 1e-6 * a.h_hat.fro_norm());
        prop_assert!(a.h_hat.scale(cis(theta)).max_abs_diff(&b.h_hat) < 1e-6 * a.h_hat.fro_norm());
    }

    #[test]
    fn exact_recovery_matches_true_channel_rate(seed in any::<u64>()) {
        let n = 8;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let ch = random_channel(n, 2, 1, GridMode::On, Normalization::PerRealization, &mut r).unwrap();
        let h = ch.equivalent_narrowband();
        let z = zc(n, 3).unwrap();
        let t = type1(n, 2 * (2 * n - 1), ContourDistribution::Uniform, &mut r).unwrap();
        let y = measure_trajectory(&h, &t, &z, 0.3, 0.0, &mut r).unwrap().y;
        let est = run_type1(&y, &t, &z, &SwiftLinkParams::new(4, 0.0)).unwrap();
        prop_assume!(swiftlink::baselines_metrics::nmse_linear(&h, &est.h_hat) < 1e-10);
        // Near-equal path gains make the dominant singular vector ill-defined.
        let sv = nalgebra::DMatrix::from_row_slice(n, n, h.as_slice()).singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(sv[0] > 1.2 * sv[1]);
        // Unquantized: phase quantization is not invariant to the estimate's global phase.
        let ideal = achievable_rate(&ch, &extract_beams(&h, None).unwrap(), 1.0, 64).unwrap();
        let got = achievable_rate(&ch, &extract_beams(&est.h_hat, None).unwrap(), 1.0, 64).unwrap();
        prop_assert!((got - ideal).abs() < 1e-6 * ideal.max(1.0), "estimated {} vs true {}", got, ideal);
    }
}
