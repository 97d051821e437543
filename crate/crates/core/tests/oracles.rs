//! Estimators against independent oracles: exhaustive enumeration, direct
//! iid sums and long-run self-consistency.

use glwalk_core::estimators::{self, ks_distance, variance_batch_means, variance_series};
use glwalk_core::projective::invariance_test;
use glwalk_core::walk::run_vec_norm_batch;
use glwalk_core::{
    run_path, run_stationary_batch, BatchOptions, EnsembleSpec, ProjectivePoint, ScalarLaw, Seed, Stage, StationarySampler,
};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

const A: [f64; 4] = [2.0, 1.0, 1.0, 1.0];
const B: [f64; 4] = [1.0, 1.0, 1.0, 2.0];

fn two_atom() -> EnsembleSpec {
    EnsembleSpec::two_atom(2, A.to_vec(), B.to_vec())
}

/// log‖ε_n ⋯ ε_1 x‖ for all 2^n choices, each with weight 2^{−n}.
fn enumerate_two_atom(n: u32, x: [f64; 2]) -> Vec<f64> {
    (0..1u32 << n)
        .map(|bits| {
            let mut v = x;
            for k in 0..n {
                let m = if bits >> k & 1 == 0 { A } else { B };
                v = [m[0] * v[0] + m[1] * v[1], m[2] * v[0] + m[3] * v[1]];
            }
            v[0].hypot(v[1]).ln()
        })
        .collect()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// sup_t |F_a(t) − F_b(t)| over the merged jump points.
fn ecdf_distance(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn two_atom_mean_matches_enumeration() {
    let x = [0.6, 0.8];
    let exact = enumerate_two_atom(10, x);
    let exact_mean = exact.iter().sum::<f64>() / exact.len() as f64;
    let ens = two_atom().build().unwrap();
    let start = ProjectivePoint::new(&x).unwrap();
    let seed = Seed(21);
    let mc: Vec<f64> = (0..100_000)
        .map(|i| run_path(&ens, 10, &start, &mut seed.stream(Stage::Path, i), false).unwrap().log_vec_norm)
        .collect();
    let (m, sd) = mean_sd(&mc);
    let se = sd / (mc.len() as f64).sqrt();
    assert!((m - exact_mean).abs() < 4.0 * se, "mc {m} exact {exact_mean} se {se}");
}

#[test]
fn scalar_gauge_matches_direct_iid_sums() {
    let n = 1024;
    let paths = 4000;
    let law = ScalarLaw::TwoPoint { low: -1.0, high: 1.0, p_high: 0.5 };
    let sampler = StationarySampler::new(EnsembleSpec::scalar_gauge(2, law).build().unwrap(), 10).unwrap();
    let s = run_stationary_batch(&sampler, &[n], paths, Seed(5), &BatchOptions::default()).unwrap();
    let mut walk: Vec<f64> = s.column(glwalk_core::Observable::VecNorm, 0).iter().map(|v| v / (n as f64).sqrt()).collect();
    let mut rng = Xoshiro256StarStar::seed_from_u64(99);
    let mut direct: Vec<f64> = (0..paths)
        .map(|_| (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).sum::<f64>() / (n as f64).sqrt())
        .collect();
    let noise = 1.36 * (2.0 / paths as f64).sqrt();
    let d = ecdf_distance(&mut walk, &mut direct);
    assert!(d < 2.0 * noise, "sup difference {d}, combined noise {noise}");
}

#[test]
fn single_path_batch_equals_run_path() {
    let sampler = StationarySampler::new(two_atom().build().unwrap(), 30).unwrap();
    let seed = Seed(8);
    let s = run_stationary_batch(&sampler, &[37], 1, seed, &BatchOptions::default()).unwrap();
    let start = sampler.sample(&mut seed.stream(Stage::Start, 0)).unwrap();
    let r = run_path(sampler.ensemble(), 37, &start, &mut seed.stream(Stage::Path, 0), false).unwrap();
    assert_eq!(s.value(glwalk_core::Observable::VecNorm, 0, 0), r.log_vec_norm);
    assert_eq!(s.value(glwalk_core::Observable::MatNorm, 0, 0), r.log_mat_norm);
    assert_eq!(s.value(glwalk_core::Observable::SpecRadius, 0, 0), r.log_spec_radius);
}

#[test]
fn lyapunov_is_consistent_at_ten_times_the_length() {
    let sampler = StationarySampler::new(two_atom().build().unwrap(), 200).unwrap();
    let opts = BatchOptions::default();
    let short = estimators::lyapunov(&sampler, 10_000, 100, Seed(1), &opts).unwrap();
    let long = estimators::lyapunov(&sampler, 100_000, 30, Seed(2), &opts).unwrap();
    let se = short.se.hypot(long.se);
    assert!((short.value - long.value).abs() < 3.0 * se, "{short:?} {long:?}");
    assert!((short.increment_value - short.value).abs() < 3.0 * short.increment_se.hypot(short.se));
}

#[test]
fn scalar_lyapunov_is_the_mean() {
    let law = ScalarLaw::Uniform { low: 0.0, high: 0.6 };
    let sampler = StationarySampler::new(EnsembleSpec::scalar_gauge(3, law).build().unwrap(), 5).unwrap();
    let e = estimators::lyapunov(&sampler, 2000, 200, Seed(3), &BatchOptions::default()).unwrap();
    assert!((e.value - 0.3).abs() < 3.0 * e.se, "{e:?}");
}

#[test]
fn scalar_variance_both_methods() {
    let law = ScalarLaw::TwoPoint { low: 0.0, high: 1.0, p_high: 0.2 };
    let sampler = StationarySampler::new(EnsembleSpec::scalar_gauge(2, law.clone()).build().unwrap(), 5).unwrap();
    let opts = BatchOptions::default();
    let bm = variance_batch_means(&sampler, &[64, 128, 256, 512], 20_000, Seed(4), &opts).unwrap();
    let se = variance_series(&sampler, 4096, 300, law.mean(), 50, Seed(5), &opts).unwrap();
    for v in [&bm, &se] {
        assert!((v.value / law.variance() - 1.0).abs() < 0.05, "{v:?}");
        assert!(!v.degenerate);
    }
}

#[test]
fn two_atom_variance_methods_agree() {
    let sampler = StationarySampler::new(two_atom().build().unwrap(), 200).unwrap().with_pool(512, Seed(30)).unwrap();
    let opts = BatchOptions::default();
    let lam = estimators::lyapunov(&sampler, 20_000, 50, Seed(31), &opts).unwrap().value;
    let bm = variance_batch_means(&sampler, &[256, 512, 1024, 2048], 3000, Seed(32), &opts).unwrap();
    let se = variance_series(&sampler, 4096, 200, lam, 200, Seed(33), &opts).unwrap();
    assert!((bm.value - se.value).abs() < 3.0 * bm.se.hypot(se.se), "{} ± {} vs {} ± {}", bm.value, bm.se, se.value, se.se);
}

#[test]
fn skewed_scalar_distance_matches_iid_sum_distance() {
    let law = ScalarLaw::TwoPoint { low: 0.0, high: 1.0, p_high: 0.1 };
    let (mean, sd) = (law.mean(), law.variance().sqrt());
    let sampler = StationarySampler::new(EnsembleSpec::scalar_gauge(2, law).build().unwrap(), 5).unwrap();
    let grid = [16u64, 64];
    let paths = 20_000;
    let cols = run_vec_norm_batch(&sampler, &grid, paths, Seed(6), &BatchOptions::default()).unwrap();
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    let walk = ks_distance("vec_norm", &grid, &refs, mean, sd, Seed(6)).unwrap();
    let mut rng = Xoshiro256StarStar::seed_from_u64(17);
    for (i, &n) in grid.iter().enumerate() {
        let mut z: Vec<f64> = (0..paths)
            .map(|_| ((0..n).filter(|_| rng.random::<f64>() < 0.1).count() as f64 - n as f64 * mean) / (n as f64).sqrt())
            .collect();
        z.sort_by(f64::total_cmp);
        // direct sup over jump points against Φ(·/sd)
        let mut d = 0.0f64;
        for (k, &v) in z.iter().enumerate() {
            let f = 0.5 * statrs_free_erfc(-v / sd / std::f64::consts::SQRT_2);
            d = d.max((f - k as f64 / paths as f64).abs()).max(((k + 1) as f64 / paths as f64 - f).abs());
        }
        let ratio = walk.d_n[i] / d;
        assert!((0.5..=2.0).contains(&ratio), "n = {n}: walk {} direct {d}", walk.d_n[i]);
    }
}

/// erfc by the continued-fraction-free Chebyshev fit of Numerical Recipes
/// (relative error < 1.2e−7), independent of the library's Φ.
fn statrs_free_erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806 + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

#[test]
fn burn_in_passes_the_invariance_self_test() {
    let sampler = StationarySampler::new(EnsembleSpec::rot_diag_rot(2, 4.5, 1.0).build().unwrap(), 200).unwrap();
    let r = invariance_test(&sampler, 2000, 0.001, Seed(12)).unwrap();
    assert!(r.pass, "{r:?}");
    // one step from a fixed start leaves a two-point law, far from ν
    let short = StationarySampler::new(two_atom().build().unwrap(), 1).unwrap();
    let r = invariance_test(&short, 4000, 0.001, Seed(13)).unwrap();
    assert!(!r.pass, "{r:?}");
}

#[test]
fn gap_is_nonnegative_and_scalar_gap_vanishes() {
    let opts = BatchOptions::default();
    let sampler = StationarySampler::new(EnsembleSpec::rot_diag_rot(3, 3.5, 1.0).build().unwrap(), 100).unwrap();
    let r = estimators::bougerol_gap(&sampler, &[1, 10, 100], 50, 16, Seed(2), &opts).unwrap();
    assert!(r.min_gap.iter().all(|&g| g >= -1e-10), "{r:?}");
    let law = ScalarLaw::Normal { mean: 0.1, sd: 1.0 };
    let sampler = StationarySampler::new(EnsembleSpec::scalar_gauge(2, law).build().unwrap(), 5).unwrap();
    let r = estimators::bougerol_gap(&sampler, &[1, 10, 100], 20, 16, Seed(2), &opts).unwrap();
    assert!(r.max_gap.iter().chain(&r.min_gap).all(|&g| g.abs() < 1e-9), "{r:?}");
}
