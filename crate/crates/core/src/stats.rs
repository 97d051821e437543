//! Summary statistics, Kolmogorov distances and least-squares fits.

use statrs::function::erf::erfc;

use crate::rng::{RngStream, Seed, Stage};

/// Φ(x).
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Streaming mean and variance with an associative merge.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Moments::new();
        xs.iter().for_each(|&x| m.push(x));
        m
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance (0 below two observations).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.count == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// sup_y |F̂(y) − Φ(y/s)| for a sample, evaluated exactly at the jumps.
/// Sorts `xs` in place.
pub fn ks_gaussian(xs: &mut [f64], s: f64) -> f64 {
    xs.sort_unstable_by(f64::total_cmp);
    ks_gaussian_sorted(xs, s)
}

pub fn ks_gaussian_sorted(xs: &[f64], s: f64) -> f64 {
    ks_gaussian_detail(xs, s).0
}

/// The distance together with Φ at the point where it is attained.
pub fn ks_gaussian_detail(xs: &[f64], s: f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut at = 0.5;
    let mut i = 0;
    while i < xs.len() {
        // ties share one jump
        let mut j = i + 1;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        let f = normal_cdf(xs[i] / s);
        let local = (j as f64 / n - f).max(f - i as f64 / n);
        if local > d {
            d = local;
            at = f;
        }
        i = j;
    }
    (d, at)
}

/// Two-sample sup distance between empirical distribution functions.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample critical value c(α)·√((n+m)/(nm)).
pub fn ks_two_sample_critical(n: usize, m: usize, level: f64) -> f64 {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// sup_y |F̂(y) − F(y)| where F has the given atoms `(value, probability)`.
/// Sample values within `tol` (relative to 1 + |value|) of an atom count as
/// equal to it, so floating-point noise in independently computed atoms does
/// not create spurious jumps.
pub fn ks_discrete(samples: &[f64], atoms: &[(f64, f64)], tol: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    let mut a = atoms.to_vec();
    a.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    let n = s.len() as f64;
    let mut points: Vec<f64> = Vec::with_capacity(s.len() + a.len());
    points.extend(a.iter().map(|p| p.0));
    points.extend(s.iter().copied());
    points.sort_unstable_by(f64::total_cmp);
    let (mut i, mut j) = (0, 0);
    let mut cum = 0.0;
    let mut d = 0.0f64;
    let mut k = 0;
    while k < points.len() {
        let x = points[k];
        let hi = x + tol * (1.0 + x.abs());
        while k < points.len() && points[k] <= hi {
            k += 1;
        }
        while i < s.len() && s[i] <= hi {
            i += 1;
        }
        while j < a.len() && a[j].0 <= hi {
            cum += a[j].1;
            j += 1;
        }
        d = d.max((i as f64 / n - cum).abs());
    }
    d
}

/// Reference Monte Carlo noise level of an empirical distribution function.
pub fn mc_floor(paths: usize) -> f64 {
    1.36 / (paths as f64).sqrt()
}

/// Ordinary least squares y = intercept + slope·x.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Classical standard error of the slope (NaN with two points).
    pub slope_se: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len(), "ols needs paired data");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_se = if x.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    LineFit { slope, intercept, r2, slope_se }
}

/// Linear-interpolated empirical quantile of sorted data.
pub fn quantile_sorted(xs: &[f64], p: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of empty data");
    let h = p.clamp(0.0, 1.0) * (xs.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

/// Percentile bootstrap of the OLS slope with Gaussian noise of standard
/// deviation `sigma[i]` added to `y[i]` (parametric bootstrap).
pub fn bootstrap_slope_ci(x: &[f64], y: &[f64], sigma: &[f64], resamples: usize, level: f64, seed: Seed) -> (f64, f64) {
    let mut rng: RngStream = seed.stream(Stage::Bootstrap, 0);
    let mut slopes: Vec<f64> = (0..resamples)
        .map(|_| {
            let yb: Vec<f64> = y.iter().zip(sigma).map(|(yi, si)| yi + si * rng.normal()).collect();
            ols(x, &yb).slope
        })
        .collect();
    slopes.sort_unstable_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    (quantile_sorted(&slopes, alpha), quantile_sorted(&slopes, 1.0 - alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_relative_eq!(normal_cdf(1.959963984540054), 0.975, epsilon = 1e-10);
        assert_relative_eq!(normal_cdf(-1.0), 0.15865525393145707, epsilon = 1e-9);
    }

    #[test]
    fn ks_single_point() {
        // F̂ jumps 0 → 1 at 0, Φ(0) = 1/2
        assert_relative_eq!(ks_gaussian(&mut [0.0], 1.0), 0.5);
    }

    fn brute_force_ks(xs: &[f64], s: f64) -> f64 {
        let n = xs.len() as f64;
        let mut d = 0.0f64;
        let mut y = -8.0;
        while y <= 8.0 {
            let f = xs.iter().filter(|&&x| x <= y).count() as f64 / n;
            d = d.max((f - normal_cdf(y / s)).abs());
            y += 1e-4;
        }
        d
    }

    #[test]
    fn ks_jump_points_match_grid_sup() {
        let mut rng = Seed(4).stream(Stage::Oracle, 0);
        for _ in 0..3 {
            let mut xs: Vec<f64> = (0..40).map(|_| 1.3 * rng.normal() + 0.2).collect();
            let grid = brute_force_ks(&xs, 1.1);
            let exact = ks_gaussian(&mut xs, 1.1);
            assert!(exact >= grid - 1e-12);
            assert!(exact - grid < 1e-4, "{exact} vs {grid}");
        }
    }

    #[test]
    fn ks_gaussian_null_case() {
        let mut rng = Seed(5).stream(Stage::Oracle, 0);
        let n = 20_000;
        let mut xs: Vec<f64> = (0..n).map(|_| 0.7 * rng.normal()).collect();
        assert!(ks_gaussian(&mut xs, 0.7) < 1.5 * mc_floor(n));
    }

    #[test]
    fn two_sample_examples() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert_relative_eq!(ks_two_sample(&[1.0, 3.0], &[2.0, 4.0]), 0.5);
        assert_relative_eq!(ks_two_sample_critical(100, 100, 0.05), 1.3581015157552 * 0.02f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn discrete_examples() {
        let atoms = [(0.0, 0.5), (1.0, 0.5)];
        assert_eq!(ks_discrete(&[0.0, 1.0], &atoms, 1e-12), 0.0);
        assert_relative_eq!(ks_discrete(&[0.0, 0.0, 0.0, 1.0], &atoms, 1e-12), 0.25);
        assert_eq!(ks_discrete(&[1e-15, 1.0 - 1e-15], &atoms, 1e-12), 0.0);
        assert_relative_eq!(ks_discrete(&[0.5, 0.5], &atoms, 1e-12), 0.5);
    }

    #[test]
    fn ols_recovers_line() {
        let x: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = ols(&x, &y);
        assert_relative_eq!(f.slope, -0.5, epsilon = 1e-14);
        assert_relative_eq!(f.intercept, 2.0, epsilon = 1e-14);
        assert_relative_eq!(f.r2, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn bootstrap_ci_brackets_slope() {
        let x: Vec<f64> = (0..4).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + v).collect();
        let (lo, hi) = bootstrap_slope_ci(&x, &y, &[0.1; 4], 400, 0.95, Seed(1));
        assert!(lo < 1.0 && 1.0 < hi);
        assert!(hi - lo < 0.3);
    }

    proptest! {
        #[test]
        fn merge_matches_single_pass(xs in prop::collection::vec(-1e3f64..1e3, 2..60), cut in 0usize..60) {
            let cut = cut.min(xs.len());
            let mut a = Moments::from_slice(&xs[..cut]);
            a.merge(&Moments::from_slice(&xs[cut..]));
            let all = Moments::from_slice(&xs);
            prop_assert_eq!(a.count, all.count);
            prop_assert!((a.mean - all.mean).abs() <= 1e-9 * (1.0 + all.mean.abs()));
            prop_assert!((a.variance() - all.variance()).abs() <= 1e-8 * (1.0 + all.variance()));
        }

        #[test]
        fn ks_in_unit_interval(xs in prop::collection::vec(-10f64..10.0, 1..50), s in 0.1f64..5.0) {
            let mut v = xs.clone();
            let d = ks_gaussian(&mut v, s);
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn two_sample_symmetric(a in prop::collection::vec(-5f64..5.0, 1..30), b in prop::collection::vec(-5f64..5.0, 1..30)) {
            prop_assert_eq!(ks_two_sample(&a, &b), ks_two_sample(&b, &a));
        }
    }
}
