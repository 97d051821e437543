//! Lyapunov exponent, asymptotic variance, Kolmogorov distances to the
//! Gaussian limit and rate fits.

use rayon::prelude::*;

use crate::ensemble::GroupElement;
use crate::error::{Error, Result};
use crate::projective::{spread_directions, ProjectivePoint, StationarySampler};
use crate::rng::{Seed, Stage};
use crate::stats::{self, Moments};
use crate::walk::{check_budget, run_path_checkpoints, run_vec_norm_batch, with_workers, BatchOptions, Observable, SampleMatrix, WalkAccumulator};

/// λ̂ from log‖A_n x‖/n, together with the increment average after a burn-in.
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub se: f64,
    pub n: u64,
    pub paths: usize,
    pub burn: u64,
    /// (log‖A_n x‖ − log‖A_b x‖)/(n − b) averaged over paths.
    pub increment_value: f64,
    pub increment_se: f64,
}

pub fn lyapunov(sampler: &StationarySampler, n: u64, paths: usize, seed: Seed, opts: &BatchOptions) -> Result<LyapunovEstimate> {
    if n < 2 || paths < 2 {
        return Err(Error::InvalidArgument(format!("lyapunov needs n >= 2 and paths >= 2, got {n}, {paths}")));
    }
    let burn = (sampler.burn_in() as u64).min(n / 2).max(1);
    let cols = run_vec_norm_batch(sampler, &[burn, n], paths, seed.derive(Stage::Lyapunov, 0), opts)?;
    let whole: Vec<f64> = cols[1].iter().map(|v| v / n as f64).collect();
    let tail: Vec<f64> = cols[1].iter().zip(&cols[0]).map(|(a, b)| (a - b) / (n - burn) as f64).collect();
    let (w, t) = (Moments::from_slice(&whole), Moments::from_slice(&tail));
    Ok(LyapunovEstimate {
        value: w.mean,
        se: w.se(),
        n,
        paths,
        burn,
        increment_value: t.mean,
        increment_se: t.se(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceMethod {
    BatchMeans,
    CovarianceSeries,
}

impl VarianceMethod {
    pub fn name(self) -> &'static str {
        match self {
            VarianceMethod::BatchMeans => "batch_means",
            VarianceMethod::CovarianceSeries => "covariance_series",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceEstimate {
    pub method: VarianceMethod,
    pub value: f64,
    pub se: f64,
    /// Lags 1..L−1 enter the series; L is the first lag found insignificant.
    pub truncation_lag: Option<usize>,
    /// Set when value ≤ 3·se.
    pub degenerate: bool,
    /// Per-n Var(S_n)/n for batch means, per-lag covariances for the series.
    pub profile: Vec<(f64, f64, f64)>,
}

impl VarianceEstimate {
    fn new(method: VarianceMethod, value: f64, se: f64, truncation_lag: Option<usize>, profile: Vec<(f64, f64, f64)>) -> Self {
        let value = value.max(0.0);
        VarianceEstimate { method, value, se, truncation_lag, degenerate: !(value > 3.0 * se), profile }
    }

    pub fn s_hat(&self) -> f64 {
        self.value.sqrt()
    }
}

/// Default batch-means grid 2⁸..2¹³.
pub fn default_batch_grid() -> Vec<u64> {
    (8..=13).map(|k| 1u64 << k).collect()
}

/// Var(S_n)/n per grid point from columns of log‖A_n x‖; the estimate is
/// the average over the two largest n.
pub fn batch_means_from_columns(n_grid: &[u64], columns: &[Vec<f64>]) -> Result<VarianceEstimate> {
    if n_grid.len() < 2 || n_grid.len() != columns.len() {
        return Err(Error::InsufficientGrid("batch means needs at least two grid points with data".into()));
    }
    let mut profile = Vec::with_capacity(n_grid.len());
    for (&n, col) in n_grid.iter().zip(columns) {
        let m = Moments::from_slice(col);
        let v = m.variance();
        let p = col.len() as f64;
        let m4 = col.iter().map(|x| (x - m.mean).powi(4)).sum::<f64>() / p;
        let se = ((m4 - v * v).max(0.0) / p).sqrt() / n as f64;
        profile.push((n as f64, v / n as f64, se));
    }
    let top = &profile[profile.len() - 2..];
    let value = (top[0].1 + top[1].1) / 2.0;
    // the two columns share paths, so their errors are not averaged down
    let se = (top[0].2 + top[1].2) / 2.0;
    Ok(VarianceEstimate::new(VarianceMethod::BatchMeans, value, se, None, profile))
}

pub fn variance_batch_means(sampler: &StationarySampler, n_grid: &[u64], paths: usize, seed: Seed, opts: &BatchOptions) -> Result<VarianceEstimate> {
    if paths < 2 {
        return Err(Error::InvalidArgument("variance needs paths >= 2".into()));
    }
    let cols = run_vec_norm_batch(sampler, n_grid, paths, seed.derive(Stage::Variance, 0), opts)?;
    batch_means_from_columns(n_grid, &cols)
}

/// Lag cap of the covariance series.
pub const MAX_SERIES_LAG: usize = 200;

/// s² = E X₁² + 2 Σ_{l≥1} E X₁X_{1+l} from stationary paths of length
/// `length`, with covariances pooled over time within each path.
pub fn variance_series(
    sampler: &StationarySampler,
    length: usize,
    paths: usize,
    lambda_hat: f64,
    max_lag: usize,
    seed: Seed,
    opts: &BatchOptions,
) -> Result<VarianceEstimate> {
    let max_lag = max_lag.min(MAX_SERIES_LAG);
    if paths < 2 || length < 2 * max_lag + 2 {
        return Err(Error::InvalidArgument(format!("series method needs paths >= 2 and length >= {}", 2 * max_lag + 2)));
    }
    let burn = if sampler.pool().is_some() { 0 } else { sampler.burn_in() };
    check_budget(paths as u128 * (length + burn) as u128, opts.step_budget)?;
    let ens = sampler.ensemble();
    let s = seed.derive(Stage::Variance, 1);
    let acov: Result<Vec<Vec<f64>>> = with_workers(opts.workers, || {
        (0..paths)
            .into_par_iter()
            .map(|i| {
                let start = sampler.sample(&mut s.stream(Stage::Start, i as u64))?;
                let r = run_path_checkpoints(ens, &[length as u64], &start, &mut s.stream(Stage::Path, i as u64), true)?;
                let x: Vec<f64> = r[0].increments.as_ref().expect("recorded").iter().map(|v| v - lambda_hat).collect();
                Ok((0..=max_lag)
                    .map(|l| x[..length - l].iter().zip(&x[l..]).map(|(a, b)| a * b).sum::<f64>() / (length - l) as f64)
                    .collect())
            })
            .collect()
    })?;
    let acov = acov?;
    let lag_stats: Vec<Moments> = (0..=max_lag).map(|l| Moments::from_slice(&acov.iter().map(|a| a[l]).collect::<Vec<_>>())).collect();
    let lag = (1..=max_lag).find(|&l| lag_stats[l].mean.abs() < 2.0 * lag_stats[l].se()).unwrap_or(max_lag);
    let per_path: Vec<f64> = acov.iter().map(|a| a[0] + 2.0 * a[1..lag].iter().sum::<f64>()).collect();
    let m = Moments::from_slice(&per_path);
    let profile = lag_stats.iter().enumerate().map(|(l, s)| (l as f64, s.mean, s.se())).collect();
    Ok(VarianceEstimate::new(VarianceMethod::CovarianceSeries, m.mean, m.se(), Some(lag), profile))
}

/// Empirical Kolmogorov distances per n.
#[derive(Clone, Debug, PartialEq)]
pub struct KolmogorovReport {
    pub observable: String,
    pub n_grid: Vec<u64>,
    pub d_n: Vec<f64>,
    /// sqrt(F(1 − F)/paths) at the maximizing point: the Monte Carlo
    /// standard error of D_n.
    pub se: Vec<f64>,
    pub paths: usize,
    pub mc_floor: f64,
    pub lambda_hat: f64,
    pub s_hat: f64,
    pub seed: u64,
}

fn check_s_hat(s_hat: f64) -> Result<()> {
    if !(s_hat > 0.0 && s_hat.is_finite()) {
        return Err(Error::DegenerateVariance(format!("s_hat = {s_hat} cannot scale a Gaussian reference")));
    }
    Ok(())
}

/// D_n = sup_y |F̂_n(y√n) − Φ(y/ŝ)| for each column, centering values as
/// (v − nλ̂)/√n.
pub fn ks_distance(
    observable: &str,
    n_grid: &[u64],
    columns: &[&[f64]],
    lambda_hat: f64,
    s_hat: f64,
    seed: Seed,
) -> Result<KolmogorovReport> {
    check_s_hat(s_hat)?;
    if n_grid.is_empty() || n_grid.len() != columns.len() {
        return Err(Error::InvalidArgument("one column per grid point is required".into()));
    }
    let paths = columns[0].len();
    if paths == 0 || columns.iter().any(|c| c.len() != paths) {
        return Err(Error::InvalidArgument("columns must be non-empty and of equal length".into()));
    }
    let mut d_n = Vec::with_capacity(n_grid.len());
    let mut se = Vec::with_capacity(n_grid.len());
    for (&n, col) in n_grid.iter().zip(columns) {
        let rt = (n as f64).sqrt();
        let mut z: Vec<f64> = col.iter().map(|v| (v - n as f64 * lambda_hat) / rt).collect();
        z.sort_unstable_by(f64::total_cmp);
        let (d, f) = stats::ks_gaussian_detail(&z, s_hat);
        d_n.push(d);
        se.push((f * (1.0 - f) / paths as f64).sqrt());
    }
    Ok(KolmogorovReport {
        observable: observable.into(),
        n_grid: n_grid.to_vec(),
        d_n,
        se,
        paths,
        mc_floor: stats::mc_floor(paths),
        lambda_hat,
        s_hat,
        seed: seed.0,
    })
}

pub fn ks_distance_samples(samples: &SampleMatrix, obs: Observable, lambda_hat: f64, s_hat: f64, seed: Seed) -> Result<KolmogorovReport> {
    let cols: Vec<&[f64]> = (0..samples.n_grid.len()).map(|i| samples.column(obs, i)).collect();
    ks_distance(obs.name(), &samples.n_grid, &cols, lambda_hat, s_hat, seed)
}

/// Number of ν̂ starts and of spread directions in the worst-start set.
pub const WORST_START_NU: usize = 8;
pub const WORST_START_SPREAD: usize = 8;

/// The 16 starts: 8 draws from ν̂ followed by 8 spread directions.
pub fn worst_start_set(sampler: &StationarySampler, seed: Seed) -> Result<Vec<ProjectivePoint>> {
    let mut rng = seed.stream(Stage::Start, u64::MAX);
    let mut starts = (0..WORST_START_NU).map(|_| sampler.draw(&mut rng)).collect::<Result<Vec<_>>>()?;
    starts.extend(spread_directions(sampler.ensemble().dim(), WORST_START_SPREAD));
    Ok(starts)
}

/// D_n maximized over the worst-start set, `paths` paths per start. Also
/// returns the per-start reports.
#[allow(clippy::too_many_arguments)]
pub fn ks_worst_start(
    sampler: &StationarySampler,
    n_grid: &[u64],
    paths: usize,
    lambda_hat: f64,
    s_hat: f64,
    seed: Seed,
    opts: &BatchOptions,
) -> Result<(KolmogorovReport, Vec<KolmogorovReport>)> {
    check_s_hat(s_hat)?;
    let starts = worst_start_set(sampler, seed)?;
    let last = *n_grid.last().ok_or_else(|| Error::InvalidArgument("empty n_grid".into()))?;
    check_budget((starts.len() * paths) as u128 * last as u128, opts.step_budget)?;
    let mut per_start = Vec::with_capacity(starts.len());
    for (j, x) in starts.into_iter().enumerate() {
        let fixed = StationarySampler::fixed(sampler.ensemble().clone(), x)?;
        let s = seed.derive(Stage::Path, j as u64);
        let cols = run_vec_norm_batch(&fixed, n_grid, paths, s, opts)?;
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        per_start.push(ks_distance(Observable::VecNorm.name(), n_grid, &refs, lambda_hat, s_hat, s)?);
    }
    let mut worst = per_start[0].clone();
    worst.observable = "vec_norm_worst_start".into();
    worst.seed = seed.0;
    for r in &per_start[1..] {
        for i in 0..n_grid.len() {
            if r.d_n[i] > worst.d_n[i] {
                worst.d_n[i] = r.d_n[i];
                worst.se[i] = r.se[i];
            }
        }
    }
    Ok((worst, per_start))
}

/// Regressors of the rate fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateModel {
    /// log D_n on log n.
    PowerLaw,
    /// v_n = ((log n)/n)^{q/2−1}.
    PaperQRate,
    /// v_n = n^{−1/2}.
    PaperSqrtRate,
    /// v_n = (log n)^{(4−q)/2}/√n.
    PaperQ34Rate,
}

impl RateModel {
    pub const ALL: [RateModel; 4] = [RateModel::PowerLaw, RateModel::PaperQRate, RateModel::PaperSqrtRate, RateModel::PaperQ34Rate];

    pub fn name(self) -> &'static str {
        match self {
            RateModel::PowerLaw => "power_law",
            RateModel::PaperQRate => "paper_q_rate",
            RateModel::PaperSqrtRate => "paper_sqrt_rate",
            RateModel::PaperQ34Rate => "paper_q34_rate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        RateModel::ALL.into_iter().find(|m| m.name() == s)
    }

    /// log of the regressor at n.
    pub fn log_regressor(self, n: f64, q: f64) -> f64 {
        let ln = n.ln();
        match self {
            RateModel::PowerLaw => ln,
            RateModel::PaperQRate => (q / 2.0 - 1.0) * (ln.ln() - ln),
            RateModel::PaperSqrtRate => -0.5 * ln,
            RateModel::PaperQ34Rate => (4.0 - q) / 2.0 * ln.ln() - 0.5 * ln,
        }
    }

    /// The rate v_n itself (n itself for the power law).
    pub fn rate(self, n: f64, q: f64) -> f64 {
        self.log_regressor(n, q).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub model: RateModel,
    pub q: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Slope of log D_n on log n with its interval.
    pub free_slope: f64,
    pub free_ci: (f64, f64),
    pub resamples: usize,
}

pub const MIN_RATE_POINTS: usize = 4;
pub const MIN_BOOTSTRAP: usize = 200;

/// OLS of log D_n on the model's log-regressor with a parametric bootstrap
/// interval driven by the per-n standard errors.
pub fn rate_fit(report: &KolmogorovReport, model: RateModel, q: f64, resamples: usize, seed: Seed) -> Result<RateFit> {
    let k = report.n_grid.len();
    if k < MIN_RATE_POINTS {
        return Err(Error::InsufficientGrid(format!("rate fit needs >= {MIN_RATE_POINTS} grid points, got {k}")));
    }
    if resamples < MIN_BOOTSTRAP {
        return Err(Error::InvalidArgument(format!("rate fit needs >= {MIN_BOOTSTRAP} bootstrap resamples")));
    }
    let noisy: Vec<u64> = report
        .n_grid
        .iter()
        .zip(&report.d_n)
        .filter(|(_, &d)| !(d >= 3.0 * report.mc_floor))
        .map(|(&n, _)| n)
        .collect();
    if !noisy.is_empty() {
        return Err(Error::NoiseDominated { ns: noisy });
    }
    let y: Vec<f64> = report.d_n.iter().map(|d| d.ln()).collect();
    let sigma: Vec<f64> = report.se.iter().zip(&report.d_n).map(|(s, d)| s / d).collect();
    let x: Vec<f64> = report.n_grid.iter().map(|&n| model.log_regressor(n as f64, q)).collect();
    let xf: Vec<f64> = report.n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let fit = stats::ols(&x, &y);
    let free = stats::ols(&xf, &y);
    let (ci_lo, ci_hi) = stats::bootstrap_slope_ci(&x, &y, &sigma, resamples, 0.95, seed);
    let free_ci = stats::bootstrap_slope_ci(&xf, &y, &sigma, resamples, 0.95, seed);
    Ok(RateFit {
        model,
        q,
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        ci_lo,
        ci_hi,
        free_slope: free.slope,
        free_ci,
        resamples,
    })
}

/// max/min over the grid of D_n / v_n: bounded when D_n decays at least
/// as fast as the model rate, up to a constant.
pub fn rate_ratio(report: &KolmogorovReport, model: RateModel, q: f64) -> f64 {
    let r: Vec<f64> = report.n_grid.iter().zip(&report.d_n).map(|(&n, &d)| d / model.rate(n as f64, q)).collect();
    let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}

/// log‖A_n‖ − mean_j log‖A_n u_j‖ over paths.
#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    pub n_grid: Vec<u64>,
    pub paths: usize,
    pub j_nu: usize,
    pub max_gap: Vec<f64>,
    pub mean_gap: Vec<f64>,
    pub min_gap: Vec<f64>,
    /// Mean of the per-n maxima over the last tenth of the grid divided by
    /// the same over the first tenth.
    pub trend_ratio: f64,
}

pub const MIN_GAP_DIRECTIONS: usize = 16;

pub fn bougerol_gap(sampler: &StationarySampler, n_grid: &[u64], paths: usize, j_nu: usize, seed: Seed, opts: &BatchOptions) -> Result<GapReport> {
    crate::walk::check_grid(n_grid)?;
    if j_nu < MIN_GAP_DIRECTIONS || paths == 0 {
        return Err(Error::InvalidArgument(format!("gap needs J_nu >= {MIN_GAP_DIRECTIONS} and paths >= 1, got {j_nu}, {paths}")));
    }
    let last = *n_grid.last().expect("checked");
    let burn = if sampler.pool().is_some() { 0 } else { sampler.burn_in() as u128 };
    check_budget(paths as u128 * (last as u128 + j_nu as u128 * burn), opts.step_budget)?;
    let ens = sampler.ensemble();
    let s = seed.derive(Stage::Gap, 0);
    let rows: Result<Vec<Vec<f64>>> = with_workers(opts.workers, || {
        (0..paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = s.stream(Stage::Start, i as u64);
                let us = (0..j_nu).map(|_| sampler.sample(&mut rng)).collect::<Result<Vec<_>>>()?;
                let mut rng = s.stream(Stage::Gap, i as u64);
                let mut acc = WalkAccumulator::new(sampler.start());
                let mut g = GroupElement::identity(ens.dim());
                let mut out = Vec::with_capacity(n_grid.len());
                for &n in n_grid {
                    while acc.step() < n {
                        ens.sample_into(&mut rng, &mut g)?;
                        acc.push(&g);
                    }
                    let mean = us.iter().map(|u| acc.log_norm_applied(u.direction())).sum::<f64>() / j_nu as f64;
                    out.push(acc.log_mat_norm() - mean);
                }
                Ok(out)
            })
            .collect()
    })?;
    let rows = rows?;
    let k = n_grid.len();
    let col = |j: usize| rows.iter().map(move |r| r[j]);
    let max_gap: Vec<f64> = (0..k).map(|j| col(j).fold(f64::NEG_INFINITY, f64::max)).collect();
    let min_gap: Vec<f64> = (0..k).map(|j| col(j).fold(f64::INFINITY, f64::min)).collect();
    let mean_gap: Vec<f64> = (0..k).map(|j| col(j).sum::<f64>() / paths as f64).collect();
    Ok(GapReport { n_grid: n_grid.to_vec(), paths, j_nu, trend_ratio: trend_ratio(&max_gap), max_gap, mean_gap, min_gap })
}

/// Last-decile mean over first-decile mean; 1 when both vanish.
pub fn trend_ratio(v: &[f64]) -> f64 {
    let k = v.len().div_ceil(10).max(1);
    let first = v[..k].iter().sum::<f64>() / k as f64;
    let last = v[v.len() - k..].iter().sum::<f64>() / k as f64;
    const TINY: f64 = 1e-12;
    match (first > TINY, last > TINY) {
        (true, _) => last / first,
        (false, false) => 1.0,
        (false, true) => f64::INFINITY,
    }
}
