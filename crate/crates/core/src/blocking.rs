//! The m-dependent blocking decomposition.
//!
//! With n = 2Nm the indices 1..n split into 2N blocks of length m; 𝔽_m is
//! generated by the ε's of the even blocks, so k is a member iff ⌈k/m⌉ is
//! even. For k > m,
//!
//! X_{k,m} = ∫ σ(ε_k, A_{k−1}^{k−m+1} x̄) dν(x̄) − λ
//!
//! depends only on the window ε_{k−m+1..k}. The ν-integral is replaced by an
//! average over J_ν draws from ν̂, and E(·|𝔽_m) by an average over J_c
//! resamples of the non-member ε's of the window. Only the blocks meeting a
//! window matter, so nothing else is conditioned on.
//!
//! Within one pair of blocks (2j−1, 2j) all conditional expectations share
//! the same resamples of block 2j−1. Each E(X_{k,m}|𝔽_m) estimate keeps its
//! marginal law, while the Monte Carlo error of a block sum shrinks to
//! Var(block sum | 𝔽_m)/J_c instead of growing with m.

use rayon::prelude::*;

use crate::ensemble::{Ensemble, GroupElement};
use crate::error::{Error, Result};
use crate::linalg;
use crate::projective::{step_in_place, StationarySampler};
use crate::rng::{RngStream, Seed, Stage};
use crate::stats::{self, Moments};
use crate::walk::{check_budget, run_path_checkpoints, with_workers, BatchOptions};

/// Default ν̂ draws per X_{k,m}.
pub const DEFAULT_J_NU: usize = 64;
/// Default resamples per conditional expectation.
pub const DEFAULT_J_C: usize = 64;

/// Partition of 1..n into 2N blocks of length m.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    pub n: usize,
    pub m: usize,
    pub big_n: usize,
}

impl BlockLayout {
    pub fn new(m: usize, big_n: usize) -> Result<Self> {
        if m < 2 || big_n < 2 {
            return Err(Error::InvalidArgument(format!("block layout needs m >= 2 and N >= 2, got m = {m}, N = {big_n}")));
        }
        Ok(BlockLayout { n: 2 * big_n * m, m, big_n })
    }

    /// N = ⌊n / 2m⌋, rounding n down to 2Nm.
    pub fn from_m(n: usize, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("block length m must be positive".into()));
        }
        Self::new(m, n / (2 * m))
    }

    /// N = ⌊κ log n⌋ (at least 2), m = ⌊n / 2N⌋, rounding n down to 2Nm.
    pub fn from_kappa(n: usize, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || n < 2 {
            return Err(Error::InvalidArgument(format!("need kappa > 0 and n >= 2, got {kappa}, {n}")));
        }
        let big_n = ((kappa * (n as f64).ln()).floor() as usize).max(2);
        Self::new(n / (2 * big_n), big_n)
    }

    /// k ∈ 𝔽_m iff ⌈k/m⌉ is even (k ≥ 1).
    #[inline]
    pub fn is_member(&self, k: usize) -> bool {
        is_member(k, self.m)
    }
}

#[inline]
pub fn is_member(k: usize, m: usize) -> bool {
    k >= 1 && k.div_ceil(m).is_multiple_of(2)
}

/// Reusable buffers for X_{k,m} evaluations.
pub struct Scratch {
    prod: Vec<f64>,
    tmp_mat: Vec<f64>,
    x: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    pub fn new(d: usize) -> Self {
        Scratch { prod: vec![0.0; d * d], tmp_mat: vec![0.0; d * d], x: vec![0.0; d], tmp: vec![0.0; d] }
    }
}

/// Writes the direction-preserving factor of `window[..len-1]` applied in
/// order (first element first) into `prod`, rescaled by powers of two.
fn window_product(d: usize, head: &[GroupElement], prod: &mut Vec<f64>, tmp: &mut Vec<f64>) {
    prod.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..d {
        prod[i * d + i] = 1.0;
    }
    for g in head {
        linalg::mat_mul_into(d, g.unit_matrix(), prod, tmp);
        std::mem::swap(prod, tmp);
        let m = prod.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if m > 0.0 && !(0.5..2.0).contains(&m) {
            let s = (-(m.log2().floor())).exp2();
            prod.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// ν̂-average of σ(ε_k, A_{k−1}^{k−m+1} x̄) over `j_nu` draws, uncentered.
/// `window` is ε_{k−m+1..k}. When ε_k is an isometry the cocycle does not
/// depend on the direction and no draws are consumed.
pub fn nu_average(window: &[GroupElement], sampler: &StationarySampler, j_nu: usize, rng: &mut RngStream, s: &mut Scratch) -> Result<f64> {
    let (last, head) = window.split_last().ok_or_else(|| Error::InvalidArgument("empty window".into()))?;
    if last.is_isometry() {
        return Ok(last.log_scale());
    }
    if j_nu == 0 {
        return Err(Error::InvalidArgument("J_nu must be >= 1".into()));
    }
    let d = last.dim();
    window_product(d, head, &mut s.prod, &mut s.tmp_mat);
    let mut total = 0.0;
    for _ in 0..j_nu {
        sampler.sample_into(rng, &mut s.tmp)?;
        linalg::mat_vec_into(d, &s.prod, &s.tmp, &mut s.x);
        let n = linalg::norm(&s.x);
        s.x.iter_mut().for_each(|v| *v /= n);
        total += step_in_place(last, &mut s.x, &mut s.tmp);
    }
    Ok(total / j_nu as f64)
}

/// X_{k,m} for the window ε_{k−m+1..k}.
pub fn xkm(window: &[GroupElement], sampler: &StationarySampler, j_nu: usize, lambda_hat: f64, rng: &mut RngStream) -> Result<f64> {
    let mut s = Scratch::new(sampler.ensemble().dim());
    Ok(nu_average(window, sampler, j_nu, rng, &mut s)? - lambda_hat)
}

/// Average of X_{k,m} over `j_c` redraws of the window entries flagged in
/// `resample`, the others held fixed. With nothing to resample this is
/// X_{k,m} itself, computed with the same draws as [`xkm`].
#[allow(clippy::too_many_arguments)]
pub fn resampled_mean(
    window: &[GroupElement],
    resample: &[bool],
    sampler: &StationarySampler,
    j_nu: usize,
    j_c: usize,
    lambda_hat: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    if resample.len() != window.len() {
        return Err(Error::InvalidArgument("resample mask length differs from the window".into()));
    }
    let mut s = Scratch::new(sampler.ensemble().dim());
    let fixed_last = !resample[window.len() - 1] && window[window.len() - 1].is_isometry();
    if !resample.iter().any(|&r| r) || fixed_last {
        return Ok(nu_average(window, sampler, j_nu, rng, &mut s)? - lambda_hat);
    }
    if j_c == 0 {
        return Err(Error::InvalidArgument("J_c must be >= 1".into()));
    }
    let ens = sampler.ensemble();
    let mut w = window.to_vec();
    let mut total = 0.0;
    for _ in 0..j_c {
        for (g, &r) in w.iter_mut().zip(resample) {
            if r {
                ens.sample_into(rng, g)?;
            }
        }
        total += nu_average(&w, sampler, j_nu, rng, &mut s)?;
    }
    Ok(total / j_c as f64 - lambda_hat)
}

/// E(X_{k,m} | 𝔽_m) for k > m, with `eps[i]` = ε_{i+1}.
#[allow(clippy::too_many_arguments)]
pub fn conditional_expectation_fm(
    eps: &[GroupElement],
    m: usize,
    k: usize,
    sampler: &StationarySampler,
    j_nu: usize,
    j_c: usize,
    lambda_hat: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    if k <= m || k > eps.len() {
        return Err(Error::InvalidArgument(format!("need m < k <= n, got k = {k}, m = {m}, n = {}", eps.len())));
    }
    let lo = k - m + 1;
    let mask: Vec<bool> = (lo..=k).map(|i| !is_member(i, m)).collect();
    resampled_mean(&eps[lo - 1..k], &mask, sampler, j_nu, j_c, lambda_hat, rng)
}

/// Conditional expectations E(X_{k,m}|𝔽_m) for k = m+1..n. For each j the
/// non-member block 2j−1 is redrawn `j_c` times and every k in blocks
/// 2j−1 (j ≥ 2) and 2j is evaluated on the same redraws.
pub fn conditional_means(
    eps: &[GroupElement],
    m: usize,
    sampler: &StationarySampler,
    j_nu: usize,
    j_c: usize,
    lambda_hat: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let n = eps.len();
    if !n.is_multiple_of(2 * m) || m < 2 {
        return Err(Error::InvalidArgument(format!("sequence length {n} is not a multiple of 2m = {}", 2 * m)));
    }
    if j_c == 0 {
        return Err(Error::InvalidArgument("J_c must be >= 1".into()));
    }
    let ens = sampler.ensemble();
    let mut s = Scratch::new(ens.dim());
    let mut out = vec![0.0; n - m];
    let mut work = eps.to_vec();
    for j in 1..=n / (2 * m) {
        let first = if j == 1 { m + 1 } else { (2 * j - 2) * m + 1 };
        let last = 2 * j * m;
        let (nm_lo, nm_hi) = ((2 * j - 2) * m + 1, (2 * j - 1) * m);
        // isometric ε_k at a member index: X_{k,m} is fixed by 𝔽_m
        let mut sums = vec![0.0; last - first + 1];
        for _ in 0..j_c {
            for i in nm_lo..=nm_hi {
                ens.sample_into(rng, &mut work[i - 1])?;
            }
            for k in first..=last {
                let w = &work[k - m..k];
                sums[k - first] += nu_average(w, sampler, j_nu, rng, &mut s)?;
            }
        }
        for k in first..=last {
            let g = &eps[k - 1];
            out[k - m - 1] = if is_member(k, m) && g.is_isometry() {
                g.log_scale() - lambda_hat
            } else {
                sums[k - first] / j_c as f64 - lambda_hat
            };
        }
        // restore the redrawn block for the next pair's windows
        work[nm_lo - 1..nm_hi].clone_from_slice(&eps[nm_lo - 1..nm_hi]);
    }
    Ok(out)
}

/// Realized blocking decomposition of one path.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSample {
    pub layout: BlockLayout,
    pub j_nu: usize,
    pub j_c: usize,
    pub lambda_hat: f64,
    /// U_1, …, U_N (U_1 = Σ_{k≤m} X_k).
    pub u: Vec<f64>,
    pub r: Vec<f64>,
    /// Y_j = U_j + R_j.
    pub y: Vec<f64>,
    pub s1: f64,
    pub s2: f64,
    /// S_{n,m} = Σ_{k≤m} X_k + Σ_{k>m} X_{k,m}.
    pub s_nm: f64,
    /// S_n = Σ_{k≤n} X_k.
    pub s_n: f64,
    /// X_{k,m}, k = m+1..n.
    pub xkm: Vec<f64>,
    /// E(X_{k,m}|𝔽_m), k = m+1..n.
    pub cond: Vec<f64>,
}

/// Draws ε_1..ε_n.
pub fn draw_sequence(ens: &Ensemble, n: usize, rng: &mut RngStream) -> Result<Vec<GroupElement>> {
    (0..n).map(|_| ens.sample(rng)).collect()
}

/// Assembles the decomposition from ε_1..ε_n, the start W_0 and precomputed
/// conditional means.
#[allow(clippy::too_many_arguments)]
pub fn realize(
    layout: BlockLayout,
    eps: &[GroupElement],
    w0: &[f64],
    cond: Vec<f64>,
    sampler: &StationarySampler,
    j_nu: usize,
    j_c: usize,
    lambda_hat: f64,
    rng: &mut RngStream,
) -> Result<BlockSample> {
    let (n, m) = (layout.n, layout.m);
    if eps.len() != n || cond.len() != n - m {
        return Err(Error::InvalidArgument("sequence length does not match the layout".into()));
    }
    let d = sampler.ensemble().dim();
    let mut x = w0.to_vec();
    let mut tmp = vec![0.0; d];
    let mut raw = Vec::with_capacity(n);
    for g in eps {
        raw.push(step_in_place(g, &mut x, &mut tmp) - lambda_hat);
    }
    let mut s = Scratch::new(d);
    let mut xs = Vec::with_capacity(n - m);
    for k in m + 1..=n {
        xs.push(nu_average(&eps[k - m..k], sampler, j_nu, rng, &mut s)? - lambda_hat);
    }
    let u1: f64 = raw[..m].iter().sum();
    let dev = |k: usize| xs[k - m - 1] - cond[k - m - 1];
    let mut u = Vec::with_capacity(layout.big_n);
    let mut r = Vec::with_capacity(layout.big_n);
    for j in 1..=layout.big_n {
        u.push(if j == 1 { u1 } else { ((2 * j - 2) * m + 1..=(2 * j - 1) * m).map(dev).sum() });
        r.push(((2 * j - 1) * m + 1..=2 * j * m).map(dev).sum());
    }
    let y: Vec<f64> = u.iter().zip(&r).map(|(a, b)| a + b).collect();
    let s1 = y.iter().sum();
    let s2 = cond.iter().sum();
    let s_nm = u1 + xs.iter().sum::<f64>();
    let s_n = raw.iter().sum();
    Ok(BlockSample { layout, j_nu, j_c, lambda_hat, u, r, y, s1, s2, s_nm, s_n, xkm: xs, cond })
}

/// One full decomposition: W_0 ~ ν̂, fresh ε's, conditional means and blocks.
pub fn decompose(
    sampler: &StationarySampler,
    layout: BlockLayout,
    j_nu: usize,
    j_c: usize,
    lambda_hat: f64,
    rng: &mut RngStream,
) -> Result<BlockSample> {
    let ens = sampler.ensemble();
    let mut w0 = vec![0.0; ens.dim()];
    sampler.sample_into(rng, &mut w0)?;
    let eps = draw_sequence(ens, layout.n, rng)?;
    let cond = conditional_means(&eps, layout.m, sampler, j_nu, j_c, lambda_hat, rng)?;
    realize(layout, &eps, &w0, cond, sampler, j_nu, j_c, lambda_hat, rng)
}

/// Estimated moments over an m-grid and their log–log slope.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingReport {
    pub kind: String,
    pub order: f64,
    pub m_grid: Vec<usize>,
    pub values: Vec<f64>,
    pub se: Vec<f64>,
    pub slope: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// The asserted upper bound on the slope.
    pub ceiling: f64,
    /// All values vanish; the slope is undefined.
    pub degenerate: bool,
    pub paths: usize,
    pub j_nu: usize,
    pub j_c: usize,
}

impl ScalingReport {
    pub fn within_ceiling(&self) -> bool {
        !self.degenerate && self.slope <= self.ceiling
    }
}

const DEGENERATE_LEVEL: f64 = 1e-24;
const SCALING_RESAMPLES: usize = 400;

fn check_m_grid(m_grid: &[usize], min_m: usize) -> Result<()> {
    if m_grid.len() < 2 || m_grid.windows(2).any(|w| w[0] >= w[1]) || m_grid[0] < min_m {
        return Err(Error::InsufficientGrid(format!("m_grid must be ascending with m >= {min_m}, got {m_grid:?}")));
    }
    if m_grid[m_grid.len() - 1] < 8 * m_grid[0] {
        return Err(Error::InsufficientGrid(format!("m_grid must span a factor >= 8, got {m_grid:?}")));
    }
    Ok(())
}

/// Fits log mean(samples[i]) on log m with a path bootstrap interval.
#[allow(clippy::too_many_arguments)]
fn scaling_fit(
    kind: &str,
    order: f64,
    m_grid: &[usize],
    samples: &[Vec<f64>],
    ceiling: f64,
    seed: Seed,
    j_nu: usize,
    j_c: usize,
) -> ScalingReport {
    let stats: Vec<Moments> = samples.iter().map(|v| Moments::from_slice(v)).collect();
    let values: Vec<f64> = stats.iter().map(|s| s.mean).collect();
    let se: Vec<f64> = stats.iter().map(|s| s.se()).collect();
    let paths = samples.first().map_or(0, |v| v.len());
    let degenerate = values.iter().any(|&v| !(v > DEGENERATE_LEVEL));
    let x: Vec<f64> = m_grid.iter().map(|&m| (m as f64).ln()).collect();
    if degenerate {
        return ScalingReport {
            kind: kind.into(),
            order,
            m_grid: m_grid.to_vec(),
            values,
            se,
            slope: f64::NAN,
            ci_lo: f64::NAN,
            ci_hi: f64::NAN,
            ceiling,
            degenerate,
            paths,
            j_nu,
            j_c,
        };
    }
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let slope = stats::ols(&x, &y).slope;
    let mut rng = seed.stream(Stage::Bootstrap, 1);
    let mut slopes: Vec<f64> = (0..SCALING_RESAMPLES)
        .map(|_| {
            let yb: Vec<f64> = samples
                .iter()
                .map(|v| {
                    let s: f64 = (0..v.len()).map(|_| v[rng.index(v.len())]).sum();
                    (s / v.len() as f64).max(f64::MIN_POSITIVE).ln()
                })
                .collect();
            stats::ols(&x, &yb).slope
        })
        .collect();
    slopes.sort_unstable_by(f64::total_cmp);
    ScalingReport {
        kind: kind.into(),
        order,
        m_grid: m_grid.to_vec(),
        values,
        se,
        slope,
        ci_lo: stats::quantile_sorted(&slopes, 0.025),
        ci_hi: stats::quantile_sorted(&slopes, 0.975),
        ceiling,
        degenerate,
        paths,
        j_nu,
        j_c,
    }
}

/// R_1 = Σ_{k=m+1}^{2m} (X_{k,m} − E(X_{k,m}|𝔽_m)) on a fresh ε_1..ε_{2m}.
pub fn sample_r1(sampler: &StationarySampler, m: usize, j_nu: usize, j_c: usize, rng: &mut RngStream) -> Result<f64> {
    let ens = sampler.ensemble();
    let eps = draw_sequence(ens, 2 * m, rng)?;
    // λ cancels in R_1
    let cond = conditional_means(&eps, m, sampler, j_nu, j_c, 0.0, rng)?;
    let mut s = Scratch::new(ens.dim());
    let mut r1 = 0.0;
    for k in m + 1..=2 * m {
        r1 += nu_average(&eps[k - m..k], sampler, j_nu, rng, &mut s)? - cond[k - m - 1];
    }
    Ok(r1)
}

/// E|R_1|^p over the m-grid; ceiling p + 1 − q + 0.3.
#[allow(clippy::too_many_arguments)]
pub fn r1_moment_scaling(
    sampler: &StationarySampler,
    p: f64,
    q: f64,
    m_grid: &[usize],
    paths: usize,
    j_nu: usize,
    j_c: usize,
    seed: Seed,
    opts: &BatchOptions,
) -> Result<ScalingReport> {
    check_m_grid(m_grid, 2)?;
    if paths < 2 {
        return Err(Error::InvalidArgument("paths must be >= 2".into()));
    }
    let cost: u128 = m_grid.iter().map(|&m| (m * m) as u128 * (j_nu as u128) * (j_c as u128 + 1)).sum::<u128>() * paths as u128;
    check_budget(cost, opts.step_budget)?;
    let mut samples = Vec::with_capacity(m_grid.len());
    for (mi, &m) in m_grid.iter().enumerate() {
        let s = seed.derive(Stage::Blocking, mi as u64);
        let col: Result<Vec<f64>> = with_workers(opts.workers, || {
            (0..paths)
                .into_par_iter()
                .map(|i| sample_r1(sampler, m, j_nu, j_c, &mut s.stream(Stage::Blocking, i as u64)).map(|r| r.abs().powf(p)))
                .collect()
        })?;
        samples.push(col?);
    }
    Ok(scaling_fit("r1_moment", p, m_grid, &samples, p + 1.0 - q + 0.3, seed, j_nu, j_c))
}

/// E|Σ_{k=m+1}^{2m} X_k|^q from ν̂ starts; ceiling q/2 + 0.3.
pub fn block_moment_growth(
    sampler: &StationarySampler,
    q: f64,
    m_grid: &[usize],
    paths: usize,
    lambda_hat: f64,
    seed: Seed,
    opts: &BatchOptions,
) -> Result<ScalingReport> {
    check_m_grid(m_grid, 1)?;
    if paths < 2 {
        return Err(Error::InvalidArgument("paths must be >= 2".into()));
    }
    let burn = if sampler.pool().is_some() { 0 } else { sampler.burn_in() };
    let cost: u128 = m_grid.iter().map(|&m| (2 * m + burn) as u128).sum::<u128>() * paths as u128;
    check_budget(cost, opts.step_budget)?;
    let ens = sampler.ensemble();
    let mut samples = Vec::with_capacity(m_grid.len());
    for (mi, &m) in m_grid.iter().enumerate() {
        let s = seed.derive(Stage::Blocking, mi as u64);
        let col: Result<Vec<f64>> = with_workers(opts.workers, || {
            (0..paths)
                .into_par_iter()
                .map(|i| {
                    let start = sampler.sample(&mut s.stream(Stage::Start, i as u64))?;
                    let rows = run_path_checkpoints(ens, &[m as u64, 2 * m as u64], &start, &mut s.stream(Stage::Path, i as u64), false)?;
                    let sum = rows[1].log_vec_norm - rows[0].log_vec_norm - m as f64 * lambda_hat;
                    Ok(sum.abs().powf(q))
                })
                .collect()
        })?;
        samples.push(col?);
    }
    Ok(scaling_fit("block_moment", q, m_grid, &samples, q / 2.0 + 0.3, seed, 0, 0))
}

/// Nested estimate of ‖Var(T | 𝒢_m) − E Var(T | 𝒢_m)‖ with
/// T = Σ_{k=m+1}^{2m} X_{k,m} and 𝒢_m = σ(W_0, ε_1..ε_m).
#[derive(Clone, Debug, PartialEq)]
pub struct CondVarReport {
    pub m_grid: Vec<usize>,
    pub outer: usize,
    pub inner: usize,
    pub j_nu: usize,
    /// Mean over outer draws of |V̂_o − mean V̂|.
    pub l1: Vec<f64>,
    pub l1_se: Vec<f64>,
    /// sqrt(2/π)·(standard error of V̂_o), averaged: the level of l1 when
    /// the conditional variance does not depend on 𝒢_m.
    pub noise_floor: Vec<f64>,
    /// sqrt(max(0, Var_o V̂_o − mean_o se_o²)): an L² bound with the inner
    /// Monte Carlo variance removed.
    pub l2_debiased: Vec<f64>,
    /// l1 exceeds the noise floor by more than 3 standard errors. Where it
    /// does not, l1 measures inner Monte Carlo noise and its slope says
    /// nothing about the conditional variance.
    pub resolved: Vec<bool>,
    pub slope_l1: f64,
    pub slope_l2: f64,
    pub ceiling: f64,
}

/// Per-outer conditional variance and the squared standard error of its estimate.
fn conditional_variance_once(
    sampler: &StationarySampler,
    m: usize,
    inner: usize,
    j_nu: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    let ens = sampler.ensemble();
    let mut eps = draw_sequence(ens, 2 * m, rng)?;
    let mut s = Scratch::new(ens.dim());
    let mut t = Vec::with_capacity(inner);
    for _ in 0..inner {
        for g in eps[m..].iter_mut() {
            ens.sample_into(rng, g)?;
        }
        let mut sum = 0.0;
        for k in m + 1..=2 * m {
            sum += nu_average(&eps[k - m..k], sampler, j_nu, rng, &mut s)?;
        }
        t.push(sum);
    }
    let mo = Moments::from_slice(&t);
    let v = mo.variance();
    let n = inner as f64;
    let m4 = t.iter().map(|x| (x - mo.mean).powi(4)).sum::<f64>() / n;
    let se2 = ((m4 - v * v) / n).max(0.0);
    Ok((v, se2))
}

pub fn conditional_variance_concentration(
    sampler: &StationarySampler,
    m_grid: &[usize],
    outer: usize,
    inner: usize,
    j_nu: usize,
    seed: Seed,
    opts: &BatchOptions,
) -> Result<CondVarReport> {
    check_m_grid(m_grid, 2)?;
    if outer < 2 || inner < 4 {
        return Err(Error::InvalidArgument(format!("need outer >= 2 and inner >= 4, got {outer}, {inner}")));
    }
    let cost: u128 = m_grid.iter().map(|&m| (m * m) as u128).sum::<u128>() * (outer * inner * j_nu.max(1)) as u128;
    check_budget(cost, opts.step_budget)?;
    let mut l1 = Vec::new();
    let mut l1_se = Vec::new();
    let mut floor = Vec::new();
    let mut l2 = Vec::new();
    for (mi, &m) in m_grid.iter().enumerate() {
        let s = seed.derive(Stage::Inner, mi as u64);
        let per: Result<Vec<(f64, f64)>> = with_workers(opts.workers, || {
            (0..outer)
                .into_par_iter()
                .map(|o| conditional_variance_once(sampler, m, inner, j_nu, &mut s.stream(Stage::Inner, o as u64)))
                .collect()
        })?;
        let per = per?;
        let vs: Vec<f64> = per.iter().map(|p| p.0).collect();
        let mv = Moments::from_slice(&vs);
        let dev: Vec<f64> = vs.iter().map(|v| (v - mv.mean).abs()).collect();
        let md = Moments::from_slice(&dev);
        l1.push(md.mean);
        l1_se.push(md.se());
        let mean_se2 = per.iter().map(|p| p.1).sum::<f64>() / outer as f64;
        floor.push((2.0 / std::f64::consts::PI).sqrt() * per.iter().map(|p| p.1.sqrt()).sum::<f64>() / outer as f64);
        l2.push((mv.variance() - mean_se2).max(0.0).sqrt());
    }
    let x: Vec<f64> = m_grid.iter().map(|&m| (m as f64).ln()).collect();
    let fit = |v: &[f64]| {
        if v.iter().all(|&a| a > 0.0) {
            stats::ols(&x, &v.iter().map(|a| a.ln()).collect::<Vec<_>>()).slope
        } else {
            f64::NAN
        }
    };
    Ok(CondVarReport {
        m_grid: m_grid.to_vec(),
        outer,
        inner,
        j_nu,
        slope_l1: fit(&l1),
        slope_l2: fit(&l2),
        resolved: l1.iter().zip(&l1_se).zip(&floor).map(|((a, se), f)| a - f > 3.0 * se).collect(),
        l1,
        l1_se,
        noise_floor: floor,
        l2_debiased: l2,
        ceiling: 0.2 + 0.3,
    })
}

/// Conditional independence and one-dependence diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureReport {
    pub layout: BlockLayout,
    /// Conditional replicates per 𝔽_m realization in check (a).
    pub replicates: usize,
    /// Outer 𝔽_m realizations in check (b).
    pub outer: usize,
    /// (j, j', correlation, standard error) for |j − j'| ≥ 1, check (a).
    pub cond_corr: Vec<(usize, usize, f64, f64)>,
    /// (j, j', correlation, standard error) for |j − j'| ≥ 2, check (b).
    pub z_corr: Vec<(usize, usize, f64, f64)>,
    /// max_j |φ̂_j(t)| per t, check (c).
    pub phi_max: Vec<(f64, f64)>,
    /// max |S_{n,m} − S^{(1)} − S^{(2)}| over all realized samples.
    pub identity_error: f64,
    pub pass_a: bool,
    pub pass_b: bool,
    pub pass_c: bool,
}

/// Standard error of a sample correlation under independence.
fn corr_with_se(a: &[f64], b: &[f64]) -> (f64, f64) {
    let ma = Moments::from_slice(a);
    let mb = Moments::from_slice(b);
    let n = a.len() as f64;
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma.mean) * (y - mb.mean)).sum::<f64>() / (n - 1.0);
    let (sa, sb) = (ma.sd(), mb.sd());
    let r = if sa > 0.0 && sb > 0.0 { cov / (sa * sb) } else { 0.0 };
    (r, 1.0 / n.sqrt())
}

/// Settings of [`structural_checks`].
#[derive(Clone, Debug)]
pub struct StructureOptions {
    pub replicates: usize,
    pub outer: usize,
    pub inner: usize,
    pub j_nu: usize,
    pub j_c: usize,
    pub t_grid: Vec<f64>,
    pub z: f64,
}

impl Default for StructureOptions {
    fn default() -> Self {
        StructureOptions { replicates: 1000, outer: 400, inner: 32, j_nu: 8, j_c: 16, t_grid: vec![0.0, 0.5, 1.0, 2.0], z: 3.0 }
    }
}

/// (a) fix one 𝔽_m realization and redraw the rest: Y_j, Y_{j'} must be
/// uncorrelated; (b) over outer 𝔽_m draws, Z_j = E(cos(Y_j/√(2m)) | 𝔽_m)
/// must be uncorrelated for |j − j'| ≥ 2; (c) |φ̂_j(t)| ≤ 1 + noise.
pub fn structural_checks(
    sampler: &StationarySampler,
    layout: BlockLayout,
    lambda_hat: f64,
    so: &StructureOptions,
    seed: Seed,
    opts: &BatchOptions,
) -> Result<StructureReport> {
    let (n, m, big_n) = (layout.n, layout.m, layout.big_n);
    if so.replicates < 3 || so.outer < 3 || so.inner < 1 {
        return Err(Error::InvalidArgument("structural checks need replicates, outer >= 3 and inner >= 1".into()));
    }
    let per_sample = (n * m * so.j_nu) as u128;
    let cond_cost = (n * m * so.j_nu * so.j_c) as u128;
    check_budget(
        (so.replicates as u128 + so.outer as u128 * so.inner as u128) * per_sample + (1 + so.outer as u128) * cond_cost,
        opts.step_budget,
    )?;
    let ens = sampler.ensemble();
    let scale = (2.0 * m as f64).sqrt();

    // (a)
    let base = seed.derive(Stage::Blocking, 0);
    let mut rng = base.stream(Stage::Blocking, 0);
    let members = draw_sequence(ens, n, &mut rng)?;
    let cond = conditional_means(&members, m, sampler, so.j_nu, so.j_c, lambda_hat, &mut rng)?;
    let reps: Result<Vec<BlockSample>> = with_workers(opts.workers, || {
        (0..so.replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = base.stream(Stage::Inner, r as u64);
                let eps = redraw_nonmembers(ens, &members, m, &mut rng)?;
                let mut w0 = vec![0.0; ens.dim()];
                sampler.sample_into(&mut rng, &mut w0)?;
                realize(layout, &eps, &w0, cond.clone(), sampler, so.j_nu, so.j_c, lambda_hat, &mut rng)
            })
            .collect()
    })?;
    let reps = reps?;
    let mut identity_error = 0.0f64;
    for b in &reps {
        identity_error = identity_error.max((b.s_nm - b.s1 - b.s2).abs());
    }
    let ys: Vec<Vec<f64>> = (0..big_n).map(|j| reps.iter().map(|b| b.y[j]).collect()).collect();
    let mut cond_corr = Vec::new();
    for j in 0..big_n {
        for jp in j + 1..big_n {
            let (r, se) = corr_with_se(&ys[j], &ys[jp]);
            cond_corr.push((j + 1, jp + 1, r, se));
        }
    }
    let pass_a = cond_corr.iter().all(|&(_, _, r, se)| r.abs() <= so.z * se);

    // (c) on the conditional replicates
    let mut phi_max = Vec::new();
    let mut pass_c = true;
    for &t in &so.t_grid {
        let mut worst = 0.0f64;
        for y in &ys {
            let (c, s) = y.iter().fold((0.0, 0.0), |(c, s), v| (c + (t * v / scale).cos(), s + (t * v / scale).sin()));
            let k = y.len() as f64;
            worst = worst.max((c / k).hypot(s / k));
        }
        pass_c &= worst <= 1.0 + so.z / (so.replicates as f64).sqrt();
        phi_max.push((t, worst));
    }

    // (b)
    let zs: Result<Vec<(Vec<f64>, f64)>> = with_workers(opts.workers, || {
        (0..so.outer)
            .into_par_iter()
            .map(|o| {
                let s = seed.derive(Stage::Blocking, 1 + o as u64);
                let mut rng = s.stream(Stage::Blocking, 0);
                let members = draw_sequence(ens, n, &mut rng)?;
                let cond = conditional_means(&members, m, sampler, so.j_nu, so.j_c, lambda_hat, &mut rng)?;
                let mut z = vec![0.0; big_n];
                let mut err = 0.0f64;
                for i in 0..so.inner {
                    let mut rng = s.stream(Stage::Inner, i as u64);
                    let eps = redraw_nonmembers(ens, &members, m, &mut rng)?;
                    let mut w0 = vec![0.0; ens.dim()];
                    sampler.sample_into(&mut rng, &mut w0)?;
                    let b = realize(layout, &eps, &w0, cond.clone(), sampler, so.j_nu, so.j_c, lambda_hat, &mut rng)?;
                    err = err.max((b.s_nm - b.s1 - b.s2).abs());
                    for (zj, yj) in z.iter_mut().zip(&b.y) {
                        *zj += (yj / scale).cos();
                    }
                }
                z.iter_mut().for_each(|v| *v /= so.inner as f64);
                Ok((z, err))
            })
            .collect()
    })?;
    let zs = zs?;
    for (_, e) in &zs {
        identity_error = identity_error.max(*e);
    }
    let zcols: Vec<Vec<f64>> = (0..big_n).map(|j| zs.iter().map(|(z, _)| z[j]).collect()).collect();
    let mut z_corr = Vec::new();
    for j in 0..big_n {
        for jp in j + 2..big_n {
            let (r, se) = corr_with_se(&zcols[j], &zcols[jp]);
            z_corr.push((j + 1, jp + 1, r, se));
        }
    }
    let pass_b = z_corr.iter().all(|&(_, _, r, se)| r.abs() <= so.z * se);
    Ok(StructureReport {
        layout,
        replicates: so.replicates,
        outer: so.outer,
        cond_corr,
        z_corr,
        phi_max,
        identity_error,
        pass_a,
        pass_b,
        pass_c,
    })
}

/// Copy of `eps` with every non-member ε redrawn.
pub fn redraw_nonmembers(ens: &Ensemble, eps: &[GroupElement], m: usize, rng: &mut RngStream) -> Result<Vec<GroupElement>> {
    let mut out = eps.to_vec();
    for (i, g) in out.iter_mut().enumerate() {
        if !is_member(i + 1, m) {
            ens.sample_into(rng, g)?;
        }
    }
    Ok(out)
}

/// ‖S_n − S_{n,m}‖₁ = E|Σ_{k>m} (X_k − X_{k,m})| with standard error.
#[allow(clippy::too_many_arguments)]
pub fn step1_error(
    sampler: &StationarySampler,
    n: usize,
    m: usize,
    paths: usize,
    j_nu: usize,
    lambda_hat: f64,
    seed: Seed,
    opts: &BatchOptions,
) -> Result<(f64, f64)> {
    if m == 0 || n <= m || paths < 2 {
        return Err(Error::InvalidArgument("need 0 < m < n and paths >= 2".into()));
    }
    let ens = sampler.ensemble();
    let vals: Result<Vec<f64>> = with_workers(opts.workers, || {
        (0..paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed.stream(Stage::Blocking, i as u64);
                let d = ens.dim();
                let mut x = vec![0.0; d];
                sampler.sample_into(&mut rng, &mut x)?;
                let eps = draw_sequence(ens, n, &mut rng)?;
                let mut tmp = vec![0.0; d];
                let mut s = Scratch::new(d);
                let mut diff = 0.0;
                for (k, g) in eps.iter().enumerate().map(|(i, g)| (i + 1, g)) {
                    let xk = step_in_place(g, &mut x, &mut tmp) - lambda_hat;
                    if k > m {
                        diff += xk - (nu_average(&eps[k - m..k], sampler, j_nu, &mut rng, &mut s)? - lambda_hat);
                    }
                }
                Ok(diff.abs())
            })
            .collect()
    })?;
    let mo = Moments::from_slice(&vals?);
    Ok((mo.mean, mo.se()))
}
