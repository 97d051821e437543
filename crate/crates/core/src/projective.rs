//! Projective space: directions in R^d up to sign, the action g·x̄, the
//! norm cocycle σ and an approximation of the stationary measure ν.

use rayon::prelude::*;

use crate::ensemble::{Ensemble, GroupElement};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{RngStream, Seed, Stage};
use crate::stats;

/// Coordinates below this magnitude are skipped when fixing the sign.
pub const SIGN_THRESHOLD: f64 = 1e-14;

/// A unit vector with its first non-negligible coordinate positive.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectivePoint {
    dir: Vec<f64>,
}

fn canonicalize(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|c| c.abs() > SIGN_THRESHOLD) {
        if first < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
}

impl ProjectivePoint {
    /// The direction of a nonzero finite vector.
    pub fn new(v: &[f64]) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::InvalidArgument(format!("direction needs d >= 2, got {}", v.len())));
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("direction has non-finite coordinates".into()));
        }
        let n = linalg::norm(v);
        if n == 0.0 {
            return Err(Error::InvalidArgument("zero vector has no direction".into()));
        }
        let mut dir: Vec<f64> = v.iter().map(|c| c / n).collect();
        canonicalize(&mut dir);
        Ok(ProjectivePoint { dir })
    }

    /// Wraps an already unit-length vector.
    pub(crate) fn from_unit(mut dir: Vec<f64>) -> Self {
        canonicalize(&mut dir);
        ProjectivePoint { dir }
    }

    pub fn basis(d: usize, i: usize) -> Self {
        let mut dir = vec![0.0; d];
        dir[i] = 1.0;
        ProjectivePoint { dir }
    }

    /// The point (cos θ, sin θ) of P(R^2).
    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        ProjectivePoint::from_unit(vec![c, s])
    }

    /// Uniform direction on the sphere (Gaussian normalization).
    pub fn uniform(d: usize, rng: &mut RngStream) -> Self {
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let n = linalg::norm(&v);
            if n > 1e-300 {
                return ProjectivePoint::from_unit(v.iter().map(|c| c / n).collect());
            }
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dir.len()
    }

    #[inline]
    pub fn direction(&self) -> &[f64] {
        &self.dir
    }
}

/// Applies `g` to the unit vector `x` in place and returns σ(g, x̄).
/// `tmp` must have length d. The result is normalized but not sign-fixed.
#[inline]
pub fn step_in_place(g: &GroupElement, x: &mut [f64], tmp: &mut [f64]) -> f64 {
    let d = x.len();
    linalg::mat_vec_into(d, g.unit_matrix(), x, tmp);
    let n = linalg::norm(tmp);
    let inv = 1.0 / n;
    for (xi, ti) in x.iter_mut().zip(tmp.iter()) {
        *xi = ti * inv;
    }
    if g.is_isometry() {
        g.log_scale()
    } else {
        g.log_scale() + n.ln()
    }
}

/// g·x̄.
pub fn act(g: &GroupElement, x: &ProjectivePoint) -> ProjectivePoint {
    let mut v = x.dir.clone();
    let mut tmp = vec![0.0; v.len()];
    step_in_place(g, &mut v, &mut tmp);
    ProjectivePoint::from_unit(v)
}

/// σ(g, x̄) = log(‖gx‖/‖x‖).
pub fn cocycle(g: &GroupElement, x: &ProjectivePoint) -> f64 {
    let mut v = x.dir.clone();
    let mut tmp = vec![0.0; v.len()];
    step_in_place(g, &mut v, &mut tmp)
}

/// δ(ū, v̄) = |⟨u, v⟩|, in [0, 1].
pub fn alignment(u: &ProjectivePoint, v: &ProjectivePoint) -> f64 {
    linalg::dot(&u.dir, &v.dir).abs().min(1.0)
}

/// `k` directions with large pairwise projective spread: angles jπ/k for
/// d = 2, greedy farthest-point selection from a fixed candidate cloud
/// otherwise.
pub fn spread_directions(d: usize, k: usize) -> Vec<ProjectivePoint> {
    if d == 2 {
        return (0..k).map(|j| ProjectivePoint::from_angle(std::f64::consts::PI * j as f64 / k as f64)).collect();
    }
    let mut rng = Seed(0x5eed_5eed).stream(Stage::Start, 0);
    let cloud: Vec<ProjectivePoint> = (0..64 * k.max(1)).map(|_| ProjectivePoint::uniform(d, &mut rng)).collect();
    let mut chosen = vec![ProjectivePoint::basis(d, 0)];
    let mut closest: Vec<f64> = cloud.iter().map(|c| alignment(c, &chosen[0])).collect();
    while chosen.len() < k {
        let (best, _) = closest
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &a)| if a < acc.1 { (i, a) } else { acc });
        let p = cloud[best].clone();
        for (c, a) in cloud.iter().zip(closest.iter_mut()) {
            *a = a.max(alignment(c, &p));
        }
        chosen.push(p);
    }
    chosen.truncate(k);
    chosen
}

/// Default number of burn-in steps.
pub const DEFAULT_BURN_IN: usize = 200;

/// Approximate draws from ν by running the chain B steps from a fixed start.
#[derive(Clone, Debug)]
pub struct StationarySampler {
    ensemble: Ensemble,
    burn_in: usize,
    start: ProjectivePoint,
    pool: Option<Vec<ProjectivePoint>>,
}

impl StationarySampler {
    /// Starts from (1, …, 1)/√d.
    pub fn new(ensemble: Ensemble, burn_in: usize) -> Result<Self> {
        if burn_in == 0 {
            return Err(Error::InvalidArgument("burn_in must be >= 1".into()));
        }
        let d = ensemble.dim();
        let start = ProjectivePoint::new(&vec![1.0; d])?;
        Ok(StationarySampler { ensemble, burn_in, start, pool: None })
    }

    /// Point mass at `start`: every draw returns it and consumes no randomness.
    pub fn fixed(ensemble: Ensemble, start: ProjectivePoint) -> Result<Self> {
        if start.dim() != ensemble.dim() {
            return Err(Error::InvalidArgument("start direction has the wrong dimension".into()));
        }
        Ok(StationarySampler { ensemble, burn_in: 0, start, pool: None })
    }

    pub fn with_start(mut self, start: ProjectivePoint) -> Result<Self> {
        if start.dim() != self.ensemble.dim() {
            return Err(Error::InvalidArgument("start direction has the wrong dimension".into()));
        }
        self.start = start;
        Ok(self)
    }

    /// Pre-draws `size` points; point i uses stream (seed, Pool, i).
    pub fn with_pool(mut self, size: usize, seed: Seed) -> Result<Self> {
        let pool: Result<Vec<_>> =
            (0..size).into_par_iter().map(|i| self.draw(&mut seed.stream(Stage::Pool, i as u64))).collect();
        self.pool = Some(pool?);
        Ok(self)
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn start(&self) -> &ProjectivePoint {
        &self.start
    }

    pub fn pool(&self) -> Option<&[ProjectivePoint]> {
        self.pool.as_deref()
    }

    /// W_B = ε_B ⋯ ε_1 · x̄₀ with fresh ε's.
    pub fn draw(&self, rng: &mut RngStream) -> Result<ProjectivePoint> {
        let d = self.ensemble.dim();
        let mut g = GroupElement::identity(d);
        let mut x = self.start.dir.clone();
        let mut tmp = vec![0.0; d];
        for _ in 0..self.burn_in {
            self.ensemble.sample_into(rng, &mut g)?;
            step_in_place(&g, &mut x, &mut tmp);
        }
        Ok(ProjectivePoint::from_unit(x))
    }

    /// Like [`StationarySampler::sample`], writing the direction into `out`.
    pub fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) -> Result<()> {
        match &self.pool {
            Some(pool) if !pool.is_empty() => out.copy_from_slice(&pool[rng.index(pool.len())].dir),
            _ => out.copy_from_slice(&self.draw(rng)?.dir),
        }
        Ok(())
    }

    /// A uniformly chosen pool point when a pool exists, a fresh draw otherwise.
    pub fn sample(&self, rng: &mut RngStream) -> Result<ProjectivePoint> {
        match &self.pool {
            Some(pool) if !pool.is_empty() => Ok(pool[rng.index(pool.len())].clone()),
            _ => self.draw(rng),
        }
    }
}

/// Two-sample KS comparison of alignment(W, r̄) against alignment(εW', r̄)
/// for independent ν̂ draws W, W'.
#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceReport {
    pub draws: usize,
    pub statistic: f64,
    pub critical: f64,
    pub level: f64,
    pub pass: bool,
}

pub fn invariance_test(sampler: &StationarySampler, draws: usize, level: f64, seed: Seed) -> Result<InvarianceReport> {
    if draws < 2 {
        return Err(Error::InvalidArgument("invariance test needs at least 2 draws".into()));
    }
    let d = sampler.ensemble.dim();
    let reference = ProjectivePoint::uniform(d, &mut seed.stream(Stage::Invariance, u64::MAX));
    let pairs: Result<Vec<(f64, f64)>> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.stream(Stage::Invariance, i as u64);
            let w = sampler.draw(&mut rng)?;
            let w2 = sampler.draw(&mut rng)?;
            let g = sampler.ensemble.sample(&mut rng)?;
            Ok((alignment(&w, &reference), alignment(&act(&g, &w2), &reference)))
        })
        .collect();
    let (a, b): (Vec<f64>, Vec<f64>) = pairs?.into_iter().unzip();
    let statistic = stats::ks_two_sample(&a, &b);
    let critical = stats::ks_two_sample_critical(draws, draws, level);
    Ok(InvarianceReport { draws, statistic, critical, level, pass: statistic <= critical })
}
