//! Coupling estimates of the dependence coefficients
//! δ_{p,∞}(k)^p = sup_{x̄,ȳ} E|σ(ε_k, W^x̄_{k−1}) − σ(ε_k, W^ȳ_{k−1})|^p.
//!
//! Both chains are driven by the same draws ε_1, …, ε_k: every sampled
//! element is applied to both directions before the next one is drawn. The
//! supremum is replaced by a maximum over a finite pool of start pairs, so
//! the estimate is a lower bound on the true coefficient.

use rayon::prelude::*;

use crate::ensemble::GroupElement;
use crate::error::{Error, Result};
use crate::linalg;
use crate::projective::{step_in_place, ProjectivePoint, StationarySampler};
use crate::rng::{RngStream, Seed, Stage};
use crate::stats::{self, Moments};
use crate::walk::{check_budget, with_workers, BatchOptions};

/// Pool of start pairs over which the maximum is taken.
#[derive(Clone, Debug, PartialEq)]
pub struct PairStrategy {
    /// Independent ν̂ pairs.
    pub nu_pairs: usize,
    /// Pairs (x̄, ȳ) with x̄ ~ ν̂ and ȳ orthogonal to x̄.
    pub orthogonal_pairs: usize,
    pub pinned: Vec<(ProjectivePoint, ProjectivePoint)>,
}

impl Default for PairStrategy {
    fn default() -> Self {
        PairStrategy { nu_pairs: 32, orthogonal_pairs: 32, pinned: Vec::new() }
    }
}

impl PairStrategy {
    pub fn label(&self) -> String {
        format!("nu{}+orth{}+pinned{}", self.nu_pairs, self.orthogonal_pairs, self.pinned.len())
    }

    /// Materializes the pairs; pair i draws from stream (seed, Start, i).
    pub fn pairs(&self, sampler: &StationarySampler, seed: Seed) -> Result<Vec<(ProjectivePoint, ProjectivePoint)>> {
        let d = sampler.ensemble().dim();
        let mut out = Vec::with_capacity(self.nu_pairs + self.orthogonal_pairs + self.pinned.len());
        for i in 0..self.nu_pairs {
            let mut rng = seed.stream(Stage::Start, i as u64);
            out.push((sampler.draw(&mut rng)?, sampler.draw(&mut rng)?));
        }
        for i in 0..self.orthogonal_pairs {
            let mut rng = seed.stream(Stage::Start, (self.nu_pairs + i) as u64);
            let x = sampler.draw(&mut rng)?;
            let y = orthogonal_to(&x, &mut rng);
            out.push((x, y));
        }
        for (x, y) in &self.pinned {
            if x.dim() != d || y.dim() != d {
                return Err(Error::InvalidArgument("pinned pair has the wrong dimension".into()));
            }
            out.push((x.clone(), y.clone()));
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("pair strategy produces no pairs".into()));
        }
        Ok(out)
    }
}

/// A random direction orthogonal to `x`.
pub fn orthogonal_to(x: &ProjectivePoint, rng: &mut RngStream) -> ProjectivePoint {
    let u = x.direction();
    if u.len() == 2 {
        return ProjectivePoint::from_unit(vec![-u[1], u[0]]);
    }
    loop {
        let mut v: Vec<f64> = (0..u.len()).map(|_| rng.normal()).collect();
        let c = linalg::dot(&v, u);
        v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
        let n = linalg::norm(&v);
        if n > 1e-8 {
            return ProjectivePoint::from_unit(v.iter().map(|a| a / n).collect());
        }
    }
}

/// δ̂_{p,∞}(k) over a k-grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DepCoefCurve {
    pub p: f64,
    pub k_grid: Vec<u64>,
    pub values: Vec<f64>,
    pub se: Vec<f64>,
    pub pair_count: usize,
    pub replicates: usize,
    pub strategy: String,
}

/// Per-pair means of |Δσ_k|^p for every requested p.
struct PairMoments {
    /// [p_idx][k_idx]
    moments: Vec<Vec<Moments>>,
}

fn couple_pair(
    sampler: &StationarySampler,
    x: &ProjectivePoint,
    y: &ProjectivePoint,
    ps: &[f64],
    k_grid: &[u64],
    replicates: usize,
    seed: Seed,
) -> Result<PairMoments> {
    let ens = sampler.ensemble();
    let d = ens.dim();
    let kmax = *k_grid.last().expect("non-empty grid");
    let mut moments = vec![vec![Moments::new(); k_grid.len()]; ps.len()];
    let mut g = GroupElement::identity(d);
    let (mut wx, mut wy, mut tmp) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for r in 0..replicates {
        let mut rng = seed.stream(Stage::DepCoef, r as u64);
        wx.copy_from_slice(x.direction());
        wy.copy_from_slice(y.direction());
        let mut next = 0;
        for k in 1..=kmax {
            // one draw drives both chains
            ens.sample_into(&mut rng, &mut g)?;
            let sx = step_in_place(&g, &mut wx, &mut tmp);
            let sy = step_in_place(&g, &mut wy, &mut tmp);
            if k == k_grid[next] {
                let diff = (sx - sy).abs();
                for (pi, &p) in ps.iter().enumerate() {
                    moments[pi][next].push(if p == 1.0 { diff } else { diff.powf(p) });
                }
                next += 1;
            }
        }
    }
    Ok(PairMoments { moments })
}

/// Estimates δ̂_{p,∞}(k) for each p in `ps` from the same pairs and draws.
pub fn estimate_delta_multi(
    sampler: &StationarySampler,
    ps: &[f64],
    k_grid: &[u64],
    strategy: &PairStrategy,
    replicates: usize,
    seed: Seed,
    opts: &BatchOptions,
) -> Result<Vec<DepCoefCurve>> {
    if ps.iter().any(|&p| !(p >= 1.0)) {
        return Err(Error::InvalidArgument("dependence order p must be >= 1".into()));
    }
    if replicates < 100 {
        return Err(Error::InvalidArgument(format!("replicates must be >= 100, got {replicates}")));
    }
    if k_grid.is_empty() || k_grid[0] == 0 || k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("k_grid must be strictly ascending and start at >= 1".into()));
    }
    let pairs = strategy.pairs(sampler, seed)?;
    let kmax = *k_grid.last().expect("non-empty") as u128;
    check_budget(2 * pairs.len() as u128 * replicates as u128 * kmax, opts.step_budget)?;
    let per_pair: Result<Vec<PairMoments>> = with_workers(opts.workers, || {
        pairs
            .par_iter()
            .enumerate()
            .map(|(i, (x, y))| couple_pair(sampler, x, y, ps, k_grid, replicates, seed.derive(Stage::DepCoef, i as u64)))
            .collect()
    })?;
    let per_pair = per_pair?;
    let mut curves = Vec::with_capacity(ps.len());
    for (pi, &p) in ps.iter().enumerate() {
        let mut values = Vec::with_capacity(k_grid.len());
        let mut se = Vec::with_capacity(k_grid.len());
        for ki in 0..k_grid.len() {
            // max over pairs, ties resolved by the lowest pair index
            let mut best = per_pair[0].moments[pi][ki];
            for pm in &per_pair[1..] {
                let m = pm.moments[pi][ki];
                if m.mean > best.mean {
                    best = m;
                }
            }
            let v = best.mean.max(0.0).powf(1.0 / p);
            // delta method for the p-th root
            let s = if v > 0.0 { best.se() / (p * v.powf(p - 1.0)) } else { 0.0 };
            values.push(v);
            se.push(s);
        }
        curves.push(DepCoefCurve {
            p,
            k_grid: k_grid.to_vec(),
            values,
            se,
            pair_count: pairs.len(),
            replicates,
            strategy: strategy.label(),
        });
    }
    Ok(curves)
}

pub fn estimate_delta(
    sampler: &StationarySampler,
    p: f64,
    k_grid: &[u64],
    strategy: &PairStrategy,
    replicates: usize,
    seed: Seed,
    opts: &BatchOptions,
) -> Result<DepCoefCurve> {
    let mut v = estimate_delta_multi(sampler, &[p], k_grid, strategy, replicates, seed, opts)?;
    Ok(v.pop().expect("one curve"))
}

/// Decay diagnostics of a δ̂ curve against the rate o(k^{−(q/p − 1)}).
#[derive(Clone, Debug, PartialEq)]
pub struct DecayReport {
    pub q: f64,
    /// Log–log slope of δ̂ against k over the positive values.
    pub slope: f64,
    pub slope_se: f64,
    /// max/min of k^{q/p−1}·δ̂(k) over the upper half of the grid.
    pub ratio: f64,
    /// δ̂ vanishes on the whole grid.
    pub degenerate: bool,
    pub violation: bool,
}

/// Default growth factor above which a monotone weighted curve is flagged.
pub const DEFAULT_VIOLATION_FACTOR: f64 = 4.0;

pub fn decay_check(curve: &DepCoefCurve, q: f64, factor: f64) -> Result<DecayReport> {
    let k = &curve.k_grid;
    if k.len() < 4 || (k[k.len() - 1] as f64) < 8.0 * k[0] as f64 {
        return Err(Error::InsufficientGrid(format!(
            "decay check needs >= 4 points spanning a factor >= 8, got {k:?}"
        )));
    }
    let pos: Vec<(f64, f64)> = k
        .iter()
        .zip(&curve.values)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&k, &v)| ((k as f64).ln(), v.ln()))
        .collect();
    if pos.is_empty() {
        return Ok(DecayReport { q, slope: f64::NAN, slope_se: f64::NAN, ratio: f64::NAN, degenerate: true, violation: false });
    }
    let (slope, slope_se) = if pos.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = pos.iter().copied().unzip();
        let f = stats::ols(&x, &y);
        (f.slope, f.slope_se)
    } else {
        (f64::NAN, f64::NAN)
    };
    let e = q / curve.p - 1.0;
    let upper = k.len() / 2;
    let weighted: Vec<f64> = k[upper..].iter().zip(&curve.values[upper..]).map(|(&k, &v)| (k as f64).powf(e) * v).collect();
    let max = weighted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = weighted.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if min > 0.0 { max / min } else { f64::INFINITY };
    let monotone = weighted.windows(2).all(|w| w[1] >= w[0]);
    let violation = monotone && ratio > factor;
    Ok(DecayReport { q, slope, slope_se, ratio, degenerate: false, violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{EnsembleSpec, ScalarLaw};

    fn synthetic(values: Vec<f64>) -> DepCoefCurve {
        let k_grid: Vec<u64> = (0..values.len()).map(|i| 1 << i).collect();
        DepCoefCurve { p: 1.0, se: vec![0.0; values.len()], k_grid, values, pair_count: 1, replicates: 100, strategy: "synthetic".into() }
    }

    #[test]
    fn synthetic_power_decay() {
        let c = synthetic((0..7).map(|i| 3.0 / ((1u64 << i) as f64).powi(2)).collect());
        let r = decay_check(&c, 3.0, DEFAULT_VIOLATION_FACTOR).unwrap();
        assert!((r.slope + 2.0).abs() < 1e-12);
        assert!(!r.violation);
        assert!((r.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_curve_flags() {
        let r = decay_check(&synthetic(vec![0.5; 7]), 3.0, DEFAULT_VIOLATION_FACTOR).unwrap();
        assert!(r.violation);
        assert!(r.slope.abs() < 1e-12);
    }

    #[test]
    fn short_grid_is_rejected() {
        assert!(matches!(decay_check(&synthetic(vec![1.0; 3]), 3.0, 4.0), Err(Error::InsufficientGrid(_))));
    }

    #[test]
    fn identical_starts_contribute_zero() {
        let ens = EnsembleSpec::rot_diag_rot(3, 3.5, 1.0).build().unwrap();
        let s = StationarySampler::new(ens, 20).unwrap();
        let x = ProjectivePoint::new(&[1.0, 2.0, 2.0]).unwrap();
        let strat = PairStrategy { nu_pairs: 0, orthogonal_pairs: 0, pinned: vec![(x.clone(), x)] };
        let c = estimate_delta(&s, 1.0, &[1, 2, 4, 8], &strat, 100, Seed(1), &BatchOptions::default()).unwrap();
        assert!(c.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_family_vanishes() {
        let law = ScalarLaw::Exponential { rate: 1.0, shift: -0.5 };
        let ens = EnsembleSpec::scalar_gauge(2, law).build().unwrap();
        let s = StationarySampler::new(ens, 5).unwrap();
        let strat = PairStrategy { nu_pairs: 2, orthogonal_pairs: 2, pinned: vec![] };
        for p in [1.0, 2.0, 3.5] {
            let c = estimate_delta(&s, p, &[1, 2, 4, 8], &strat, 100, Seed(2), &BatchOptions::default()).unwrap();
            assert!(c.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn orthogonal_pairs_are_orthogonal() {
        let mut rng = Seed(1).stream(Stage::Oracle, 0);
        for d in 2..5 {
            let x = ProjectivePoint::uniform(d, &mut rng);
            let y = orthogonal_to(&x, &mut rng);
            assert!(crate::projective::alignment(&x, &y) < 1e-12);
        }
    }

    #[test]
    fn jensen_across_orders() {
        let ens = EnsembleSpec::rot_diag_rot(2, 4.5, 1.0).build().unwrap();
        let s = StationarySampler::new(ens, 20).unwrap();
        let strat = PairStrategy { nu_pairs: 3, orthogonal_pairs: 3, pinned: vec![] };
        let curves = estimate_delta_multi(&s, &[1.0, 2.0, 3.0], &[1, 2, 4], &strat, 200, Seed(3), &BatchOptions::default()).unwrap();
        for ki in 0..3 {
            assert!(curves[0].values[ki] <= curves[1].values[ki] * (1.0 + 1e-12));
            assert!(curves[1].values[ki] <= curves[2].values[ki] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn argument_validation() {
        let ens = EnsembleSpec::orthogonal_only(2).build().unwrap();
        let s = StationarySampler::new(ens, 5).unwrap();
        let o = BatchOptions::default();
        let st = PairStrategy::default();
        assert!(estimate_delta(&s, 0.5, &[1, 2], &st, 100, Seed(1), &o).is_err());
        assert!(estimate_delta(&s, 1.0, &[1, 2], &st, 10, Seed(1), &o).is_err());
        assert!(estimate_delta(&s, 1.0, &[0, 2], &st, 100, Seed(1), &o).is_err());
    }
}
