//! Path engine for the left random walk A_n = ε_n ⋯ ε_1.
//!
//! The vector observable is carried as a unit direction plus the accumulated
//! cocycle, so log‖A_n x‖ = Σ σ(ε_k, W_{k−1}) holds by construction. The
//! matrix is carried as A_k = e^{c_k} 2^{e_k} M_k where the power-of-two
//! exponent keeps the largest entry of M_k in [1/2, 1). Rescaling by powers
//! of two is exact in floating point, so the renormalization cadence does not
//! change M_k at all.

use rayon::prelude::*;

use crate::ensemble::{rot_diag_rot_log_norm, Ensemble, Family, GroupElement};
use crate::error::{Error, Result};
use crate::linalg;
use crate::projective::{self, ProjectivePoint, StationarySampler};
use crate::rng::{RngStream, Seed, Stage};
use crate::stats::Moments;

/// Default limit on the number of matrix steps of a single batch.
pub const DEFAULT_STEP_BUDGET: u128 = 10_000_000_000;

/// Running state of one path.
#[derive(Clone, Debug)]
pub struct WalkAccumulator {
    d: usize,
    vec_dir: Vec<f64>,
    vec_log: f64,
    mat_unit: Vec<f64>,
    mat_log: f64,
    mat_exp2: i64,
    step: u64,
    renorm_every: u64,
    tmp: Vec<f64>,
    tmp_mat: Vec<f64>,
}

impl WalkAccumulator {
    pub fn new(start: &ProjectivePoint) -> Self {
        let d = start.dim();
        WalkAccumulator {
            d,
            vec_dir: start.direction().to_vec(),
            vec_log: 0.0,
            mat_unit: linalg::SquareMatrix::identity(d).as_slice().to_vec(),
            mat_log: 0.0,
            mat_exp2: 0,
            step: 0,
            renorm_every: 1,
            tmp: vec![0.0; d],
            tmp_mat: vec![0.0; d * d],
        }
    }

    /// Rescale the matrix factor only every `k` steps (extreme magnitudes
    /// are always rescaled).
    pub fn with_renorm_every(mut self, k: u64) -> Self {
        self.renorm_every = k.max(1);
        self
    }

    /// Multiplies `g` on the left and returns the raw increment σ(g, W_{k−1}).
    #[inline]
    pub fn push(&mut self, g: &GroupElement) -> f64 {
        let sigma = projective::step_in_place(g, &mut self.vec_dir, &mut self.tmp);
        self.vec_log += sigma;
        linalg::mat_mul_into(self.d, g.unit_matrix(), &self.mat_unit, &mut self.tmp_mat);
        std::mem::swap(&mut self.mat_unit, &mut self.tmp_mat);
        self.mat_log += g.log_scale();
        self.step += 1;
        if self.step.is_multiple_of(self.renorm_every) {
            self.rescale();
        } else {
            let m = self.max_abs();
            if !(1e-100..=1e100).contains(&m) {
                self.rescale();
            }
        }
        sigma
    }

    #[inline]
    fn max_abs(&self) -> f64 {
        self.mat_unit.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[inline]
    fn rescale(&mut self) {
        let m = self.max_abs();
        if m == 0.0 || !m.is_finite() {
            return;
        }
        let e = binary_exponent(m);
        // two factors so that 2^{-e} cannot overflow for subnormal m
        let h = -e / 2;
        let (s1, s2) = ((h as f64).exp2(), ((-e - h) as f64).exp2());
        self.mat_unit.iter_mut().for_each(|v| *v = *v * s1 * s2);
        self.mat_exp2 += e;
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// log‖A_k x₀‖.
    pub fn log_vec_norm(&self) -> f64 {
        self.vec_log
    }

    /// Accumulated log-scale of the matrix factorization A_k = e^{c} M.
    pub fn matrix_log_scale(&self) -> f64 {
        self.mat_log + self.mat_exp2 as f64 * std::f64::consts::LN_2
    }

    /// The factor M with A_k = e^{matrix_log_scale} M.
    pub fn matrix_factor(&self) -> &[f64] {
        &self.mat_unit
    }

    /// log‖A_k‖.
    pub fn log_mat_norm(&self) -> f64 {
        self.matrix_log_scale() + linalg::operator_norm(self.d, &self.mat_unit).ln()
    }

    /// log ρ(A_k).
    pub fn log_spec_radius(&self) -> f64 {
        self.matrix_log_scale() + linalg::spectral_radius(self.d, &self.mat_unit).ln()
    }

    /// W_k.
    pub fn direction(&self) -> ProjectivePoint {
        ProjectivePoint::from_unit(self.vec_dir.clone())
    }

    /// log‖A_k u‖ for a unit vector u, computed from the matrix factor.
    pub fn log_norm_applied(&self, u: &[f64]) -> f64 {
        let mut y = vec![0.0; self.d];
        linalg::mat_vec_into(self.d, &self.mat_unit, u, &mut y);
        self.matrix_log_scale() + linalg::norm(&y).ln()
    }

    fn record(&self) -> PathResult {
        PathResult {
            n: self.step,
            log_vec_norm: self.log_vec_norm(),
            log_mat_norm: self.log_mat_norm(),
            log_spec_radius: self.log_spec_radius(),
            increments: None,
        }
    }
}

/// e with m = f·2^e, f in [1/2, 1), for finite positive m.
fn binary_exponent(m: f64) -> i64 {
    let raw = ((m.to_bits() >> 52) & 0x7ff) as i64;
    if raw == 0 {
        binary_exponent(m * 2f64.powi(200)) - 200
    } else {
        raw - 1022
    }
}

/// Observables of one path at one length.
#[derive(Clone, Debug, PartialEq)]
pub struct PathResult {
    pub n: u64,
    pub log_vec_norm: f64,
    pub log_mat_norm: f64,
    pub log_spec_radius: f64,
    /// Raw increments σ(ε_k, W_{k−1}), k = 1..n (uncentered).
    pub increments: Option<Vec<f64>>,
}

/// One path of length n from `start`.
pub fn run_path(ens: &Ensemble, n: u64, start: &ProjectivePoint, rng: &mut RngStream, record_increments: bool) -> Result<PathResult> {
    let mut out = run_path_checkpoints(ens, &[n], start, rng, record_increments)?;
    Ok(out.pop().expect("one checkpoint"))
}

/// One path recorded at every length in the ascending `grid`. The increments
/// (if requested) are attached to the last checkpoint.
pub fn run_path_checkpoints(
    ens: &Ensemble,
    grid: &[u64],
    start: &ProjectivePoint,
    rng: &mut RngStream,
    record_increments: bool,
) -> Result<Vec<PathResult>> {
    check_grid(grid)?;
    if start.dim() != ens.dim() {
        return Err(Error::InvalidArgument("start direction has the wrong dimension".into()));
    }
    let mut acc = WalkAccumulator::new(start);
    let mut g = GroupElement::identity(ens.dim());
    let last = grid.last().copied().unwrap_or(0);
    let mut incs = if record_increments { Some(Vec::with_capacity(last as usize)) } else { None };
    let mut out = Vec::with_capacity(grid.len());
    let mut next = 0;
    while next < grid.len() && grid[next] == 0 {
        out.push(acc.record());
        next += 1;
    }
    while next < grid.len() {
        ens.sample_into(rng, &mut g)?;
        let s = acc.push(&g);
        if let Some(v) = incs.as_mut() {
            v.push(s);
        }
        while next < grid.len() && grid[next] == acc.step() {
            out.push(acc.record());
            next += 1;
        }
    }
    if let (Some(v), Some(r)) = (incs, out.last_mut()) {
        r.increments = Some(v);
    }
    Ok(out)
}

pub fn check_grid(grid: &[u64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("n_grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n_grid must be strictly ascending".into()));
    }
    Ok(())
}

/// The three recorded log-observables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Observable {
    VecNorm,
    MatNorm,
    SpecRadius,
}

impl Observable {
    pub const ALL: [Observable; 3] = [Observable::VecNorm, Observable::MatNorm, Observable::SpecRadius];

    pub fn name(self) -> &'static str {
        match self {
            Observable::VecNorm => "vec_norm",
            Observable::MatNorm => "mat_norm",
            Observable::SpecRadius => "spec_radius",
        }
    }
}

/// Observables of many paths at every grid length.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    pub n_grid: Vec<u64>,
    pub paths: usize,
    /// values[obs][n_idx * paths + path]
    values: [Vec<f64>; 3],
}

impl SampleMatrix {
    pub fn from_columns(n_grid: Vec<u64>, paths: usize, values: [Vec<f64>; 3]) -> Result<Self> {
        for v in &values {
            if v.len() != n_grid.len() * paths {
                return Err(Error::InvalidArgument("sample matrix has inconsistent shape".into()));
            }
        }
        Ok(SampleMatrix { n_grid, paths, values })
    }

    fn obs_index(obs: Observable) -> usize {
        match obs {
            Observable::VecNorm => 0,
            Observable::MatNorm => 1,
            Observable::SpecRadius => 2,
        }
    }

    /// All paths' values of `obs` at grid index `n_idx`.
    pub fn column(&self, obs: Observable, n_idx: usize) -> &[f64] {
        let v = &self.values[Self::obs_index(obs)];
        &v[n_idx * self.paths..(n_idx + 1) * self.paths]
    }

    pub fn value(&self, obs: Observable, n_idx: usize, path: usize) -> f64 {
        self.column(obs, n_idx)[path]
    }

    pub fn n_index(&self, n: u64) -> Option<usize> {
        self.n_grid.iter().position(|&m| m == n)
    }

    /// Mean/variance summary of one column, merged in path order.
    pub fn summary(&self, obs: Observable, n_idx: usize) -> Moments {
        Moments::from_slice(self.column(obs, n_idx))
    }
}

/// Settings shared by batch runs.
#[derive(Clone, Debug)]
pub struct BatchOptions {
    pub workers: usize,
    pub step_budget: u128,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions { workers: 1, step_budget: DEFAULT_STEP_BUDGET }
    }
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Checks `requested` matrix steps against the budget.
pub fn check_budget(requested: u128, budget: u128) -> Result<()> {
    if requested > budget {
        Err(Error::Budget { requested, budget })
    } else {
        Ok(())
    }
}

/// `paths` independent paths, each started from a ν̂ draw taken with stream
/// (seed, Start, i) and driven by stream (seed, Path, i).
pub fn run_stationary_batch(
    sampler: &StationarySampler,
    n_grid: &[u64],
    paths: usize,
    seed: Seed,
    opts: &BatchOptions,
) -> Result<SampleMatrix> {
    check_grid(n_grid)?;
    if paths == 0 {
        return Err(Error::InvalidArgument("paths must be >= 1".into()));
    }
    let burn = if sampler.pool().is_some() { 0 } else { sampler.burn_in() as u128 };
    let last = *n_grid.last().expect("non-empty") as u128;
    check_budget(paths as u128 * (last + burn), opts.step_budget)?;
    let ens = sampler.ensemble();
    let rows: Result<Vec<Vec<PathResult>>> = with_workers(opts.workers, || {
        (0..paths)
            .into_par_iter()
            .map(|i| {
                let start = sampler.sample(&mut seed.stream(Stage::Start, i as u64))?;
                run_path_checkpoints(ens, n_grid, &start, &mut seed.stream(Stage::Path, i as u64), false)
            })
            .collect()
    })?;
    let rows = rows?;
    let k = n_grid.len();
    let mut values = [vec![0.0; k * paths], vec![0.0; k * paths], vec![0.0; k * paths]];
    for (p, row) in rows.iter().enumerate() {
        for (j, r) in row.iter().enumerate() {
            values[0][j * paths + p] = r.log_vec_norm;
            values[1][j * paths + p] = r.log_mat_norm;
            values[2][j * paths + p] = r.log_spec_radius;
        }
    }
    SampleMatrix::from_columns(n_grid.to_vec(), paths, values)
}

/// Like [`run_stationary_batch`] but keeps only log‖A_n x‖, which allows
/// very large path counts without storing per-path rows.
pub fn run_vec_norm_batch(
    sampler: &StationarySampler,
    n_grid: &[u64],
    paths: usize,
    seed: Seed,
    opts: &BatchOptions,
) -> Result<Vec<Vec<f64>>> {
    check_grid(n_grid)?;
    if paths == 0 {
        return Err(Error::InvalidArgument("paths must be >= 1".into()));
    }
    let burn = if sampler.pool().is_some() { 0 } else { sampler.burn_in() as u128 };
    let last = *n_grid.last().expect("non-empty");
    check_budget(paths as u128 * (last as u128 + burn), opts.step_budget)?;
    let ens = sampler.ensemble();
    let k = n_grid.len();
    let flat: Result<Vec<f64>> = with_workers(opts.workers, || {
        (0..paths)
            .into_par_iter()
            .flat_map_iter(|i| {
                let r = vec_norm_path(ens, sampler, n_grid, seed, i as u64);
                let v: Vec<Result<f64>> = match r {
                    Ok(v) => v.into_iter().map(Ok).collect(),
                    Err(e) => vec![Err(e)],
                };
                v.into_iter()
            })
            .collect()
    })?;
    let flat = flat?;
    let mut cols = vec![Vec::with_capacity(paths); k];
    for chunk in flat.chunks_exact(k) {
        for (j, v) in chunk.iter().enumerate() {
            cols[j].push(*v);
        }
    }
    Ok(cols)
}

fn vec_norm_path(ens: &Ensemble, sampler: &StationarySampler, n_grid: &[u64], seed: Seed, i: u64) -> Result<Vec<f64>> {
    let start = sampler.sample(&mut seed.stream(Stage::Start, i))?;
    let mut rng = seed.stream(Stage::Path, i);
    if let (2, Family::RotDiagRot { tail_index, scale }) = (ens.dim(), &ens.spec().family) {
        return rot_diag_rot_2_path(*tail_index, *scale, start.direction(), n_grid, &mut rng);
    }
    let d = ens.dim();
    let mut g = GroupElement::identity(d);
    let mut x = start.direction().to_vec();
    let mut tmp = vec![0.0; d];
    let mut total = 0.0;
    let mut out = Vec::with_capacity(n_grid.len());
    let mut step = 0u64;
    for &n in n_grid {
        while step < n {
            ens.sample_into(&mut rng, &mut g)?;
            total += projective::step_in_place(&g, &mut x, &mut tmp);
            step += 1;
        }
        out.push(total);
    }
    Ok(out)
}

const ANGLE_BITS: u32 = 10;

fn angle_table() -> &'static [(f64, f64)] {
    static TABLE: std::sync::OnceLock<Vec<(f64, f64)>> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        (0..1usize << ANGLE_BITS)
            .map(|k| (std::f64::consts::TAU * k as f64 / (1u64 << ANGLE_BITS) as f64).sin_cos())
            .collect()
    })
}

/// (sin θ, cos θ) for θ = 2π·w/2⁶⁴: the top bits pick a table entry and the
/// remainder b < 2π/1024 enters through Taylor polynomials accurate to
/// a few ulps.
#[inline]
fn table_angle(w: u64) -> (f64, f64) {
    let (s0, c0) = angle_table()[(w >> (64 - ANGLE_BITS)) as usize];
    let frac = ((w << ANGLE_BITS) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let b = frac * (std::f64::consts::TAU / (1u64 << ANGLE_BITS) as f64);
    let b2 = b * b;
    let sb = b * (1.0 - b2 / 6.0 * (1.0 - b2 / 20.0 * (1.0 - b2 / 42.0)));
    let cb = 1.0 - b2 / 2.0 * (1.0 - b2 / 12.0 * (1.0 - b2 / 30.0));
    (s0 * cb + c0 * sb, c0 * cb - s0 * sb)
}

/// log‖A_n x‖ at each n of the grid for the d = 2 rot_diag_rot walk.
///
/// ε_k = R_k D_k R'_k with independent Haar rotations, so R'_{k+1} R_k is
/// again a Haar rotation independent of everything else and a single angle
/// per step gives the same law of the norm sequence.
pub fn rot_diag_rot_2_path(tail_index: f64, scale: f64, start: &[f64], n_grid: &[u64], rng: &mut RngStream) -> Result<Vec<f64>> {
    // x is left unnormalized: log‖A_n x‖ = Σ L_k + ln‖x_n‖ + e·ln 2 where
    // the power-of-two rescalings are exact and counted in e
    let mut x = (start[0], start[1]);
    let mut log_sum = 0.0;
    let mut exp2 = 0i64;
    let mut out = Vec::with_capacity(n_grid.len());
    let mut step = 0u64;
    for &n in n_grid {
        while step < n {
            let (s, c) = table_angle(rng.bits());
            let l = rot_diag_rot_log_norm(rng, tail_index, scale)?;
            if l > 100.0 {
                let h = x.0.hypot(x.1);
                log_sum += h.ln();
                x = (x.0 / h, x.1 / h);
            }
            let y = (c * x.0 - s * x.1, (-2.0 * l).exp() * (s * x.0 + c * x.1));
            log_sum += l;
            let m = y.0.abs().max(y.1.abs());
            x = if m < 1e-100 {
                let e = binary_exponent(m);
                exp2 += e;
                let f = (-e as f64).exp2();
                (y.0 * f, y.1 * f)
            } else {
                y
            };
            step += 1;
        }
        out.push(log_sum + x.0.hypot(x.1).ln() + exp2 as f64 * std::f64::consts::LN_2);
    }
    Ok(out)
}
