//! The experiment commands.

use std::path::{Path, PathBuf};

use glwalk_core::blocking::{
    block_moment_growth, conditional_variance_concentration, r1_moment_scaling, step1_error, structural_checks, ScalingReport,
    StructureOptions,
};
use glwalk_core::depcoef::{decay_check, estimate_delta_multi, DEFAULT_VIOLATION_FACTOR};
use glwalk_core::estimators::{
    self, batch_means_from_columns, default_batch_grid, ks_distance, ks_worst_start, rate_fit, rate_ratio, variance_batch_means,
    variance_series,
};
use glwalk_core::io::{fmt_f64, kolmogorov_from_table, kolmogorov_table, samples_from_table, samples_table, Table, BE_CURVE_KIND, SAMPLES_KIND};
use glwalk_core::projective::invariance_test;
use glwalk_core::walk::{run_vec_norm_batch, with_workers};
use glwalk_core::{
    run_stationary_batch, BatchOptions, BlockLayout, Error, KolmogorovReport, Observable, PairStrategy, ProjectivePoint, RateModel,
    SampleMatrix, Seed, Stage, StationarySampler, VarianceEstimate,
};

use crate::config::{require, BeCurveBlock, ExperimentConfig, LambdaSpec, VarianceChoice};
use crate::output::{sha256_hex, unix_now, Manifest, OutputDir};
use crate::plot::{self, PlotKind};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Lyapunov,
    Variance,
    BeCurve,
    RateFit,
    Depcoef,
    Blocks,
    Gap,
    Plot,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Lyapunov,
        Command::Variance,
        Command::BeCurve,
        Command::RateFit,
        Command::Depcoef,
        Command::Blocks,
        Command::Gap,
        Command::Plot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Lyapunov => "lyapunov",
            Command::Variance => "variance",
            Command::BeCurve => "be-curve",
            Command::RateFit => "rate-fit",
            Command::Depcoef => "depcoef",
            Command::Blocks => "blocks",
            Command::Gap => "gap",
            Command::Plot => "plot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Command::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Everything a run needs besides the config file contents.
#[derive(Clone, Debug, Default)]
pub struct RunArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    /// Value of GLWALK_BUDGET, if set.
    pub budget_env: Option<String>,
    pub input: Option<PathBuf>,
    pub kind: Option<String>,
    pub q: Option<f64>,
}

pub const DEFAULT_OUTPUT_DIR: &str = "glwalk-out";
/// Block-count factor κ in N = ⌊κ log n⌋ when neither m nor N is given.
pub const DEFAULT_KAPPA: f64 = 4.0;

struct Ctx {
    cfg: ExperimentConfig,
    seed: Seed,
    opts: BatchOptions,
    out: OutputDir,
    sampler: Option<StationarySampler>,
}

impl Ctx {
    fn sampler(&mut self) -> Result<&StationarySampler, CliError> {
        if self.sampler.is_none() {
            let ens = self.cfg.ensemble()?.build()?;
            let mut s = StationarySampler::new(ens, self.cfg.burn_in)?;
            if let Some(size) = self.cfg.pool {
                if size == 0 {
                    return Err(CliError::config("pool must be >= 1 when given"));
                }
                let seed = self.seed.derive(Stage::Pool, 0);
                s = with_workers(self.opts.workers, || s.with_pool(size, seed))??;
            }
            self.sampler = Some(s);
        }
        Ok(self.sampler.as_ref().expect("built above"))
    }

    /// Declared moment order: the explicit value, else the ensemble's.
    fn q(&self, explicit: Option<f64>) -> Option<f64> {
        explicit.or_else(|| self.cfg.ensemble.as_ref().and_then(|e| e.declared_q))
    }
}

fn positive(v: usize, what: &str) -> Result<usize, CliError> {
    if v == 0 {
        return Err(CliError::config(format!("{what} must be >= 1")));
    }
    Ok(v)
}

fn b(v: bool) -> String {
    (v as u8).to_string()
}

/// Runs one command and writes its manifest; returns the manifest path.
pub fn run(command: Command, args: &RunArgs) -> Result<PathBuf, CliError> {
    let start = unix_now();
    let (cfg, text) = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if command == Command::Plot => (ExperimentConfig::parse("{}")?, String::new()),
        None => return Err(CliError::config("--config is required")),
    };
    let seed = args.seed.or(cfg.seed);
    if seed.is_none() && command != Command::Plot {
        return Err(CliError::config("a seed is required (config `seed` or --seed)"));
    }
    let workers = positive(args.workers.or(cfg.workers).unwrap_or(1), "workers")?;
    let budget = cfg.budget(args.budget_env.as_deref())?;
    let out_dir = args.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let out = OutputDir::create(&out_dir)?;
    let mut ctx = Ctx {
        cfg,
        seed: Seed(seed.unwrap_or(0)),
        opts: BatchOptions { workers, step_budget: budget },
        out,
        sampler: None,
    };
    match command {
        Command::Lyapunov => lyapunov(&mut ctx)?,
        Command::Variance => variance(&mut ctx)?,
        Command::BeCurve => {
            be_curve(&mut ctx)?;
        }
        Command::RateFit => rate_fit_cmd(&mut ctx, args)?,
        Command::Depcoef => depcoef(&mut ctx)?,
        Command::Blocks => blocks(&mut ctx)?,
        Command::Gap => gap(&mut ctx)?,
        Command::Plot => plot_cmd(&mut ctx, args)?,
    }
    let manifest = Manifest {
        command: command.name().into(),
        config_sha256: sha256_hex(text.as_bytes()),
        code_version: env!("CARGO_PKG_VERSION").into(),
        seed,
        workers,
        budget: budget.to_string(),
        start_unix: start,
        end_unix: unix_now(),
        files: Vec::new(),
    };
    ctx.out.finish(manifest)
}

fn lyapunov(ctx: &mut Ctx) -> Result<(), CliError> {
    let block = require(&ctx.cfg.lyapunov, "lyapunov")?.clone();
    positive(block.paths, "lyapunov.paths")?;
    let (seed, opts) = (ctx.seed, ctx.opts.clone());
    let est = estimators::lyapunov(ctx.sampler()?, block.n, block.paths, seed, &opts)?;
    let mut t = Table::new("lyapunov", &["n", "paths", "burn", "lambda_hat", "se", "increment_lambda_hat", "increment_se", "seed"]);
    t.push(vec![
        est.n.to_string(),
        est.paths.to_string(),
        est.burn.to_string(),
        fmt_f64(est.value),
        fmt_f64(est.se),
        fmt_f64(est.increment_value),
        fmt_f64(est.increment_se),
        seed.0.to_string(),
    ]);
    ctx.out.write_table("lyapunov.csv", &t)?;
    if let Some(inv) = ctx.cfg.invariance.clone() {
        let burn = ctx.cfg.burn_in;
        let r = invariance_test(ctx.sampler()?, inv.draws, inv.level, seed.derive(Stage::Invariance, 0))?;
        let mut t = Table::new("invariance", &["burn_in", "draws", "statistic", "critical", "level", "pass"]);
        t.push(vec![burn.to_string(), r.draws.to_string(), fmt_f64(r.statistic), fmt_f64(r.critical), fmt_f64(r.level), b(r.pass)]);
        ctx.out.write_table("invariance.csv", &t)?;
    }
    Ok(())
}

/// λ̂ with its standard error and the path length it came from.
struct Lambda {
    value: f64,
    se: f64,
    run_length: Option<u64>,
}

fn resolve_lambda(ctx: &mut Ctx, spec: Option<&LambdaSpec>, min_run: Option<u64>, what: &str) -> Result<Lambda, CliError> {
    let spec = spec.ok_or_else(|| CliError::config(format!("{what} needs a lambda block")))?;
    let lam = match (&spec.value, &spec.estimate) {
        (Some(v), None) => Lambda { value: *v, se: spec.se.unwrap_or(f64::NAN), run_length: spec.run_length },
        (None, Some(est)) => {
            if spec.se.is_some() || spec.run_length.is_some() {
                return Err(CliError::config(format!("{what}.lambda: se and run_length come from the estimate")));
            }
            positive(est.paths, "lambda.estimate.paths")?;
            let (seed, opts) = (ctx.seed, ctx.opts.clone());
            let e = estimators::lyapunov(ctx.sampler()?, est.n, est.paths, seed, &opts)?;
            Lambda { value: e.value, se: e.se, run_length: Some(est.n) }
        }
        _ => return Err(CliError::config(format!("{what}.lambda needs exactly one of value or estimate"))),
    };
    if !lam.value.is_finite() {
        return Err(CliError::config(format!("{what}.lambda is not finite")));
    }
    if let Some(min) = min_run {
        match lam.run_length {
            None => return Err(CliError::config(format!("{what}.lambda.run_length is required (>= {min})"))),
            Some(r) if r < min => {
                return Err(CliError::config(format!("{what}.lambda comes from paths of length {r}; at least {min} is required")))
            }
            _ => {}
        }
    }
    Ok(lam)
}

fn variance_rows(t: &mut Table, prof: &mut Table, v: &VarianceEstimate, paths: usize, lambda: f64) {
    t.push(vec![
        v.method.name().into(),
        fmt_f64(v.value),
        fmt_f64(v.se),
        fmt_f64(v.s_hat()),
        v.truncation_lag.map_or(String::new(), |l| l.to_string()),
        b(v.degenerate),
        paths.to_string(),
        fmt_f64(lambda),
    ]);
    for &(x, val, se) in &v.profile {
        prof.push(vec![v.method.name().into(), fmt_f64(x), fmt_f64(val), fmt_f64(se)]);
    }
}

fn variance(ctx: &mut Ctx) -> Result<(), CliError> {
    let block = require(&ctx.cfg.variance, "variance")?.clone();
    positive(block.paths, "variance.paths")?;
    let (seed, opts) = (ctx.seed, ctx.opts.clone());
    let mut t = Table::new("variance", &["method", "value", "se", "s_hat", "truncation_lag", "degenerate", "paths", "lambda_hat"]);
    let mut prof = Table::new("variance_profile", &["method", "x", "value", "se"]);
    if block.method != VarianceChoice::CovarianceSeries {
        let grid = block.n_grid.clone().unwrap_or_else(default_batch_grid);
        let v = variance_batch_means(ctx.sampler()?, &grid, block.paths, seed, &opts)?;
        variance_rows(&mut t, &mut prof, &v, block.paths, f64::NAN);
    }
    if block.method != VarianceChoice::BatchMeans {
        let lam = resolve_lambda(ctx, block.lambda.as_ref(), None, "variance")?;
        let paths = positive(block.series_paths.unwrap_or(block.paths), "variance.series_paths")?;
        let v = variance_series(ctx.sampler()?, block.length, paths, lam.value, block.max_lag, seed, &opts)?;
        variance_rows(&mut t, &mut prof, &v, paths, lam.value);
    }
    ctx.out.write_table("variance.csv", &t)?;
    ctx.out.write_table("variance_profile.csv", &prof)?;
    Ok(())
}

fn parse_observables(names: &[String]) -> Result<(Vec<Observable>, bool), CliError> {
    let mut obs = Vec::new();
    let mut worst = false;
    for n in names {
        match n.as_str() {
            "vec_norm_worst_start" => worst = true,
            s => match Observable::ALL.into_iter().find(|o| o.name() == s) {
                Some(o) if !obs.contains(&o) => obs.push(o),
                Some(_) => {}
                None => return Err(CliError::config(format!("unknown observable {s:?}"))),
            },
        }
    }
    if obs.is_empty() && !worst {
        return Err(CliError::config("be_curve.observables is empty"));
    }
    Ok((obs, worst))
}

/// Grid columns per observable; the vec_norm-only case avoids storing rows.
enum Columns {
    Full(SampleMatrix),
    VecNorm(Vec<Vec<f64>>),
}

impl Columns {
    fn column(&self, obs: Observable, j: usize) -> &[f64] {
        match self {
            Columns::Full(s) => s.column(obs, j),
            Columns::VecNorm(c) => {
                debug_assert_eq!(obs, Observable::VecNorm);
                &c[j]
            }
        }
    }
}

/// Runs the be_curve block, writing be_curve.csv, centering.csv and the
/// optional samples/per-start files. Returns the reports in file order.
fn be_curve(ctx: &mut Ctx) -> Result<Vec<KolmogorovReport>, CliError> {
    let block: BeCurveBlock = require(&ctx.cfg.be_curve, "be_curve")?.clone();
    let (mut obs, worst) = parse_observables(&block.observables)?;
    let (seed, opts) = (ctx.seed, ctx.opts.clone());
    let (n_grid, columns) = match &block.samples_input {
        Some(path) => {
            if block.n_grid.is_some() || block.paths.is_some() {
                return Err(CliError::config("be_curve.samples_input excludes n_grid and paths"));
            }
            let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            let s = samples_from_table(&Table::parse(&text, Some(SAMPLES_KIND))?)?;
            (s.n_grid.clone(), Columns::Full(s))
        }
        None => {
            let n_grid = block.n_grid.clone().ok_or_else(|| CliError::config("be_curve.n_grid is required"))?;
            let paths = positive(block.paths.ok_or_else(|| CliError::config("be_curve.paths is required"))?, "be_curve.paths")?;
            glwalk_core::walk::check_grid(&n_grid)?;
            let full = block.write_samples || obs.iter().any(|&o| o != Observable::VecNorm);
            let cols = if full {
                let s = run_stationary_batch(ctx.sampler()?, &n_grid, paths, seed, &opts)?;
                if block.write_samples {
                    ctx.out.write_table("samples.csv", &samples_table(&s))?;
                }
                Columns::Full(s)
            } else if obs.is_empty() {
                Columns::VecNorm(Vec::new())
            } else {
                Columns::VecNorm(run_vec_norm_batch(ctx.sampler()?, &n_grid, paths, seed, &opts)?)
            };
            (n_grid, cols)
        }
    };
    let max_n = *n_grid.last().expect("checked grid");
    let lam = resolve_lambda(ctx, Some(&block.lambda), Some(10 * max_n), "be_curve")?;
    let s_hat = match block.s_hat {
        Some(s) => s,
        None => {
            if obs.is_empty() {
                return Err(CliError::config("be_curve.s_hat is required when only the worst-start observable is requested"));
            }
            let cols: Vec<Vec<f64>> = (0..n_grid.len()).map(|j| columns.column(Observable::VecNorm, j).to_vec()).collect();
            if n_grid.len() < 2 {
                return Err(CliError::config("be_curve needs s_hat or at least two grid points"));
            }
            let v = batch_means_from_columns(&n_grid, &cols)?;
            if v.degenerate {
                return Err(Error::DegenerateVariance(format!("s_hat^2 = {} with se {}", v.value, v.se)).into());
            }
            v.s_hat()
        }
    };
    obs.sort_by_key(|o| Observable::ALL.iter().position(|a| a == o));
    let mut reports = Vec::new();
    for &o in &obs {
        let cols: Vec<&[f64]> = (0..n_grid.len()).map(|j| columns.column(o, j)).collect();
        reports.push(ks_distance(o.name(), &n_grid, &cols, lam.value, s_hat, seed)?);
    }
    if worst {
        let paths = match (block.worst_start_paths, block.paths) {
            (Some(p), _) | (None, Some(p)) => positive(p, "be_curve.worst_start_paths")?,
            (None, None) => return Err(CliError::config("be_curve.worst_start_paths is required")),
        };
        let (w, per) = ks_worst_start(ctx.sampler()?, &n_grid, paths, lam.value, s_hat, seed, &opts)?;
        let mut t = Table::new(BE_CURVE_KIND, &[]);
        for (j, mut r) in per.into_iter().enumerate() {
            r.observable = format!("vec_norm_start_{j}");
            let part = kolmogorov_table(&r);
            t.header = part.header;
            t.rows.extend(part.rows);
        }
        ctx.out.write_table("be_curve_starts.csv", &t)?;
        reports.push(w);
    }
    let mut t = Table::new(BE_CURVE_KIND, &[]);
    for r in &reports {
        let part = kolmogorov_table(r);
        t.header = part.header;
        t.rows.extend(part.rows);
    }
    ctx.out.write_table("be_curve.csv", &t)?;
    let mut c = Table::new("centering", &["n", "lambda_hat", "lambda_se", "run_length", "required_run_length", "shift_sd", "d_n_bias"]);
    for &n in &n_grid {
        // one SE of λ̂ moves the centered samples by se·√n, which moves
        // D_n by about φ(0)·se·√n/ŝ
        let shift = lam.se * (n as f64).sqrt();
        c.push(vec![
            n.to_string(),
            fmt_f64(lam.value),
            fmt_f64(lam.se),
            lam.run_length.map_or(String::new(), |r| r.to_string()),
            (10 * max_n).to_string(),
            fmt_f64(shift),
            fmt_f64(shift / (s_hat * (2.0 * std::f64::consts::PI).sqrt())),
        ]);
    }
    ctx.out.write_table("centering.csv", &c)?;
    Ok(reports)
}

fn rate_fit_cmd(ctx: &mut Ctx, args: &RunArgs) -> Result<(), CliError> {
    let block = require(&ctx.cfg.rate_fit, "rate_fit")?.clone();
    let input = args.input.clone().or(block.input.clone());
    let mut reports = match input {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
            kolmogorov_from_table(&Table::parse(&text, Some(BE_CURVE_KIND))?)?
        }
        None => be_curve(ctx)?,
    };
    if let Some(o) = &block.observable {
        reports.retain(|r| &r.observable == o);
        if reports.is_empty() {
            return Err(CliError::config(format!("no {o} rows to fit")));
        }
    }
    let q = ctx.q(args.q.or(block.q));
    let models: Vec<RateModel> = match &block.models {
        Some(names) => names
            .iter()
            .map(|n| RateModel::parse(n).ok_or_else(|| CliError::config(format!("unknown rate model {n:?}"))))
            .collect::<Result<_, _>>()?,
        None => {
            let mut m = vec![RateModel::PowerLaw, RateModel::PaperSqrtRate];
            match q {
                Some(q) if q > 3.0 && q < 4.0 => m.push(RateModel::PaperQ34Rate),
                Some(q) if q < 4.0 => m.push(RateModel::PaperQRate),
                _ => {}
            }
            m
        }
    };
    let mut t = Table::new(
        "rate_fit",
        &[
            "observable", "model", "q", "slope", "intercept", "r2", "ci_lo", "ci_hi", "free_slope", "free_ci_lo", "free_ci_hi", "rate_ratio",
            "points", "resamples",
        ],
    );
    for (ri, r) in reports.iter().enumerate() {
        for (mi, &m) in models.iter().enumerate() {
            let mq = match m {
                RateModel::PaperQRate | RateModel::PaperQ34Rate => {
                    q.ok_or_else(|| CliError::config(format!("model {} needs q (rate_fit.q or ensemble.declared_q)", m.name())))?
                }
                _ => q.unwrap_or(f64::NAN),
            };
            let seed = ctx.seed.derive(Stage::Bootstrap, (ri * RateModel::ALL.len() + mi) as u64);
            let f = rate_fit(r, m, mq, block.resamples, seed)?;
            let ratio = if m == RateModel::PowerLaw { f64::NAN } else { rate_ratio(r, m, mq) };
            t.push(vec![
                r.observable.clone(),
                m.name().into(),
                fmt_f64(mq),
                fmt_f64(f.slope),
                fmt_f64(f.intercept),
                fmt_f64(f.r2),
                fmt_f64(f.ci_lo),
                fmt_f64(f.ci_hi),
                fmt_f64(f.free_slope),
                fmt_f64(f.free_ci.0),
                fmt_f64(f.free_ci.1),
                fmt_f64(ratio),
                r.n_grid.len().to_string(),
                f.resamples.to_string(),
            ]);
        }
    }
    ctx.out.write_table("rate_fit.csv", &t)?;
    Ok(())
}

fn point(v: &[f64]) -> Result<ProjectivePoint, CliError> {
    ProjectivePoint::new(v).map_err(|e| CliError::config(format!("pinned direction: {e}")))
}

fn depcoef(ctx: &mut Ctx) -> Result<(), CliError> {
    let block = require(&ctx.cfg.depcoef, "depcoef")?.clone();
    let strategy = match &block.pair_strategy {
        None => PairStrategy::default(),
        Some(s) => PairStrategy {
            nu_pairs: s.nu_pairs,
            orthogonal_pairs: s.orthogonal_pairs,
            pinned: s.pinned.iter().map(|[x, y]| Ok((point(x)?, point(y)?))).collect::<Result<_, CliError>>()?,
        },
    };
    let (seed, opts) = (ctx.seed, ctx.opts.clone());
    let curves = estimate_delta_multi(ctx.sampler()?, &block.p, &block.k_grid, &strategy, block.replicates, seed, &opts)?;
    let mut t = Table::new("depcoef", &["p", "k", "delta_hat", "se", "pair_strategy", "pairs", "replicates"]);
    for c in &curves {
        for (i, &k) in c.k_grid.iter().enumerate() {
            t.push(vec![
                fmt_f64(c.p),
                k.to_string(),
                fmt_f64(c.values[i]),
                fmt_f64(c.se[i]),
                c.strategy.clone(),
                c.pair_count.to_string(),
                c.replicates.to_string(),
            ]);
        }
    }
    ctx.out.write_table("depcoef.csv", &t)?;
    if let Some(q) = block.q {
        let factor = block.violation_factor.unwrap_or(DEFAULT_VIOLATION_FACTOR);
        let mut d = Table::new("depcoef_decay", &["p", "q", "slope", "slope_se", "ratio", "factor", "degenerate", "violation"]);
        for c in &curves {
            let r = decay_check(c, q, factor)?;
            d.push(vec![
                fmt_f64(c.p),
                fmt_f64(q),
                fmt_f64(r.slope),
                fmt_f64(r.slope_se),
                fmt_f64(r.ratio),
                fmt_f64(factor),
                b(r.degenerate),
                b(r.violation),
            ]);
        }
        ctx.out.write_table("depcoef_decay.csv", &d)?;
    }
    Ok(())
}

fn gap(ctx: &mut Ctx) -> Result<(), CliError> {
    let block = require(&ctx.cfg.gap, "gap")?.clone();
    positive(block.paths, "gap.paths")?;
    let (seed, opts) = (ctx.seed, ctx.opts.clone());
    let r = estimators::bougerol_gap(ctx.sampler()?, &block.n_grid, block.paths, block.j_nu, seed, &opts)?;
    let mut t = Table::new("gap", &["n", "max_gap", "mean_gap", "min_gap", "paths", "j_nu", "trend_ratio"]);
    for (i, &n) in r.n_grid.iter().enumerate() {
        t.push(vec![
            n.to_string(),
            fmt_f64(r.max_gap[i]),
            fmt_f64(r.mean_gap[i]),
            fmt_f64(r.min_gap[i]),
            r.paths.to_string(),
            r.j_nu.to_string(),
            fmt_f64(r.trend_ratio),
        ]);
    }
    ctx.out.write_table("gap.csv", &t)?;
    Ok(())
}

fn scaling_rows(t: &mut Table, r: &ScalingReport) {
    for (i, &m) in r.m_grid.iter().enumerate() {
        t.push(vec![
            r.kind.clone(),
            fmt_f64(r.order),
            m.to_string(),
            fmt_f64(r.values[i]),
            fmt_f64(r.se[i]),
            fmt_f64(r.slope),
            fmt_f64(r.ci_lo),
            fmt_f64(r.ci_hi),
            fmt_f64(r.ceiling),
            b(r.within_ceiling()),
            b(r.degenerate),
            r.paths.to_string(),
            r.j_nu.to_string(),
            r.j_c.to_string(),
        ]);
    }
}

fn blocks(ctx: &mut Ctx) -> Result<(), CliError> {
    let block = require(&ctx.cfg.blocks, "blocks")?.clone();
    if block.r1.is_none() && block.growth.is_none() && block.condvar.is_none() && block.structure.is_none() && block.step1.is_none() {
        return Err(CliError::config("blocks needs at least one of r1, growth, condvar, structure, step1"));
    }
    let needs_lambda = block.growth.is_some() || block.structure.is_some() || block.step1.is_some();
    let lam = if needs_lambda { Some(resolve_lambda(ctx, block.lambda.as_ref(), None, "blocks")?.value) } else { None };
    let (seed, opts) = (ctx.seed, ctx.opts.clone());
    let sub = |i: u64| seed.derive(Stage::Blocking, i);
    let header = [
        "kind", "order", "m", "value", "se", "slope", "ci_lo", "ci_hi", "ceiling", "within_ceiling", "degenerate", "paths", "j_nu", "j_c",
    ];
    let mut scaling = Table::new("scaling", &header);
    if let Some(r1) = &block.r1 {
        let r = r1_moment_scaling(ctx.sampler()?, r1.p, r1.q, &r1.m_grid, r1.paths, r1.j_nu, r1.j_c, sub(1), &opts)?;
        scaling_rows(&mut scaling, &r);
    }
    if let Some(g) = &block.growth {
        let r = block_moment_growth(ctx.sampler()?, g.q, &g.m_grid, g.paths, lam.expect("resolved"), sub(2), &opts)?;
        scaling_rows(&mut scaling, &r);
    }
    if !scaling.rows.is_empty() {
        ctx.out.write_table("blocks_scaling.csv", &scaling)?;
    }
    if let Some(cv) = &block.condvar {
        let r = conditional_variance_concentration(ctx.sampler()?, &cv.m_grid, cv.outer, cv.inner, cv.j_nu, sub(3), &opts)?;
        let mut t = Table::new(
            "condvar",
            &["m", "outer", "inner", "j_nu", "l1", "l1_se", "noise_floor", "l2_debiased", "resolved", "slope_l1", "slope_l2", "ceiling"],
        );
        for (i, &m) in r.m_grid.iter().enumerate() {
            t.push(vec![
                m.to_string(),
                r.outer.to_string(),
                r.inner.to_string(),
                r.j_nu.to_string(),
                fmt_f64(r.l1[i]),
                fmt_f64(r.l1_se[i]),
                fmt_f64(r.noise_floor[i]),
                fmt_f64(r.l2_debiased[i]),
                u8::from(r.resolved[i]).to_string(),
                fmt_f64(r.slope_l1),
                fmt_f64(r.slope_l2),
                fmt_f64(r.ceiling),
            ]);
        }
        ctx.out.write_table("blocks_condvar.csv", &t)?;
    }
    if let Some(st) = &block.structure {
        let layout = match (st.m, st.big_n, st.n) {
            (Some(m), Some(big_n), None) => BlockLayout::new(m, big_n)?,
            (Some(m), None, Some(n)) => BlockLayout::from_m(n, m)?,
            (None, None, Some(n)) => BlockLayout::from_kappa(n, st.kappa.unwrap_or(DEFAULT_KAPPA))?,
            _ => return Err(CliError::config("blocks.structure needs (m, N), (n, m) or (n[, kappa])")),
        };
        let d = StructureOptions::default();
        let so = StructureOptions {
            replicates: st.replicates.unwrap_or(d.replicates),
            outer: st.outer.unwrap_or(d.outer),
            inner: st.inner.unwrap_or(d.inner),
            j_nu: st.j_nu.unwrap_or(d.j_nu),
            j_c: st.j_c.unwrap_or(d.j_c),
            t_grid: st.t_grid.clone().unwrap_or(d.t_grid),
            z: st.z.unwrap_or(d.z),
        };
        let r = structural_checks(ctx.sampler()?, layout, lam.expect("resolved"), &so, sub(4), &opts)?;
        let mut t = Table::new(
            "structure",
            &["check", "a", "b", "value", "se", "pass", "n", "m", "N", "replicates", "outer", "inner", "j_nu", "j_c"],
        );
        let tail = [
            layout.n.to_string(),
            layout.m.to_string(),
            layout.big_n.to_string(),
            so.replicates.to_string(),
            so.outer.to_string(),
            so.inner.to_string(),
            so.j_nu.to_string(),
            so.j_c.to_string(),
        ];
        let mut row = |check: &str, a: String, bb: String, v: f64, se: f64, pass: bool| {
            let mut r = vec![check.to_string(), a, bb, fmt_f64(v), fmt_f64(se), b(pass)];
            r.extend(tail.iter().cloned());
            t.push(r);
        };
        for &(i, j, c, se) in &r.cond_corr {
            row("cond_corr", i.to_string(), j.to_string(), c, se, c.abs() <= so.z * se);
        }
        for &(i, j, c, se) in &r.z_corr {
            row("z_corr", i.to_string(), j.to_string(), c, se, c.abs() <= so.z * se);
        }
        for &(tt, v) in &r.phi_max {
            row("phi_max", fmt_f64(tt), String::new(), v, f64::NAN, v <= 1.0 + 1e-12 || r.pass_c);
        }
        row("identity", String::new(), String::new(), r.identity_error, f64::NAN, r.identity_error <= 1e-12);
        row("pass_a", String::new(), String::new(), r.pass_a as u8 as f64, f64::NAN, r.pass_a);
        row("pass_b", String::new(), String::new(), r.pass_b as u8 as f64, f64::NAN, r.pass_b);
        row("pass_c", String::new(), String::new(), r.pass_c as u8 as f64, f64::NAN, r.pass_c);
        ctx.out.write_table("blocks_structure.csv", &t)?;
    }
    if let Some(s1) = &block.step1 {
        let lam = lam.expect("resolved");
        let (mean, se) = step1_error(ctx.sampler()?, s1.n, s1.m, s1.paths, s1.j_nu, lam, sub(5), &opts)?;
        let mut t = Table::new("step1", &["n", "m", "paths", "j_nu", "l1_error", "se", "lambda_hat"]);
        t.push(vec![
            s1.n.to_string(),
            s1.m.to_string(),
            s1.paths.to_string(),
            s1.j_nu.to_string(),
            fmt_f64(mean),
            fmt_f64(se),
            fmt_f64(lam),
        ]);
        ctx.out.write_table("blocks_step1.csv", &t)?;
    }
    Ok(())
}

fn plot_cmd(ctx: &mut Ctx, args: &RunArgs) -> Result<(), CliError> {
    let block = ctx.cfg.plot.clone();
    let input = args
        .input
        .clone()
        .or_else(|| block.as_ref().and_then(|p| p.input.clone()))
        .ok_or_else(|| CliError::config("plot needs an input CSV (--input or plot.input)"))?;
    let kind = match args.kind.clone().or_else(|| block.as_ref().and_then(|p| p.kind.clone())) {
        Some(k) => Some(PlotKind::parse(&k).ok_or_else(|| CliError::config(format!("unknown plot kind {k:?}")))?),
        None => None,
    };
    let q = ctx.q(args.q.or_else(|| block.as_ref().and_then(|p| p.q)));
    let text = std::fs::read_to_string(&input).map_err(|e| CliError::config(format!("cannot read {}: {e}", input.display())))?;
    let svg = plot::render(&text, kind, q)?;
    let stem = Path::new(&input).file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    ctx.out.write(&format!("{stem}.svg"), svg.as_bytes())?;
    Ok(())
}
