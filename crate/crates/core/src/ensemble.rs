//! Probability measures on GL_d(R) that can be sampled.
//!
//! Four families are provided:
//!
//! * `two_atom`: μ = w δ_{g1} + (1-w) δ_{g2}. Finite support, so every moment
//!   exists and exact enumeration of products is possible. Strong irreducibility
//!   and proximality are the caller's responsibility (generic atoms satisfy both).
//! * `scalar_gauge`: g = e^Z · Id. Not irreducible; the walk reduces to an iid
//!   scalar sum, which makes it a reduction oracle.
//! * `rot_diag_rot`: g = R1 · diag(e^{L t_1}, …, e^{L t_d}) · R2 with t running
//!   linearly from 1 down to -1, independent random rotations R1, R2 and
//!   L = scale · T, P(T > t) = (1 + t)^{-a}. Moments of order p exist iff p < a.
//!   The rotations give strong irreducibility, the gapped diagonal proximality.
//! * `orthogonal_only`: random rotations; N(g) = 1 (degenerate control).
//!
//! Elements are stored as `g = e^{log_scale} · M` with `‖M‖ = 1`, so draws with
//! very large L neither overflow nor lose the small singular directions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SquareMatrix};
use crate::rng::{RngStream, Seed, Stage};

const MAX_RETRIES: u32 = 64;
/// Largest representable log condition number.
const MAX_LOG_COND: f64 = 709.0;

/// Law of the log-scale Z of the `scalar_gauge` family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ScalarLaw {
    /// Z = high with probability `p_high`, `low` otherwise.
    TwoPoint { low: f64, high: f64, p_high: f64 },
    /// Z = shift + Exponential(rate).
    Exponential {
        rate: f64,
        #[serde(default)]
        shift: f64,
    },
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    /// Z = scale · T with P(T > t) = (1 + t)^{-tail_index}.
    Lomax { tail_index: f64, scale: f64 },
}

impl ScalarLaw {
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            ScalarLaw::TwoPoint { low, high, p_high } => {
                if rng.uniform() < p_high {
                    high
                } else {
                    low
                }
            }
            ScalarLaw::Exponential { rate, shift } => shift - rng.uniform_open0().ln() / rate,
            ScalarLaw::Normal { mean, sd } => mean + sd * rng.normal(),
            ScalarLaw::Uniform { low, high } => low + (high - low) * rng.uniform(),
            ScalarLaw::Lomax { tail_index, scale } => scale * lomax(rng, tail_index),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ScalarLaw::TwoPoint { low, high, p_high } => low + p_high * (high - low),
            ScalarLaw::Exponential { rate, shift } => shift + 1.0 / rate,
            ScalarLaw::Normal { mean, .. } => mean,
            ScalarLaw::Uniform { low, high } => 0.5 * (low + high),
            ScalarLaw::Lomax { tail_index, scale } => {
                if tail_index > 1.0 {
                    scale / (tail_index - 1.0)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ScalarLaw::TwoPoint { low, high, p_high } => p_high * (1.0 - p_high) * (high - low).powi(2),
            ScalarLaw::Exponential { rate, .. } => 1.0 / (rate * rate),
            ScalarLaw::Normal { sd, .. } => sd * sd,
            ScalarLaw::Uniform { low, high } => (high - low).powi(2) / 12.0,
            ScalarLaw::Lomax { tail_index: a, scale } => {
                if a > 2.0 {
                    scale * scale * a / ((a - 1.0).powi(2) * (a - 2.0))
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn tail_index(&self) -> f64 {
        match *self {
            ScalarLaw::Lomax { tail_index, .. } => tail_index,
            _ => f64::INFINITY,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScalarLaw::TwoPoint { low, high, p_high } => {
                low.is_finite() && high.is_finite() && (0.0..=1.0).contains(&p_high)
            }
            ScalarLaw::Exponential { rate, shift } => rate > 0.0 && rate.is_finite() && shift.is_finite(),
            ScalarLaw::Normal { mean, sd } => mean.is_finite() && sd >= 0.0 && sd.is_finite(),
            ScalarLaw::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            ScalarLaw::Lomax { tail_index, scale } => tail_index > 0.0 && scale > 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidEnsemble(format!("invalid scalar law parameters: {self:?}")))
        }
    }
}

/// Generator family of an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    TwoAtom {
        /// Two row-major d×d literals.
        atoms: Vec<Vec<f64>>,
        /// Probability of the first atom.
        #[serde(default = "default_weight")]
        weight: f64,
    },
    ScalarGauge {
        law: ScalarLaw,
    },
    RotDiagRot {
        tail_index: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    OrthogonalOnly,
}

fn default_weight() -> f64 {
    0.5
}

fn default_scale() -> f64 {
    1.0
}

/// Sampleable description of μ on GL_d(R) with a declared moment order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub d: usize,
    pub family: Family,
    /// Moment order the caller relies on; must be below the tail index.
    #[serde(default)]
    pub declared_q: Option<f64>,
}

impl EnsembleSpec {
    pub fn two_atom(d: usize, g1: Vec<f64>, g2: Vec<f64>) -> Self {
        EnsembleSpec { d, family: Family::TwoAtom { atoms: vec![g1, g2], weight: 0.5 }, declared_q: None }
    }

    pub fn scalar_gauge(d: usize, law: ScalarLaw) -> Self {
        EnsembleSpec { d, family: Family::ScalarGauge { law }, declared_q: None }
    }

    pub fn rot_diag_rot(d: usize, tail_index: f64, scale: f64) -> Self {
        EnsembleSpec { d, family: Family::RotDiagRot { tail_index, scale }, declared_q: None }
    }

    pub fn orthogonal_only(d: usize) -> Self {
        EnsembleSpec { d, family: Family::OrthogonalOnly, declared_q: None }
    }

    pub fn with_declared_q(mut self, q: f64) -> Self {
        self.declared_q = Some(q);
        self
    }

    /// Moments of order p exist iff p < tail index (infinite for bounded laws).
    pub fn tail_index(&self) -> f64 {
        match &self.family {
            Family::RotDiagRot { tail_index, .. } => *tail_index,
            Family::ScalarGauge { law } => law.tail_index(),
            Family::TwoAtom { .. } | Family::OrthogonalOnly => f64::INFINITY,
        }
    }

    pub fn build(&self) -> Result<Ensemble> {
        Ensemble::new(self.clone())
    }
}

/// An invertible matrix `e^{log_scale} · matrix` with cached norms.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    d: usize,
    /// Row-major factor with unit operator norm.
    matrix: Vec<f64>,
    log_scale: f64,
    /// log‖g‖ (operator 2-norm).
    log_norm: f64,
    /// log‖g⁻¹‖.
    log_inv_norm: f64,
    /// `matrix` is orthogonal, so σ(g, ·) ≡ log_scale.
    isometry: bool,
}

impl GroupElement {
    pub fn identity(d: usize) -> Self {
        GroupElement {
            d,
            matrix: SquareMatrix::identity(d).as_slice().to_vec(),
            log_scale: 0.0,
            log_norm: 0.0,
            log_inv_norm: 0.0,
            isometry: true,
        }
    }

    /// Wraps a dense invertible matrix.
    pub fn from_matrix(m: &SquareMatrix) -> Result<Self> {
        let d = m.dim();
        let sv = m.singular_values();
        let (smax, smin) = (sv[0], sv[d - 1]);
        if !(smax.is_finite() && smin > 0.0) || (smax / smin).ln() > MAX_LOG_COND || smax / smin > 1e15 {
            return Err(Error::InvalidEnsemble(format!(
                "matrix is numerically singular (singular values {smax:e}, {smin:e})"
            )));
        }
        let mut matrix = m.as_slice().to_vec();
        for v in &mut matrix {
            *v /= smax;
        }
        let isometry = (smax - smin) <= 1e-15 * smax;
        Ok(GroupElement {
            d,
            matrix,
            log_scale: smax.ln(),
            log_norm: smax.ln(),
            log_inv_norm: -smin.ln(),
            isometry,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Unit-norm factor M with g = e^{log_scale} M.
    #[inline]
    pub fn unit_matrix(&self) -> &[f64] {
        &self.matrix
    }

    #[inline]
    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    #[inline]
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    #[inline]
    pub fn log_inv_norm(&self) -> f64 {
        self.log_inv_norm
    }

    /// log N(g) = max(log‖g‖, log‖g⁻¹‖).
    #[inline]
    pub fn log_n(&self) -> f64 {
        self.log_norm.max(self.log_inv_norm)
    }

    #[inline]
    pub fn is_isometry(&self) -> bool {
        self.isometry
    }

    /// Dense matrix e^{log_scale} M. Overflows for extreme draws.
    pub fn dense(&self) -> SquareMatrix {
        let mut m = SquareMatrix::from_row_major(self.d, &self.matrix).expect("valid element");
        m.scale(self.log_scale.exp());
        m
    }

    /// The product `self · other`. Cached norms are recomputed from the
    /// product factor; when it is too ill-conditioned for that, the inverse
    /// norm falls back to the submultiplicative bound.
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        assert_eq!(self.d, other.d, "dimension mismatch");
        let d = self.d;
        let mut matrix = vec![0.0; d * d];
        linalg::mat_mul_into(d, &self.matrix, &other.matrix, &mut matrix);
        let sv = linalg::singular_values(d, &matrix);
        let (smax, smin) = (sv[0], sv[d - 1]);
        for v in &mut matrix {
            *v /= smax;
        }
        let log_scale = self.log_scale + other.log_scale + smax.ln();
        let log_inv_norm = if smin > 1e-13 * smax {
            -(self.log_scale + other.log_scale + smin.ln())
        } else {
            self.log_inv_norm + other.log_inv_norm
        };
        GroupElement {
            d,
            matrix,
            log_scale,
            log_norm: log_scale,
            log_inv_norm,
            isometry: self.isometry && other.isometry,
        }
    }

    fn set_rot_diag_rot_2(&mut self, l: f64, (s1, c1): (f64, f64), (s2, c2): (f64, f64)) {
        // R1 · diag(1, k) · R2 with k = e^{-2L}
        let k = (-2.0 * l).exp();
        let m = &mut self.matrix;
        m[0] = c1 * c2 - s1 * k * s2;
        m[1] = -c1 * s2 - s1 * k * c2;
        m[2] = s1 * c2 + c1 * k * s2;
        m[3] = -s1 * s2 + c1 * k * c2;
        self.log_scale = l;
        self.log_norm = l;
        self.log_inv_norm = l;
        self.isometry = l == 0.0;
    }
}

/// log N of a rot_diag_rot draw: scale·T with T Lomax, redrawn while the
/// condition number e^{2L} exceeds the representable range.
#[inline]
pub(crate) fn rot_diag_rot_log_norm(rng: &mut RngStream, tail_index: f64, scale: f64) -> Result<f64> {
    for _ in 0..MAX_RETRIES {
        let l = scale * lomax(rng, tail_index);
        if 2.0 * l <= MAX_LOG_COND {
            return Ok(l);
        }
    }
    Err(Error::SingularEnsemble { retries: MAX_RETRIES })
}

/// Draw from P(T > t) = (1 + t)^{-a} by inversion.
#[inline]
pub fn lomax(rng: &mut RngStream, a: f64) -> f64 {
    let u = rng.uniform_open0();
    (-u.ln() / a).exp_m1()
}

/// (sin θ, cos θ) for θ uniform on [0, 2π), by rejection from the unit disc.
#[inline]
pub fn uniform_angle(rng: &mut RngStream) -> (f64, f64) {
    loop {
        let u = 2.0 * rng.uniform() - 1.0;
        let v = 2.0 * rng.uniform() - 1.0;
        let r = u * u + v * v;
        if r > 0.0 && r < 1.0 {
            // the doubled angle of a uniform point in the disc is uniform
            return (2.0 * u * v / r, (u * u - v * v) / r);
        }
    }
}

/// Writes a random rotation into `out` as a product of Givens rotations with
/// independent uniform angles over every coordinate pair.
pub fn random_rotation_into(d: usize, rng: &mut RngStream, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..d {
        out[i * d + i] = 1.0;
    }
    for p in 0..d {
        for q in (p + 1)..d {
            let (s, c) = uniform_angle(rng);
            // left-multiply by the Givens rotation in the (p, q) plane
            for j in 0..d {
                let a = out[p * d + j];
                let b = out[q * d + j];
                out[p * d + j] = c * a - s * b;
                out[q * d + j] = s * a + c * b;
            }
        }
    }
}

/// Validated, immutable ensemble. Shareable across workers; all randomness
/// comes from the caller's stream.
#[derive(Clone, Debug)]
pub struct Ensemble {
    spec: EnsembleSpec,
    atoms: Vec<GroupElement>,
    d: usize,
}

impl Ensemble {
    pub fn new(spec: EnsembleSpec) -> Result<Self> {
        let d = spec.d;
        if d < 2 {
            return Err(Error::InvalidEnsemble(format!("dimension must be >= 2, got {d}")));
        }
        let mut atoms = Vec::new();
        match &spec.family {
            Family::TwoAtom { atoms: lits, weight } => {
                if lits.len() != 2 {
                    return Err(Error::InvalidEnsemble(format!("two_atom needs 2 atoms, got {}", lits.len())));
                }
                if !(0.0..=1.0).contains(weight) {
                    return Err(Error::InvalidEnsemble(format!("atom weight {weight} outside [0, 1]")));
                }
                for lit in lits {
                    let m = SquareMatrix::from_row_major(d, lit)
                        .map_err(|e| Error::InvalidEnsemble(e.to_string()))?;
                    atoms.push(GroupElement::from_matrix(&m)?);
                }
            }
            Family::ScalarGauge { law } => law.validate()?,
            Family::RotDiagRot { tail_index, scale } => {
                if !(*tail_index > 0.0 && *scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidEnsemble(format!(
                        "rot_diag_rot needs tail_index > 0 and scale > 0, got {tail_index}, {scale}"
                    )));
                }
            }
            Family::OrthogonalOnly => {}
        }
        if let Some(q) = spec.declared_q {
            if !(q >= 1.0) {
                return Err(Error::InvalidEnsemble(format!("declared_q must be >= 1, got {q}")));
            }
            if q >= spec.tail_index() {
                return Err(Error::InvalidEnsemble(format!(
                    "declared_q = {q} needs a moment the family lacks (tail index {})",
                    spec.tail_index()
                )));
            }
        }
        Ok(Ensemble { spec, atoms, d })
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    /// The atoms of a two-atom ensemble (empty otherwise).
    pub fn atoms(&self) -> &[GroupElement] {
        &self.atoms
    }

    pub fn sample(&self, rng: &mut RngStream) -> Result<GroupElement> {
        let mut g = GroupElement::identity(self.dim());
        self.sample_into(rng, &mut g)?;
        Ok(g)
    }

    /// Draws into an existing element, reusing its buffer.
    pub fn sample_into(&self, rng: &mut RngStream, out: &mut GroupElement) -> Result<()> {
        let d = self.dim();
        if out.d != d {
            *out = GroupElement::identity(d);
        }
        match &self.spec.family {
            Family::TwoAtom { weight, .. } => {
                let idx = if rng.uniform() < *weight { 0 } else { 1 };
                out.clone_from(&self.atoms[idx]);
            }
            Family::ScalarGauge { law } => {
                let z = law.sample(rng);
                for (i, v) in out.matrix.iter_mut().enumerate() {
                    *v = if i % (d + 1) == 0 { 1.0 } else { 0.0 };
                }
                out.log_scale = z;
                // ‖e^Z Id‖ = e^Z, ‖(e^Z Id)⁻¹‖ = e^{-Z}
                out.log_norm = z;
                out.log_inv_norm = -z;
                out.isometry = true;
            }
            Family::RotDiagRot { tail_index, scale } => {
                let l = rot_diag_rot_log_norm(rng, *tail_index, *scale)?;
                if d == 2 {
                    let a1 = uniform_angle(rng);
                    let a2 = uniform_angle(rng);
                    out.set_rot_diag_rot_2(l, a1, a2);
                } else {
                    let mut r1 = vec![0.0; d * d];
                    let mut r2 = vec![0.0; d * d];
                    random_rotation_into(d, rng, &mut r1);
                    random_rotation_into(d, rng, &mut r2);
                    // diag(e^{L(t_i - 1)}) with t_i = 1 - 2i/(d-1)
                    for i in 0..d {
                        let f = (-2.0 * l * i as f64 / (d - 1) as f64).exp();
                        for j in 0..d {
                            r2[i * d + j] *= f;
                        }
                    }
                    linalg::mat_mul_into(d, &r1, &r2, &mut out.matrix);
                    out.log_scale = l;
                    out.log_norm = l;
                    out.log_inv_norm = l;
                    out.isometry = l == 0.0;
                }
            }
            Family::OrthogonalOnly => {
                random_rotation_into(d, rng, &mut out.matrix);
                out.log_scale = 0.0;
                out.log_norm = 0.0;
                out.log_inv_norm = 0.0;
                out.isometry = true;
            }
        }
        Ok(())
    }
}

/// Monte Carlo estimate of ∫ (log N(g))^p dμ(g).
#[derive(Clone, Debug, PartialEq)]
pub struct MomentEstimate {
    pub p: f64,
    pub value: f64,
    pub se: f64,
    pub n_samples: usize,
    /// Estimates on nested prefixes of sizes n/16, n/8, …, n.
    pub doubling: Vec<(usize, f64)>,
    /// Largest single term's share of the total sum.
    pub max_share: f64,
    /// False when the estimate fails to stabilize (suspected divergence).
    pub stable: bool,
}

/// Largest-term share above which an estimate counts as unstable.
pub const MAX_TERM_SHARE: f64 = 0.01;
/// Allowed relative drift between the n/16 prefix and the full estimate.
pub const DOUBLING_DRIFT: f64 = 0.1;

/// Estimates the p-th log-moment and flags suspected divergence: a single
/// draw carrying more than 1% of the total, or the estimate drifting by more
/// than 10% across four doublings of the sample size.
pub fn moment_diagnostic(ens: &Ensemble, p: f64, n_samples: usize, seed: Seed) -> Result<MomentEstimate> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("moment order p must be >= 1, got {p}")));
    }
    if n_samples < 16 {
        return Err(Error::InvalidArgument("moment_diagnostic needs at least 16 samples".into()));
    }
    let mut rng = seed.stream(Stage::Moment, 0);
    let mut g = GroupElement::identity(ens.dim());
    let mut values = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        ens.sample_into(&mut rng, &mut g)?;
        values.push(g.log_n().powf(p));
    }
    let mut doubling = Vec::new();
    let mut size = n_samples / 16;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut max_term = 0.0f64;
    let mut consumed = 0;
    while consumed < n_samples {
        let end = size.min(n_samples);
        for &v in &values[consumed..end] {
            sum += v;
            sum_sq += v * v;
            max_term = max_term.max(v);
        }
        consumed = end;
        doubling.push((consumed, sum / consumed as f64));
        size *= 2;
    }
    let n = n_samples as f64;
    let value = sum / n;
    let var = ((sum_sq / n - value * value) * n / (n - 1.0)).max(0.0);
    let se = (var / n).sqrt();
    let max_share = if sum > 0.0 { max_term / sum } else { 0.0 };
    let first = doubling[0].1;
    let drift = if value > 0.0 { (value / first - 1.0).abs() } else { 0.0 };
    let stable = max_share <= MAX_TERM_SHARE && drift <= DOUBLING_DRIFT && value.is_finite();
    Ok(MomentEstimate { p, value, se, n_samples, doubling, max_share, stable })
}
