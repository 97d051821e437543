//! Small dense linear algebra for d×d matrices.
//!
//! Dimensions here are tiny (d = 2 is the common case), so matrices are plain
//! row-major buffers. Singular values use a closed form for d = 2 and one-sided
//! Jacobi sweeps otherwise; the spectral radius uses a closed form for d = 2 and
//! a Schur decomposition otherwise.

use crate::error::{Error, Result};

/// Row-major d×d matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    d: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn identity(d: usize) -> Self {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        SquareMatrix { d, data }
    }

    pub fn zeros(d: usize) -> Self {
        SquareMatrix { d, data: vec![0.0; d * d] }
    }

    /// Builds a matrix from a row-major literal of length d².
    pub fn from_row_major(d: usize, values: &[f64]) -> Result<Self> {
        if d == 0 || values.len() != d * d {
            return Err(Error::InvalidArgument(format!(
                "expected {} entries for a {d}x{d} matrix, got {}",
                d * d,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix entries must be finite".into()));
        }
        Ok(SquareMatrix { d, data: values.to_vec() })
    }

    /// Rows given as nested arrays.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("matrix rows must all have length d".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_major(d, &flat)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.d + j] = v;
    }

    /// `self · rhs`.
    pub fn mul(&self, rhs: &SquareMatrix) -> SquareMatrix {
        let mut out = SquareMatrix::zeros(self.d);
        mat_mul_into(self.d, &self.data, &rhs.data, &mut out.data);
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn transpose(&self) -> SquareMatrix {
        let d = self.d;
        let mut out = SquareMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.data[j * d + i] = self.data[i * d + j];
            }
        }
        out
    }

    /// `y = self · x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.d];
        mat_vec_into(self.d, &self.data, x, &mut y);
        y
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        singular_values(self.d, &self.data)
    }

    /// Operator 2-norm.
    pub fn operator_norm(&self) -> f64 {
        operator_norm(self.d, &self.data)
    }

    /// Largest eigenvalue modulus.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(self.d, &self.data)
    }

    pub fn determinant(&self) -> f64 {
        let m = nalgebra::DMatrix::from_row_slice(self.d, self.d, &self.data);
        m.determinant()
    }
}

#[inline]
pub fn mat_mul_into(d: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    if d == 2 {
        out[0] = a[0] * b[0] + a[1] * b[2];
        out[1] = a[0] * b[1] + a[1] * b[3];
        out[2] = a[2] * b[0] + a[3] * b[2];
        out[3] = a[2] * b[1] + a[3] * b[3];
        return;
    }
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[i * d + k] * b[k * d + j];
            }
            out[i * d + j] = s;
        }
    }
}

#[inline]
pub fn mat_vec_into(d: usize, a: &[f64], x: &[f64], y: &mut [f64]) {
    if d == 2 {
        y[0] = a[0] * x[0] + a[1] * x[1];
        y[1] = a[2] * x[0] + a[3] * x[1];
        return;
    }
    for i in 0..d {
        let row = &a[i * d..(i + 1) * d];
        y[i] = row.iter().zip(x).map(|(r, v)| r * v).sum();
    }
}

#[inline]
pub fn norm(x: &[f64]) -> f64 {
    if x.len() == 2 {
        return x[0].hypot(x[1]);
    }
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = x.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * s.sqrt()
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Closed-form singular values of a 2×2 matrix `[[a, b], [c, d]]`.
#[inline]
pub fn singular_values_2x2(m: &[f64]) -> (f64, f64) {
    let (a, b, c, d) = (m[0], m[1], m[2], m[3]);
    let e = 0.5 * (a + d);
    let f = 0.5 * (a - d);
    let g = 0.5 * (c + b);
    let h = 0.5 * (c - b);
    let q = e.hypot(h);
    let r = f.hypot(g);
    (q + r, (q - r).abs())
}

/// Singular values (descending) via closed form (d = 2) or one-sided Jacobi.
pub fn singular_values(d: usize, m: &[f64]) -> Vec<f64> {
    if d == 2 {
        let (s1, s2) = singular_values_2x2(m);
        return vec![s1, s2];
    }
    // Columns of `a` are orthogonalized in place; their norms are the singular values.
    let mut a = m.to_vec();
    let col = |a: &[f64], j: usize| -> f64 { (0..d).map(|i| a[i * d + j] * a[i * d + j]).sum() };
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..d {
            for q in (p + 1)..d {
                let alpha = col(&a, p);
                let beta = col(&a, q);
                let gamma: f64 = (0..d).map(|i| a[i * d + p] * a[i * d + q]).sum();
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..d {
                    let ap = a[i * d + p];
                    let aq = a[i * d + q];
                    a[i * d + p] = c * ap - s * aq;
                    a[i * d + q] = s * ap + c * aq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..d).map(|j| col(&a, j).sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

#[inline]
pub fn operator_norm(d: usize, m: &[f64]) -> f64 {
    if d == 2 {
        return singular_values_2x2(m).0;
    }
    singular_values(d, m)[0]
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(d: usize, m: &[f64]) -> f64 {
    if d == 2 {
        let (a, b, c, dd) = (m[0], m[1], m[2], m[3]);
        let half_tr = 0.5 * (a + dd);
        let det = a * dd - b * c;
        let disc = half_tr * half_tr - det;
        if disc < 0.0 {
            // complex pair, |λ|² = det
            return det.sqrt();
        }
        let root = disc.sqrt();
        return half_tr.abs() + root;
    }
    let mat = nalgebra::DMatrix::from_row_slice(d, d, m);
    mat.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Rescales `m` so that its operator norm is one and returns the log of the
/// removed factor. Zero or non-finite norms are left alone and return 0.
pub fn normalize_operator(d: usize, m: &mut [f64]) -> f64 {
    let nrm = operator_norm(d, m);
    if nrm > 0.0 && nrm.is_finite() {
        let inv = 1.0 / nrm;
        for v in m.iter_mut() {
            *v *= inv;
        }
        nrm.ln()
    } else {
        0.0
    }
}
