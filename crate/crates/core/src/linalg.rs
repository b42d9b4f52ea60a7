//! Dense row-major matrices and the spectral primitives used by the estimator.
//!
//! Singular value decompositions are computed either by a dense
//! bidiagonalization (small inputs) or by randomized subspace iteration that is
//! refined until the top-`k` singular triplets satisfy a residual test (large
//! inputs). Both routes apply the same sign convention: the largest-magnitude
//! entry of every left singular vector is positive.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpocError};

/// Numerical tolerances shared across the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Allowed deviation of `UᵀU` from the identity.
    pub orthonormality: f64,
    /// Singular values agree with a full decomposition to this multiple of `λ₁`.
    pub svd_relative: f64,
    /// `λ_k / λ₁` below this is treated as rank deficiency.
    pub rank_relative: f64,
    /// Residual column norms (relative to the largest input row) below this are zero for SPA.
    pub spa_zero: f64,
    /// Stopping tolerance on the MVEE constraint violation.
    pub mvee: f64,
    /// Relative smallest singular value of `Ĥ` below this is degenerate.
    pub singularity: f64,
    /// Row sums of stochastic matrices must be within this of 1.
    pub stochastic: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        orthonormality: 1e-10,
        svd_relative: 1e-8,
        rank_relative: 1e-12,
        spa_zero: 1e-14,
        mvee: 1e-7,
        singularity: 1e-10,
        stochastic: 1e-12,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

pub const TOL: Tolerances = Tolerances::DEFAULT;

/// Row-major dense matrix of finite `f64` values.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = SpocError;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        DenseMatrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<DenseMatrix> for RawMatrix {
    fn from(m: DenseMatrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(12) {
            writeln!(f, "  {:?}", &self.row(i)[..self.cols.min(12)])?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SpocError::dims(
                "DenseMatrix::new",
                format!("{} values", rows * cols),
                format!("{} values", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(SpocError::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(SpocError::dims(
                    "DenseMatrix::from_rows",
                    format!("{cols} columns"),
                    format!("{} columns in row {i}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Builds a matrix from a generator closure. Panics if the closure yields a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data).expect("from_fn produced a non-finite entry")
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(SpocError::dims(
                "matmul",
                format!("{} rows on the right", self.cols),
                format!("{}", rhs.rows),
            ));
        }
        Ok(Self::from_nalgebra(&(self.to_nalgebra() * rhs.to_nalgebra())))
    }

    pub fn select_rows(&self, indices: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_columns(&self, indices: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, indices.len(), |i, j| self[(i, indices[j])])
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn add(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn scale(&self, factor: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    fn zip_with(
        &self,
        rhs: &DenseMatrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DenseMatrix> {
        if self.shape() != rhs.shape() {
            return Err(SpocError::dims(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", rhs.rows, rhs.cols),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        DenseMatrix::new(self.rows, self.cols, data)
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, rhs: &DenseMatrix) -> Result<f64> {
        Ok(self
            .sub(rhs)?
            .data
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs())))
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.row_iter().map(|r| r.iter().sum()).collect()
    }

    /// Swaps rows according to `perm`: row `i` of the result is row `perm[i]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> DenseMatrix {
        self.select_rows(perm)
    }

    /// Inverse of a square matrix via LU; errors if the matrix is numerically singular.
    pub fn inverse(&self) -> Result<DenseMatrix> {
        if self.rows != self.cols {
            return Err(SpocError::dims(
                "inverse",
                "square matrix",
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        let inv = self
            .to_nalgebra()
            .try_inverse()
            .ok_or(SpocError::Singular {
                k: self.rows,
                ratio: 0.0,
            })?;
        DenseMatrix::new(self.rows, self.cols, row_major(&inv))
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(pos) => Err(SpocError::NonFinite {
                row: pos / self.cols.max(1),
                col: pos % self.cols.max(1),
            }),
            None => Ok(()),
        }
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    /// Converts from nalgebra. Panics on non-finite entries.
    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        DenseMatrix::new(m.nrows(), m.ncols(), row_major(m))
            .expect("nalgebra matrix with non-finite entries")
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut data = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            data.push(m[(i, j)]);
        }
    }
    data
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Rank-`k` singular value decomposition `m ≈ u · diag(l) · vᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub l: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.l.len()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let ul = DenseMatrix::from_fn(self.u.rows(), self.l.len(), |i, j| {
            self.u[(i, j)] * self.l[j]
        });
        ul.matmul(&self.v.transpose())
            .expect("factor shapes agree by construction")
    }
}

/// Configuration of the truncated SVD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    /// Inputs with `rows · cols` above this use randomized subspace iteration.
    pub randomized_threshold: usize,
    pub oversampling: usize,
    pub power_iterations: usize,
    /// Upper bound on refinement sweeps after the initial power iterations.
    pub max_refinements: usize,
    /// Refinement stops once `‖m vᵢ − lᵢ uᵢ‖ ≤ residual_tol · l₁` for every kept triplet.
    pub residual_tol: f64,
    /// Seed used by [`truncated_svd`] when no generator is supplied.
    pub seed: u64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            randomized_threshold: 250_000,
            oversampling: 10,
            power_iterations: 2,
            max_refinements: 300,
            residual_tol: 1e-11,
            seed: 0x5EED_5EED,
        }
    }
}

impl SvdOptions {
    pub fn exact() -> Self {
        Self {
            randomized_threshold: usize::MAX,
            ..Self::default()
        }
    }

    pub fn randomized() -> Self {
        Self {
            randomized_threshold: 0,
            ..Self::default()
        }
    }
}

fn check_rank(m: &DenseMatrix, k: usize) -> Result<()> {
    let max = m.rows().min(m.cols());
    if k == 0 || k > max {
        return Err(SpocError::RankOutOfRange { k, max });
    }
    Ok(())
}

/// Top-`k` singular triplets of `m` with default options.
pub fn truncated_svd(m: &DenseMatrix, k: usize) -> Result<SvdResult> {
    let opts = SvdOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    truncated_svd_with(m, k, &opts, &mut rng)
}

/// Top-`k` singular triplets of `m`; `rng` drives the randomized route only.
pub fn truncated_svd_with<R: Rng + ?Sized>(
    m: &DenseMatrix,
    k: usize,
    opts: &SvdOptions,
    rng: &mut R,
) -> Result<SvdResult> {
    m.check_finite()?;
    check_rank(m, k)?;
    let a = m.to_nalgebra();
    let (u, l, v) = if m.rows() * m.cols() > opts.randomized_threshold {
        randomized_svd(&a, k, opts, rng)
    } else {
        dense_svd(&a, k)
    };
    let mut res = SvdResult {
        u: DenseMatrix::from_nalgebra(&u),
        l,
        v: DenseMatrix::from_nalgebra(&v),
    };
    fix_signs(&mut res);
    Ok(res)
}

/// Top-`k` SVD of a small dense matrix. nalgebra's bidiagonal SVD occasionally
/// returns inconsistent factors on rank-deficient input, so every candidate is
/// checked against `‖Av − σu‖` and `‖Aᵀu − σv‖`; one-sided Jacobi is the last resort.
fn dense_svd(a: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    if let Some(f) = nalgebra_svd(a, k).filter(|f| consistent(a, f)) {
        return f;
    }
    if let Some((v, l, u)) = nalgebra_svd(&a.transpose(), k) {
        let f = (u, l, v);
        if consistent(a, &f) {
            return f;
        }
    }
    jacobi_svd(a, k)
}

fn nalgebra_svd(a: &DMatrix<f64>, k: usize) -> Option<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let svd = a.clone().try_svd(true, true, f64::EPSILON, 10_000)?;
    let u = svd.u?;
    let vt = svd.v_t?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    order.truncate(k);
    let l = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();
    let u_k = DMatrix::from_fn(a.nrows(), k, |i, j| u[(i, order[j])]);
    let v_k = DMatrix::from_fn(a.ncols(), k, |i, j| vt[(order[j], i)]);
    Some((u_k, l, v_k))
}

fn consistent(a: &DMatrix<f64>, (u, l, v): &(DMatrix<f64>, Vec<f64>, DMatrix<f64>)) -> bool {
    let scale = l.first().copied().unwrap_or(0.0).max(a.amax());
    let dim = (a.nrows() + a.ncols()) as f64;
    let tol = 100.0 * f64::EPSILON * dim.sqrt() * scale.max(f64::MIN_POSITIVE);
    let av = a * v;
    let atu = a.tr_mul(u);
    let orth = |m: &DMatrix<f64>| (m.tr_mul(m) - DMatrix::identity(m.ncols(), m.ncols())).amax();
    orth(u) < 1e-12
        && orth(v) < 1e-12
        && (0..l.len()).all(|j| {
            (av.column(j) - u.column(j) * l[j]).norm() <= tol && (atu.column(j) - v.column(j) * l[j]).norm() <= tol
        })
}

/// One-sided (Hestenes) Jacobi SVD, top `k` triplets.
fn jacobi_svd(a: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    if a.nrows() < a.ncols() {
        let (v, l, u) = jacobi_svd(&a.transpose(), k);
        return (u, l, v);
    }
    let (n, p) = a.shape();
    let mut b = a.clone();
    let mut v = DMatrix::<f64>::identity(p, p);
    for _sweep in 0..100 {
        let mut rotated = false;
        for i in 0..p {
            for j in i + 1..p {
                let alpha = b.column(i).norm_squared();
                let beta = b.column(j).norm_squared();
                let gamma = b.column(i).dot(&b.column(j));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut b, &mut v] {
                    for r in 0..m.nrows() {
                        let (x, y) = (m[(r, i)], m[(r, j)]);
                        m[(r, i)] = c * x - s * y;
                        m[(r, j)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..p).map(|j| b.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    order.truncate(k);
    let l: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let floor = f64::EPSILON * l.first().copied().unwrap_or(0.0) * n.max(p) as f64;
    let mut u = DMatrix::<f64>::zeros(n, k);
    let mut next_basis = 0;
    for (c, &j) in order.iter().enumerate() {
        if norms[j] > floor {
            u.set_column(c, &(b.column(j) / norms[j]));
            continue;
        }
        // null direction: complete the basis with a unit vector orthogonal to the rest
        loop {
            let mut e = nalgebra::DVector::<f64>::zeros(n);
            e[next_basis % n] = 1.0;
            next_basis += 1;
            for q in 0..c {
                let proj = u.column(q).dot(&e);
                e -= u.column(q) * proj;
            }
            let en = e.norm();
            if en > 1e-8 {
                u.set_column(c, &(e / en));
                break;
            }
        }
    }
    let v_k = DMatrix::from_fn(p, k, |i, c| v[(i, order[c])]);
    (u, l, v_k)
}

fn orthonormalize(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

fn randomized_svd<R: Rng + ?Sized>(
    a: &DMatrix<f64>,
    k: usize,
    opts: &SvdOptions,
    rng: &mut R,
) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (n, p) = a.shape();
    let width = (k + opts.oversampling).min(n.min(p));
    let omega = DMatrix::from_fn(p, width, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut q = orthonormalize(a * omega);
    for _ in 0..opts.power_iterations {
        let z = orthonormalize(a.tr_mul(&q));
        q = orthonormalize(a * z);
    }

    let mut sweep = 0;
    loop {
        // b = qᵀ a, stored transposed as aᵀ q (p × width)
        let bt = a.tr_mul(&q);
        let (ub_k, l, vbt_k) = dense_svd(&bt.transpose(), k);
        let u = &q * ub_k;
        let v = vbt_k;

        let av = a * &v;
        let scale = l.first().copied().unwrap_or(0.0);
        let converged = (0..k).all(|j| {
            let r: f64 = (0..n)
                .map(|i| (av[(i, j)] - l[j] * u[(i, j)]).powi(2))
                .sum::<f64>()
                .sqrt();
            r <= opts.residual_tol * scale
        });
        if converged || sweep >= opts.max_refinements {
            return (u, l, v);
        }
        sweep += 1;
        q = orthonormalize(a * orthonormalize(bt));
    }
}

fn fix_signs(res: &mut SvdResult) {
    for j in 0..res.l.len() {
        let mut best = 0.0_f64;
        let mut sign = 1.0;
        for i in 0..res.u.rows() {
            let v = res.u[(i, j)];
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            for i in 0..res.u.rows() {
                res.u[(i, j)] = -res.u[(i, j)];
            }
            for i in 0..res.v.rows() {
                res.v[(i, j)] = -res.v[(i, j)];
            }
        }
    }
}

/// All singular values of `m` in nonincreasing order (dense route).
pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    m.check_finite()?;
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let mut s: Vec<f64> = m
        .to_nalgebra()
        .singular_values()
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// The `k` largest singular values, using the same route selection as [`truncated_svd`].
pub fn top_singular_values(m: &DenseMatrix, k: usize) -> Result<Vec<f64>> {
    check_rank(m, k)?;
    if m.rows() * m.cols() > SvdOptions::default().randomized_threshold {
        Ok(truncated_svd(m, k)?.l)
    } else {
        let mut s = singular_values(m)?;
        s.truncate(k);
        Ok(s)
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DenseMatrix) -> Result<f64> {
    m.check_finite()?;
    if m.is_empty() {
        return Err(SpocError::InvalidParameter(
            "spectral norm of an empty matrix".into(),
        ));
    }
    Ok(top_singular_values(m, 1)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub fro: f64,
    pub l1: f64,
    pub l1_inf: f64,
}

/// Frobenius, entrywise ℓ1 and maximum row ℓ1 norms.
pub fn norms(m: &DenseMatrix) -> Result<Norms> {
    m.check_finite()?;
    if m.is_empty() {
        return Err(SpocError::InvalidParameter("norms of an empty matrix".into()));
    }
    let fro = m.fro_norm();
    let l1 = m.data().iter().map(|v| v.abs()).sum();
    let l1_inf = m
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    Ok(Norms { fro, l1, l1_inf })
}

/// `λ₁ / λ_k`; errors when `λ_k` is negligible relative to `λ₁`.
pub fn condition_number(m: &DenseMatrix, k: usize) -> Result<f64> {
    let s = top_singular_values(m, k)?;
    condition_from_values(&s, k)
}

pub(crate) fn condition_from_values(s: &[f64], k: usize) -> Result<f64> {
    let first = s[0];
    let last = s[k - 1];
    if first <= 0.0 || last < TOL.rank_relative * first {
        return Err(SpocError::Singular {
            k,
            ratio: if first > 0.0 { last / first } else { 0.0 },
        });
    }
    Ok(first / last)
}

/// Symmetric eigendecomposition helper returning `(eigenvalues, eigenvectors as columns)`.
pub(crate) fn symmetric_eigen(m: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let eig = m.to_nalgebra().symmetric_eigen();
    (
        eig.eigenvalues.iter().copied().collect(),
        DenseMatrix::from_nalgebra(&eig.eigenvectors),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn jacobi_matches_reference_values() {
        for (r, c, seed) in [(9, 4, 1), (4, 9, 2), (6, 6, 3)] {
            let m = random(r, c, seed);
            let (u, l, v) = jacobi_svd(&m.to_nalgebra(), r.min(c));
            let reference = singular_values(&m).unwrap();
            for (a, b) in l.iter().zip(&reference) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            assert!(consistent(&m.to_nalgebra(), &(u, l, v)));
        }
    }

    #[test]
    fn rank_deficient_tall_products_reconstruct() {
        // tall rank-2 products have tripped the bidiagonal SVD before
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.random_range(4..20);
            let p = rng.random_range(3..12);
            let w = DenseMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
            let a = DenseMatrix::from_fn(2, p, |_, _| rng.random::<f64>());
            let m = w.matmul(&a).unwrap();
            let svd = truncated_svd(&m, 2).unwrap();
            let err = svd.reconstruct().max_abs_diff(&m).unwrap();
            assert!(err < 1e-12, "{n}x{p}: {err:e}, l = {:?}", svd.l);
        }
    }

    fn gram_defect(m: &DenseMatrix) -> f64 {
        let g = m.transpose().matmul(m).unwrap();
        g.max_abs_diff(&DenseMatrix::identity(m.cols())).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(matches!(
            DenseMatrix::new(2, 2, vec![1.0, f64::NAN, 0.0, 0.0]),
            Err(SpocError::NonFinite { row: 0, col: 1 })
        ));
        assert!(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn identity_svd() {
        let res = truncated_svd(&DenseMatrix::identity(3), 3).unwrap();
        for l in &res.l {
            assert_abs_diff_eq!(*l, 1.0, epsilon = 1e-14);
        }
        for j in 0..3 {
            let col = res.u.column(j);
            assert_eq!(col.iter().filter(|v| v.abs() > 1e-12).count(), 1);
        }
        assert!(gram_defect(&res.u) < 1e-12);
    }

    #[test]
    fn padded_diagonal_svd() {
        let m = DenseMatrix::from_fn(3, 5, |i, j| if i == j { 3.0 - i as f64 } else { 0.0 });
        let res = truncated_svd(&m, 2).unwrap();
        assert_abs_diff_eq!(res.l[0], 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(res.l[1], 2.0, epsilon = 1e-13);
    }

    #[test]
    fn rank_out_of_range() {
        let m = DenseMatrix::identity(3);
        assert!(matches!(
            truncated_svd(&m, 0),
            Err(SpocError::RankOutOfRange { .. })
        ));
        assert!(matches!(
            truncated_svd(&m, 4),
            Err(SpocError::RankOutOfRange { k: 4, max: 3 })
        ));
    }

    #[test]
    fn zero_matrix_is_not_an_error() {
        let res = truncated_svd(&DenseMatrix::zeros(4, 6), 2).unwrap();
        assert_eq!(res.l, vec![0.0, 0.0]);
        assert!(gram_defect(&res.u) < 1e-10);
        let res = truncated_svd_with(
            &DenseMatrix::zeros(4, 6),
            2,
            &SvdOptions::randomized(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(res.l, vec![0.0, 0.0]);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let m = random(12, 9, 4);
        let res = truncated_svd(&m, 4).unwrap();
        for j in 0..4 {
            let col = res.u.column(j);
            let max = col.iter().cloned().fold(0.0_f64, |a, v| a.max(v.abs()));
            assert!(col.contains(&max));
        }
        assert_eq!(res, truncated_svd(&m, 4).unwrap());
        assert_eq!(res.u, truncated_svd(&m.scale(-1.0), 4).unwrap().u);
    }

    #[test]
    fn randomized_route_matches_dense_route() {
        // rank-5 signal plus small noise so the tail is not exactly zero
        let left = random(120, 5, 11);
        let right = random(5, 90, 12);
        let noise = random(120, 90, 13).scale(1e-3);
        let m = left.matmul(&right).unwrap().add(&noise).unwrap();
        let exact = truncated_svd_with(&m, 5, &SvdOptions::exact(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let rand = truncated_svd_with(
            &m,
            5,
            &SvdOptions::randomized(),
            &mut ChaCha8Rng::seed_from_u64(7),
        )
        .unwrap();
        for (a, b) in exact.l.iter().zip(&rand.l) {
            assert!((a - b).abs() <= 1e-8 * exact.l[0], "{a} vs {b}");
        }
        assert!(gram_defect(&rand.u) < 1e-10);
        assert!(gram_defect(&rand.v) < 1e-10);
        // same sign convention, so the factors agree directly
        assert!(exact.u.max_abs_diff(&rand.u).unwrap() < 1e-7);
    }

    #[test]
    fn norms_examples() {
        let n = norms(&DenseMatrix::identity(2)).unwrap();
        assert_abs_diff_eq!(n.fro, 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!((n.l1, n.l1_inf), (2.0, 1.0));
        let m = DenseMatrix::from_rows(&[[1.0, -1.0], [2.0, 0.0]]).unwrap();
        let n = norms(&m).unwrap();
        assert_abs_diff_eq!(n.fro, 6f64.sqrt(), epsilon = 1e-15);
        assert_eq!((n.l1, n.l1_inf), (4.0, 2.0));
    }

    #[test]
    fn stochastic_rows_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut w = DenseMatrix::from_fn(17, 4, |_, _| rng.random::<f64>());
        for i in 0..17 {
            let s: f64 = w.row(i).iter().sum();
            w.row_mut(i).iter_mut().for_each(|v| *v /= s);
        }
        let n = norms(&w).unwrap();
        assert_abs_diff_eq!(n.l1, 17.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n.l1_inf, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spectral_norm_examples() {
        assert_eq!(spectral_norm(&DenseMatrix::diag(&[5.0, 1.0])).unwrap(), 5.0);
        let m = random(10, 10, 21);
        let s = spectral_norm(&m).unwrap();
        let l = truncated_svd(&m, 1).unwrap().l[0];
        assert!((s - l).abs() <= 1e-9 * l);
    }

    #[test]
    fn condition_number_examples() {
        assert_abs_diff_eq!(
            condition_number(&DenseMatrix::identity(4), 4).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            condition_number(&DenseMatrix::diag(&[4.0, 2.0]), 2).unwrap(),
            2.0,
            epsilon = 1e-14
        );
        let singular = DenseMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            condition_number(&singular, 2),
            Err(SpocError::Singular { k: 2, .. })
        ));
    }

    #[test]
    fn inverse_roundtrip() {
        let m = random(5, 5, 8);
        let inv = m.inverse().unwrap();
        let prod = m.matmul(&inv).unwrap();
        assert!(prod.max_abs_diff(&DenseMatrix::identity(5)).unwrap() < 1e-10);
        assert!(DenseMatrix::zeros(2, 2).inverse().is_err());
    }
}
