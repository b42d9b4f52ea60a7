//! Simplex vertex hunting.
//!
//! [`spa`] is the successive projection algorithm: repeatedly pick the row of
//! largest Euclidean norm and project every row onto the orthogonal complement
//! of the pick. [`preconditioned_spa`] first maps the rows through the square
//! root of the minimum-volume origin-centered ellipsoid computed by
//! [`mvee_origin`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpocError};
use crate::linalg::{singular_values, symmetric_eigen, DenseMatrix, TOL};

/// Distinct row indices in selection order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorIndexSet(Vec<usize>);

impl AnchorIndexSet {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(SpocError::InvalidParameter(format!(
                    "anchor index {i} out of range for {n} rows"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(SpocError::InvalidParameter(format!(
                    "duplicate anchor index {i}"
                )));
            }
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

/// Per-step diagnostics of a SPA run.
#[derive(Debug, Clone)]
pub struct SpaTrace {
    /// Largest residual row norm before each selection.
    pub max_norms: Vec<f64>,
    /// Residual rows after the final projection.
    pub residual: DenseMatrix,
}

pub fn spa(m: &DenseMatrix, r: usize) -> Result<AnchorIndexSet> {
    spa_with_trace(m, r).map(|(set, _)| set)
}

pub fn spa_with_trace(m: &DenseMatrix, r: usize) -> Result<(AnchorIndexSet, SpaTrace)> {
    m.check_finite()?;
    let (n, k) = m.shape();
    if r == 0 || r > n.min(k) {
        return Err(SpocError::RankOutOfRange { k: r, max: n.min(k) });
    }

    let mut residual = m.clone();
    let mut norms: Vec<f64> = residual
        .row_iter()
        .map(|row| row.iter().map(|v| v * v).sum())
        .collect();
    let scale = norms.iter().cloned().fold(0.0_f64, f64::max).sqrt();
    let zero = TOL.spa_zero * scale.max(f64::MIN_POSITIVE);

    let mut picked = Vec::with_capacity(r);
    let mut max_norms = Vec::with_capacity(r);
    let mut pivot = vec![0.0; k];
    for _ in 0..r {
        // strict comparison keeps the lowest index on ties
        let (best, best_sq) = norms
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        if best_sq.sqrt() <= zero {
            return Err(SpocError::RankDeficient {
                requested: r,
                found: picked.len(),
            });
        }
        max_norms.push(best_sq.sqrt());
        picked.push(best);

        pivot.copy_from_slice(residual.row(best));
        for (i, norm) in norms.iter_mut().enumerate() {
            let row = residual.row_mut(i);
            let coef = row.iter().zip(&pivot).map(|(a, b)| a * b).sum::<f64>() / best_sq;
            for (x, s) in row.iter_mut().zip(&pivot) {
                *x -= coef * s;
            }
            *norm = row.iter().map(|v| v * v).sum();
        }
    }

    Ok((
        AnchorIndexSet(picked),
        SpaTrace {
            max_norms,
            residual,
        },
    ))
}

/// Shape matrix `L*` of the minimum-volume origin-centered ellipsoid
/// `{x : xᵀ L* x ≤ 1}` containing the input rows, with its symmetric square root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preconditioner {
    pub l_star: DenseMatrix,
    pub sqrt_l_star: DenseMatrix,
    /// Design weights on the input rows at termination.
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// `max_i a_iᵀ L a_i − 1` for the unscaled iterate `L = M(u)⁻¹ / K`.
    pub violation: f64,
}

impl Preconditioner {
    /// `−log det L*`, the value of the determinant-maximization objective.
    pub fn objective(&self) -> f64 {
        let (eig, _) = symmetric_eigen(&self.l_star);
        -eig.iter().map(|v| v.ln()).sum::<f64>()
    }

    /// `max_i a_iᵀ L* a_i` over the rows of `points`.
    pub fn max_constraint(&self, points: &DenseMatrix) -> f64 {
        points
            .row_iter()
            .map(|a| quad_form(&self.l_star, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MveeOptions {
    pub tol: f64,
    /// Defaults to `100 · K · ln n` (at least 10 000) when `None`.
    pub max_iterations: Option<usize>,
}

impl Default for MveeOptions {
    fn default() -> Self {
        Self {
            tol: TOL.mvee,
            max_iterations: None,
        }
    }
}

pub fn mvee_origin(points: &DenseMatrix) -> Result<Preconditioner> {
    mvee_origin_with(points, &MveeOptions::default())
}

/// Solves `min −log det L` subject to `a_iᵀ L a_i ≤ 1` through its dual D-optimal
/// design problem, using Frank–Wolfe ascent with away steps on the weights.
pub fn mvee_origin_with(points: &DenseMatrix, opts: &MveeOptions) -> Result<Preconditioner> {
    points.check_finite()?;
    let (n, k) = points.shape();
    if k == 0 || n < k {
        return Err(SpocError::RankDeficient {
            requested: k,
            found: n,
        });
    }
    let sv = singular_values(points)?;
    if sv[0] <= 0.0 || sv[k - 1] < TOL.rank_relative * sv[0] {
        let found = sv.iter().filter(|&&s| s >= TOL.rank_relative * sv[0] && s > 0.0).count();
        return Err(SpocError::RankDeficient { requested: k, found });
    }

    let dim = k as f64;
    let max_iter = opts
        .max_iterations
        .unwrap_or_else(|| ((100.0 * dim * (n as f64).ln()).ceil() as usize).max(10_000));
    let mut u = core_set_start(points);
    let mut g = vec![0.0; n];
    let mut iterations = 0;
    let mut newton_last = false;

    loop {
        let m_inv = moment_inverse(points, &u)?;
        for (gi, a) in g.iter_mut().zip(points.row_iter()) {
            *gi = quad_form(&m_inv, a);
        }
        let (up, g_max) = argmax(&g, |_| true);
        let (down, g_min) = argmin(&g, |i| u[i] > 0.0);
        let toward = g_max / dim - 1.0;

        if toward <= opts.tol {
            let l_star = m_inv.scale(1.0 / g_max);
            return finish(l_star, u, iterations, toward);
        }
        if iterations >= max_iter {
            return Err(SpocError::IterationLimit {
                iterations,
                violation: toward,
                last: Box::new(m_inv.scale(1.0 / dim)),
            });
        }
        iterations += 1;

        // once the support is small, Newton on it converges quadratically;
        // alternate with first-order steps, which add and drop points
        if !newton_last {
            if let Some(next) = support_newton(points, &u, &m_inv) {
                u = next;
                newton_last = true;
                continue;
            }
        }
        newton_last = false;

        // candidate steps, ranked by log det gain
        let gain = |tau: f64, gv: f64| dim * (1.0 - tau).ln() + (1.0 + tau * gv / (1.0 - tau)).ln();
        let toward_step = (g_max - dim) / (dim * (g_max - 1.0));
        let toward_gain = gain(toward_step, g_max);

        let drop = -u[down] / (1.0 - u[down]);
        let away_step = if g_min > 1.0 {
            ((g_min - dim) / (dim * (g_min - 1.0))).max(drop)
        } else {
            drop
        };
        let away_gain = if u[down] < 1.0 { gain(away_step, g_min) } else { f64::NEG_INFINITY };

        // pairwise: move mass t from `down` to `up`
        let g_ud = bilinear(&m_inv, points.row(up), points.row(down));
        let curv = g_max * g_min - g_ud * g_ud;
        let t = if curv > 0.0 {
            ((g_max - g_min) / (2.0 * curv)).clamp(0.0, u[down])
        } else {
            u[down]
        };
        let det_ratio = 1.0 + t * (g_max - g_min) - t * t * curv;
        let pair_gain = if up != down && det_ratio > 0.0 { det_ratio.ln() } else { f64::NEG_INFINITY };

        if pair_gain >= toward_gain && pair_gain >= away_gain {
            let full = t >= u[down];
            u[up] += t;
            u[down] = if full { 0.0 } else { u[down] - t };
        } else if toward_gain >= away_gain {
            u.iter_mut().for_each(|w| *w *= 1.0 - toward_step);
            u[up] += toward_step;
        } else {
            u.iter_mut().for_each(|w| *w *= 1.0 - away_step);
            u[down] += away_step;
            if away_step == drop {
                u[down] = 0.0;
            }
        }
    }
}

/// Kumar–Yildirim style start: uniform weight on `K` points picked greedily
/// by largest residual norm, so `M(u)` is invertible and the support is small.
fn core_set_start(points: &DenseMatrix) -> Vec<f64> {
    let (n, k) = points.shape();
    let mut residual = points.clone();
    let mut u = vec![0.0; n];
    for _ in 0..k {
        let (best, _) = argmax(
            &residual.row_iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).collect::<Vec<_>>(),
            |i| u[i] == 0.0,
        );
        u[best] = 1.0 / k as f64;
        let pivot = residual.row(best).to_vec();
        let sq: f64 = pivot.iter().map(|v| v * v).sum();
        for i in 0..n {
            let row = residual.row_mut(i);
            let coef = row.iter().zip(&pivot).map(|(a, b)| a * b).sum::<f64>() / sq;
            row.iter_mut().zip(&pivot).for_each(|(x, p)| *x -= coef * p);
        }
    }
    u
}

/// Largest support handled by the Newton step.
const NEWTON_SUPPORT: usize = 128;

/// Equality-constrained Newton step for `max log det M(u)` over the current
/// support, with backtracking. `None` when it cannot improve the objective.
fn support_newton(points: &DenseMatrix, u: &[f64], m_inv: &DenseMatrix) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..u.len()).filter(|&i| u[i] > 0.0).collect();
    let s = support.len();
    if !(2..=NEWTON_SUPPORT).contains(&s) {
        return None;
    }
    let gram = DMatrix::from_fn(s, s, |a, b| bilinear(m_inv, points.row(support[a]), points.row(support[b])));
    let grad = DVector::from_fn(s, |a, _| gram[(a, a)]);
    // negative Hessian G∘G is only semidefinite once s exceeds K(K+1)/2
    let mut hess = gram.component_mul(&gram);
    let ridge = 1e-12 * hess.diagonal().max();
    for a in 0..s {
        hess[(a, a)] += ridge;
    }
    let chol = hess.cholesky()?;
    let ones = DVector::from_element(s, 1.0);
    let h_g = chol.solve(&grad);
    let h_1 = chol.solve(&ones);
    let nu = -h_g.sum() / h_1.sum();
    let dir = h_g + h_1 * nu;

    let mut t = 1.0f64;
    for (a, &i) in support.iter().enumerate() {
        if dir[a] < 0.0 {
            t = t.min(-u[i] / dir[a]);
        }
    }
    let base = log_det_moment(points, u)?;
    while t > 1e-12 {
        let mut next = u.to_vec();
        for (a, &i) in support.iter().enumerate() {
            let v = u[i] + t * dir[a];
            next[i] = if v <= 1e-15 { 0.0 } else { v };
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        if log_det_moment(points, &next).is_some_and(|ld| ld > base + 1e-15 * base.abs().max(1.0)) {
            return Some(next);
        }
        t *= 0.5;
    }
    None
}

fn log_det_moment(points: &DenseMatrix, u: &[f64]) -> Option<f64> {
    let chol = moment(points, u).to_nalgebra().cholesky()?;
    Some(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

fn finish(l_star: DenseMatrix, weights: Vec<f64>, iterations: usize, violation: f64) -> Result<Preconditioner> {
    let l_star = symmetrize(&l_star);
    let (eig, vecs) = symmetric_eigen(&l_star);
    if eig.iter().any(|&e| e <= 0.0) {
        return Err(SpocError::Singular { k: eig.len(), ratio: 0.0 });
    }
    let k = eig.len();
    let sqrt = DenseMatrix::from_fn(k, k, |i, j| {
        (0..k).map(|t| vecs[(i, t)] * eig[t].sqrt() * vecs[(j, t)]).sum()
    });
    Ok(Preconditioner {
        l_star,
        sqrt_l_star: symmetrize(&sqrt),
        weights,
        iterations,
        violation,
    })
}

fn symmetrize(m: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// Inverse of `M(u) = Σ u_i a_i a_iᵀ`.
fn moment_inverse(points: &DenseMatrix, u: &[f64]) -> Result<DenseMatrix> {
    moment(points, u).inverse()
}

fn moment(points: &DenseMatrix, u: &[f64]) -> DenseMatrix {
    let k = points.cols();
    let mut m = DenseMatrix::zeros(k, k);
    for (a, &w) in points.row_iter().zip(u) {
        if w == 0.0 {
            continue;
        }
        for i in 0..k {
            for j in i..k {
                m[(i, j)] += w * a[i] * a[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    m
}

fn bilinear(m: &DenseMatrix, a: &[f64], b: &[f64]) -> f64 {
    (0..a.len()).map(|i| a[i] * m.row(i).iter().zip(b).map(|(x, y)| x * y).sum::<f64>()).sum()
}

fn quad_form(m: &DenseMatrix, a: &[f64]) -> f64 {
    let k = a.len();
    let mut s = 0.0;
    for i in 0..k {
        let row = m.row(i);
        s += a[i] * row.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
    }
    s
}

fn argmax(values: &[f64], keep: impl Fn(usize) -> bool) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
}

fn argmin(values: &[f64], keep: impl Fn(usize) -> bool) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc })
}

/// SPA on the rows of `m` after mapping them through `(L*)^{1/2}`.
pub fn preconditioned_spa(m: &DenseMatrix, r: usize) -> Result<AnchorIndexSet> {
    let pre = mvee_origin(m)?;
    // rows aᵢᵀ (L*)^{1/2}; the square root is symmetric
    let transformed = m.matmul(&pre.sqrt_l_star)?;
    spa(&transformed, r)
}
