//! Permutation-invariant errors, Procrustes alignment and evaluators for the
//! quantities that drive the error bounds.
//!
//! Bound evaluators use unit constants: they describe how a bound scales, not
//! its absolute level.

use serde::{Deserialize, Serialize};

use crate::assignment::{exhaustive, hungarian, min_cost_assignment, EXHAUSTIVE_LIMIT};
use crate::error::{Result, SpocError};
use crate::linalg::{condition_from_values, spectral_norm, top_singular_values, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorNorm {
    Fro,
    L1,
    L1Inf,
}

/// Errors of `Ŵ` against `W·P` for the permutation minimizing `norm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub fro: f64,
    pub l1: f64,
    pub l1_inf: f64,
    /// `permutation[c]` is the true column matched to estimated column `c`.
    pub permutation: Vec<usize>,
    pub norm: ErrorNorm,
    /// False only for `l1_inf` with more than eight columns, where the
    /// permutation comes from the ℓ1 assignment and the value is an upper bound.
    pub exact: bool,
}

impl ErrorReport {
    pub fn value(&self) -> f64 {
        match self.norm {
            ErrorNorm::Fro => self.fro,
            ErrorNorm::L1 => self.l1,
            ErrorNorm::L1Inf => self.l1_inf,
        }
    }
}

fn column_cost(w_hat: &DenseMatrix, w: &DenseMatrix, f: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
    let k = w.cols();
    let mut cost = vec![vec![0.0; k]; k];
    for (rh, rw) in w_hat.row_iter().zip(w.row_iter()) {
        for (c, row) in cost.iter_mut().enumerate() {
            for (l, entry) in row.iter_mut().enumerate() {
                *entry += f(rh[c] - rw[l]);
            }
        }
    }
    cost
}

/// Errors of `w_hat` against `w` with columns of `w` reordered by `perm`.
pub fn errors_for_permutation(w_hat: &DenseMatrix, w: &DenseMatrix, perm: &[usize]) -> (f64, f64, f64) {
    let mut fro = 0.0;
    let mut l1 = 0.0;
    let mut l1_inf = 0.0_f64;
    for (rh, rw) in w_hat.row_iter().zip(w.row_iter()) {
        let mut row_l1 = 0.0;
        for (c, &l) in perm.iter().enumerate() {
            let d = rh[c] - rw[l];
            fro += d * d;
            row_l1 += d.abs();
        }
        l1 += row_l1;
        l1_inf = l1_inf.max(row_l1);
    }
    (fro.sqrt(), l1, l1_inf)
}

fn row_l1_inf(w_hat: &DenseMatrix, w: &DenseMatrix, perm: &[usize]) -> f64 {
    w_hat
        .row_iter()
        .zip(w.row_iter())
        .map(|(rh, rw)| perm.iter().enumerate().map(|(c, &l)| (rh[c] - rw[l]).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `min_P ‖Ŵ − W·P‖` over column permutations `P`.
pub fn perm_min_error(w_hat: &DenseMatrix, w: &DenseMatrix, norm: ErrorNorm) -> Result<ErrorReport> {
    if w_hat.shape() != w.shape() {
        return Err(SpocError::dims(
            "perm_min_error",
            format!("{}x{}", w.rows(), w.cols()),
            format!("{}x{}", w_hat.rows(), w_hat.cols()),
        ));
    }
    w_hat.check_finite()?;
    w.check_finite()?;
    let k = w.cols();
    let (permutation, exact) = match norm {
        ErrorNorm::Fro => (min_cost_assignment(&column_cost(w_hat, w, |d| d * d)).0, true),
        ErrorNorm::L1 => (min_cost_assignment(&column_cost(w_hat, w, f64::abs)).0, true),
        ErrorNorm::L1Inf if k <= EXHAUSTIVE_LIMIT => {
            (exhaustive(k, |perm| row_l1_inf(w_hat, w, perm)).0, true)
        }
        ErrorNorm::L1Inf => (hungarian(&column_cost(w_hat, w, f64::abs)), false),
    };
    let (fro, l1, l1_inf) = errors_for_permutation(w_hat, w, &permutation);
    Ok(ErrorReport {
        fro,
        l1,
        l1_inf,
        permutation,
        norm,
        exact,
    })
}

/// Orthogonal `O` minimizing `‖Û − U·O‖_F`.
pub fn procrustes_align(u_hat: &DenseMatrix, u: &DenseMatrix) -> Result<DenseMatrix> {
    if u_hat.shape() != u.shape() {
        return Err(SpocError::dims(
            "procrustes_align",
            format!("{}x{}", u.rows(), u.cols()),
            format!("{}x{}", u_hat.rows(), u_hat.cols()),
        ));
    }
    u_hat.check_finite()?;
    u.check_finite()?;
    let cross = u.to_nalgebra().tr_mul(&u_hat.to_nalgebra());
    let svd = cross.svd(true, true);
    let o = svd.u.expect("requested U") * svd.v_t.expect("requested Vᵀ");
    Ok(DenseMatrix::from_nalgebra(&o))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaValues {
    pub beta: f64,
    pub rows: Vec<f64>,
}

fn leading_pair(m: &DenseMatrix, k: usize) -> Result<(f64, f64)> {
    let s = top_singular_values(m, k)?;
    let kappa = condition_from_values(&s, k)?;
    Ok((s[0], s[0] / kappa))
}

/// Row perturbation levels `β_i(X, Π)` and their maximum `β`.
pub fn beta(x: &DenseMatrix, pi: &DenseMatrix, k: usize) -> Result<BetaValues> {
    let diff = x.sub(pi)?;
    let (l1, lk) = leading_pair(pi, k)?;
    let kappa = l1 / lk;
    let noise = spectral_norm(&diff)?;
    let lead = (k as f64).sqrt() * kappa * kappa * noise / (lk * lk);
    let rows: Vec<f64> = x
        .row_iter()
        .zip(diff.row_iter())
        .map(|(xr, dr)| {
            let xn = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dn = dr.iter().map(|v| v * v).sum::<f64>().sqrt();
            lead * xn + dn / lk
        })
        .collect();
    let beta = rows.iter().cloned().fold(0.0, f64::max);
    Ok(BetaValues { beta, rows })
}

/// Right-hand side `C̄ / (λ₁(W) κ(W) K √K)` of the row-perturbation condition.
pub fn beta_tolerance(w: &DenseMatrix, k: usize, c_bar: f64) -> Result<f64> {
    let (l1, lk) = leading_pair(w, k)?;
    let kf = k as f64;
    Ok(c_bar / (l1 * (l1 / lk) * kf * kf.sqrt()))
}

/// `Δ(W, Π) = (λ₁(W)/λ_K(Π))² κ(W) κ²(Π)`.
pub fn delta(w: &DenseMatrix, pi: &DenseMatrix, k: usize) -> Result<f64> {
    let (w1, wk) = leading_pair(w, k)?;
    let (p1, pk) = leading_pair(pi, k)?;
    Ok(delta_from_values(w1, wk, p1, pk))
}

pub fn delta_from_values(w1: f64, wk: f64, p1: f64, pk: f64) -> f64 {
    let ratio = w1 / pk;
    let kp = p1 / pk;
    ratio * ratio * (w1 / wk) * kp * kp
}

/// `c · √(n log(n+p) / N)`.
pub fn concentration_threshold(n: usize, p: usize, n_words: usize, c: f64) -> f64 {
    let (n, p, nw) = (n as f64, p as f64, n_words as f64);
    c * (n * (n + p).ln() / nw).sqrt()
}

/// `K √(n log(n+p) / N) · Δ`, the Frobenius bound with unit constant.
pub fn fro_bound_shape(k: usize, n: usize, p: usize, n_words: usize, delta_val: f64) -> f64 {
    k as f64 * concentration_threshold(n, p, n_words, 1.0) * delta_val
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub beta: f64,
    pub beta_rows: Vec<f64>,
    pub delta: f64,
    pub threshold: f64,
}

/// All bound ingredients for one sampled corpus, with the constant-4 threshold.
pub fn bound_inputs(
    x: &DenseMatrix,
    pi: &DenseMatrix,
    w: &DenseMatrix,
    k: usize,
    n_words: usize,
) -> Result<BoundInputs> {
    let b = beta(x, pi, k)?;
    Ok(BoundInputs {
        beta: b.beta,
        beta_rows: b.rows,
        delta: delta(w, pi, k)?,
        threshold: concentration_threshold(x.rows(), x.cols(), n_words, 4.0),
    })
}

/// `‖OᵀO − I‖_max`, for checking alignment output.
pub fn orthogonality_defect(o: &DenseMatrix) -> f64 {
    let g = o.transpose().matmul(o).expect("square");
    g.max_abs_diff(&DenseMatrix::identity(o.cols())).expect("same shape")
}
