//! The estimation pipeline.
//!
//! `fit_w` takes the rank-`K` SVD `X ≈ Û L̂ V̂ᵀ`, runs (preconditioned) SPA on the
//! rows of `Û` to pick `K` anchor documents `J`, sets `Ĥ = Û_J` and returns
//! `Ŵ = Û Ĥ⁻¹` together with `Â = Ĥ L̂ V̂ᵀ`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpocError};
use crate::linalg::{singular_values, top_singular_values, truncated_svd, DenseMatrix, SvdResult, TOL};
use crate::metrics::concentration_threshold;
use crate::spa::{preconditioned_spa, spa, AnchorIndexSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpocOptions {
    pub preconditioned: bool,
    pub clip_to_simplex: bool,
    pub threshold_const: f64,
    pub singularity_tol: f64,
    /// Largest number of topics the adaptive rule may return.
    pub k_cap: usize,
}

impl Default for SpocOptions {
    fn default() -> Self {
        Self {
            preconditioned: true,
            clip_to_simplex: false,
            threshold_const: 4.0,
            singularity_tol: TOL.singularity,
            k_cap: 50,
        }
    }
}

impl SpocOptions {
    pub fn plain() -> Self {
        Self {
            preconditioned: false,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.threshold_const > 0.0 && self.threshold_const.is_finite()) {
            return Err(SpocError::InvalidParameter(format!(
                "threshold_const must be positive, got {}",
                self.threshold_const
            )));
        }
        if !(self.singularity_tol > 0.0 && self.singularity_tol.is_finite()) {
            return Err(SpocError::InvalidParameter(format!(
                "singularity_tol must be positive, got {}",
                self.singularity_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpocEstimate {
    /// Estimated topic weights, projected onto the simplex when `clipped`.
    pub w_hat: DenseMatrix,
    /// `Û Ĥ⁻¹` before any projection.
    pub w_raw: DenseMatrix,
    pub h_hat: DenseMatrix,
    pub a_hat: DenseMatrix,
    pub u_hat: DenseMatrix,
    pub l_hat: Vec<f64>,
    pub v_hat: DenseMatrix,
    pub k_used: usize,
    pub anchors: AnchorIndexSet,
    pub preconditioned: bool,
    pub clipped: bool,
}

pub fn fit_w(x: &DenseMatrix, k: usize, opts: &SpocOptions) -> Result<SpocEstimate> {
    opts.validate()?;
    x.check_finite()?;
    let max = x.rows().min(x.cols());
    if k < 2 || k > max {
        return Err(SpocError::RankOutOfRange { k, max });
    }
    let svd = truncated_svd(x, k)?;
    fit_from_svd(svd, opts)
}

/// Runs the anchor selection and inversion steps on a precomputed rank-`K` SVD.
pub fn fit_from_svd(svd: SvdResult, opts: &SpocOptions) -> Result<SpocEstimate> {
    opts.validate()?;
    let k = svd.rank();
    if k == 0 || svd.l[k - 1].partial_cmp(&(TOL.rank_relative * svd.l[0])) != Some(std::cmp::Ordering::Greater) {
        let found = svd.l.iter().filter(|&&s| s > TOL.rank_relative * svd.l[0]).count();
        return Err(SpocError::RankDeficient { requested: k, found });
    }
    let anchors = if opts.preconditioned {
        preconditioned_spa(&svd.u, k)?
    } else {
        spa(&svd.u, k)?
    };
    let h_hat = svd.u.select_rows(anchors.indices());

    let sv = singular_values(&h_hat)?;
    let ratio = if sv[0] > 0.0 { sv[k - 1] / sv[0] } else { 0.0 };
    if ratio < opts.singularity_tol {
        return Err(SpocError::DegenerateAnchors { ratio });
    }
    let h_inv = h_hat
        .inverse()
        .map_err(|_| SpocError::DegenerateAnchors { ratio })?;
    let w_raw = svd.u.matmul(&h_inv)?;
    let a_hat = estimate_a(&h_hat, &svd.l, &svd.v)?;
    let w_hat = if opts.clip_to_simplex {
        project_rows_to_simplex(&w_raw)
    } else {
        w_raw.clone()
    };

    Ok(SpocEstimate {
        w_hat,
        w_raw,
        h_hat,
        a_hat,
        u_hat: svd.u,
        l_hat: svd.l,
        v_hat: svd.v,
        k_used: k,
        anchors,
        preconditioned: opts.preconditioned,
        clipped: opts.clip_to_simplex,
    })
}

/// `Â = Ĥ · diag(l̂) · V̂ᵀ`.
pub fn estimate_a(h_hat: &DenseMatrix, l_hat: &[f64], v_hat: &DenseMatrix) -> Result<DenseMatrix> {
    let k = h_hat.rows();
    if h_hat.cols() != k || l_hat.len() != k || v_hat.cols() != k {
        return Err(SpocError::dims(
            "estimate_a",
            format!("{k}x{k} Ĥ, {k} singular values, p x {k} V̂"),
            format!(
                "{}x{} Ĥ, {} singular values, {}x{} V̂",
                h_hat.rows(),
                h_hat.cols(),
                l_hat.len(),
                v_hat.rows(),
                v_hat.cols()
            ),
        ));
    }
    let scaled = DenseMatrix::from_fn(k, k, |i, j| h_hat[(i, j)] * l_hat[j]);
    scaled.matmul(&v_hat.transpose())
}

/// Number of singular values of `x` strictly above `c · √(n log(n+p) / N)`.
pub fn estimate_k(x: &DenseMatrix, n_words: usize, threshold_const: f64) -> Result<usize> {
    estimate_k_capped(x, n_words, threshold_const, SpocOptions::default().k_cap)
}

/// As [`estimate_k`], but errors once more than `cap` values clear the threshold.
pub fn estimate_k_capped(x: &DenseMatrix, n_words: usize, threshold_const: f64, cap: usize) -> Result<usize> {
    x.check_finite()?;
    if n_words == 0 {
        return Err(SpocError::InvalidParameter("n_words must be at least 1".into()));
    }
    if x.is_empty() {
        return Err(SpocError::InvalidParameter("empty observation matrix".into()));
    }
    let (n, p) = x.shape();
    let tau = concentration_threshold(n, p, n_words, threshold_const);
    let probe = (cap + 1).min(n.min(p));
    let values = top_singular_values(x, probe)?;
    let k_hat = values.iter().take_while(|&&s| s > tau).count();
    if k_hat > cap {
        return Err(SpocError::RankCapExceeded { k_hat, cap });
    }
    Ok(k_hat)
}

/// `fit_w` with `K` replaced by [`estimate_k`].
pub fn fit_adaptive(x: &DenseMatrix, n_words: usize, opts: &SpocOptions) -> Result<SpocEstimate> {
    opts.validate()?;
    let k_hat = estimate_k_capped(x, n_words, opts.threshold_const, opts.k_cap)?;
    if k_hat < 2 {
        return Err(SpocError::UnderdeterminedRank { k_hat });
    }
    fit_w(x, k_hat, opts)
}

/// Euclidean projection of every row onto the probability simplex.
pub fn project_rows_to_simplex(w: &DenseMatrix) -> DenseMatrix {
    let mut out = w.clone();
    let mut sorted = vec![0.0; w.cols()];
    for i in 0..w.rows() {
        let row = out.row_mut(i);
        sorted.copy_from_slice(row);
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut cumsum = 0.0;
        let mut theta = 0.0;
        for (j, &v) in sorted.iter().enumerate() {
            cumsum += v;
            let t = (cumsum - 1.0) / (j + 1) as f64;
            if v - t > 0.0 {
                theta = t;
            }
        }
        for v in row.iter_mut() {
            *v = (*v - theta).max(0.0);
        }
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        }
    }
    out
}
