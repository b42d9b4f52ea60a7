//! Ground truth and corpus sampling under the pLSI model `Π = W·A`.
//!
//! Anchor documents occupy the first `K` rows of `W` and anchor words the
//! first `K` columns of `A`; [`TopicModelTruth::permute_documents`] moves
//! them elsewhere when a test needs it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpocError};
use crate::linalg::{DenseMatrix, TOL};

/// Seed plus substream id; identical pairs give identical draw sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModelTruth {
    pub w: DenseMatrix,
    pub a: DenseMatrix,
    pub pi: DenseMatrix,
    pub anchor_docs: Vec<usize>,
    pub anchor_words: Vec<usize>,
}

impl TopicModelTruth {
    /// Validates stochasticity and anchors, then forms `Π = W·A`.
    pub fn new(
        w: DenseMatrix,
        a: DenseMatrix,
        anchor_docs: Vec<usize>,
        anchor_words: Vec<usize>,
    ) -> Result<Self> {
        let k = w.cols();
        if a.rows() != k {
            return Err(SpocError::dims("TopicModelTruth", format!("{k} topic rows in A"), a.rows()));
        }
        check_stochastic(&w, "W")?;
        check_stochastic(&a, "A")?;

        if anchor_docs.len() != k {
            return Err(SpocError::InvalidParameter(format!(
                "expected {k} anchor documents, got {}",
                anchor_docs.len()
            )));
        }
        let mut covered = vec![false; k];
        for &d in &anchor_docs {
            let topic = (d < w.rows())
                .then(|| basis_index(w.row(d)))
                .flatten()
                .ok_or_else(|| SpocError::InvalidParameter(format!("row {d} of W is not an anchor")))?;
            if std::mem::replace(&mut covered[topic], true) {
                return Err(SpocError::InvalidParameter(format!(
                    "topic {topic} has two anchor documents"
                )));
            }
        }
        for &j in &anchor_words {
            let nonzero = (0..k).filter(|&t| j < a.cols() && a[(t, j)] > 0.0).count();
            if nonzero != 1 {
                return Err(SpocError::InvalidParameter(format!(
                    "column {j} of A is not an anchor word"
                )));
            }
        }

        let pi = w.matmul(&a)?;
        Ok(Self {
            w,
            a,
            pi,
            anchor_docs,
            anchor_words,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.w.rows()
    }

    pub fn n_topics(&self) -> usize {
        self.w.cols()
    }

    pub fn n_words(&self) -> usize {
        self.a.cols()
    }

    /// Row `i` of the result is document `perm[i]` of `self`.
    pub fn permute_documents(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_docs();
        let mut inverse = vec![usize::MAX; n];
        if perm.len() != n {
            return Err(SpocError::dims("permute_documents", n, perm.len()));
        }
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(SpocError::InvalidParameter("not a permutation".into()));
            }
            inverse[old] = new;
        }
        Ok(Self {
            w: self.w.permute_rows(perm),
            a: self.a.clone(),
            pi: self.pi.permute_rows(perm),
            anchor_docs: self.anchor_docs.iter().map(|&d| inverse[d]).collect(),
            anchor_words: self.anchor_words.clone(),
        })
    }

    pub fn shuffle_documents<R: Rng + ?Sized>(&self, rng: &mut R) -> (Self, Vec<usize>) {
        let mut perm: Vec<usize> = (0..self.n_docs()).collect();
        perm.shuffle(rng);
        let shuffled = self
            .permute_documents(&perm)
            .expect("shuffled indices form a permutation");
        (shuffled, perm)
    }
}

fn basis_index(row: &[f64]) -> Option<usize> {
    let ones: Vec<usize> = (0..row.len()).filter(|&j| row[j] == 1.0).collect();
    (ones.len() == 1 && row.iter().filter(|&&v| v != 0.0).count() == 1).then(|| ones[0])
}

fn check_stochastic(m: &DenseMatrix, name: &str) -> Result<()> {
    for (i, row) in m.row_iter().enumerate() {
        if let Some(j) = row.iter().position(|&v| v < 0.0) {
            return Err(SpocError::InvalidParameter(format!(
                "{name}[{i}, {j}] is negative"
            )));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > TOL.stochastic {
            return Err(SpocError::InvalidParameter(format!(
                "row {i} of {name} sums to {s}"
            )));
        }
    }
    Ok(())
}

/// Observed frequency matrix with a common document length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSample {
    pub x: DenseMatrix,
    pub n_words: usize,
}

impl CorpusSample {
    /// Integer word counts `N · X`.
    pub fn counts(&self) -> Vec<Vec<u64>> {
        let n = self.n_words as f64;
        self.x
            .row_iter()
            .map(|r| r.iter().map(|v| (v * n).round() as u64).collect())
            .collect()
    }
}

pub fn dirichlet_sample<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(SpocError::InvalidParameter("empty Dirichlet parameter".into()));
    }
    if let Some(a) = alpha.iter().find(|&&a| !(a > 0.0 && a.is_finite())) {
        return Err(SpocError::InvalidParameter(format!(
            "Dirichlet parameter {a} is not positive"
        )));
    }
    if alpha.len() == 1 {
        return Ok(vec![1.0]);
    }
    let gammas: Vec<Gamma<f64>> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("validated shape"))
        .collect();
    loop {
        let draws: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        // all-underflow draws are possible for tiny shapes; redraw
        if total > 0.0 && total.is_finite() {
            return Ok(draws.into_iter().map(|d| d / total).collect());
        }
    }
}

fn check_sizes(n: usize, k: usize, what: &str) -> Result<()> {
    if k < 2 || n < k {
        return Err(SpocError::InvalidParameter(format!(
            "{what} requires n >= k >= 2 (got n = {n}, k = {k})"
        )));
    }
    Ok(())
}

fn anchored_rows<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> Result<Vec<f64>>,
) -> Result<DenseMatrix> {
    let mut data = Vec::with_capacity(n * k);
    for i in 0..k {
        data.extend((0..k).map(|j| if i == j { 1.0 } else { 0.0 }));
    }
    for _ in k..n {
        data.extend(draw(rng)?);
    }
    DenseMatrix::new(n, k, data)
}

/// `n × k` topic weights: identity on the first `k` rows, Dirichlet(`alpha`) rows after.
pub fn gen_w_dirichlet<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    alpha: &[f64],
    rng: &mut R,
) -> Result<DenseMatrix> {
    check_sizes(n, k, "gen_w_dirichlet")?;
    if alpha.len() != k {
        return Err(SpocError::dims("gen_w_dirichlet", format!("{k} alpha components"), alpha.len()));
    }
    anchored_rows(n, k, rng, |rng| dirichlet_sample(alpha, rng))
}

/// `n × k` topic weights: identity on the first `k` rows, normalized uniform rows after.
pub fn gen_w_uniform<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<DenseMatrix> {
    check_sizes(n, k, "gen_w_uniform")?;
    anchored_rows(n, k, rng, |rng| {
        loop {
            let row: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                return Ok(row.into_iter().map(|v| v / total).collect());
            }
        }
    })
}

/// How the anchor-word column of each topic is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorWeighting {
    /// Anchor entry drawn uniformly like every other entry, then the row is normalized.
    #[default]
    Uniform,
    /// Anchor entry `U_k ~ U[0,1]` kept as is; the other columns are rescaled to sum to `1 − U_k`.
    Scaled,
}

/// `k × p` topic-word matrix with anchor words in columns `0..k`.
pub fn gen_a_anchor<R: Rng + ?Sized>(k: usize, p: usize, rng: &mut R) -> Result<DenseMatrix> {
    gen_a_anchor_with(k, p, AnchorWeighting::Uniform, rng)
}

pub fn gen_a_anchor_with<R: Rng + ?Sized>(
    k: usize,
    p: usize,
    weighting: AnchorWeighting,
    rng: &mut R,
) -> Result<DenseMatrix> {
    if k < 2 || p < k {
        return Err(SpocError::InvalidParameter(format!(
            "gen_a_anchor requires p >= k >= 2 (got k = {k}, p = {p})"
        )));
    }
    let mut a = DenseMatrix::zeros(k, p);
    for t in 0..k {
        let anchor = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        let row = a.row_mut(t);
        row[t] = anchor;
        for v in &mut row[k..] {
            *v = rng.random();
        }
        match weighting {
            AnchorWeighting::Uniform => {
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= total);
            }
            AnchorWeighting::Scaled => {
                let rest: f64 = row[k..].iter().sum();
                if rest > 0.0 {
                    let target = 1.0 - anchor;
                    row[k..].iter_mut().for_each(|v| *v *= target / rest);
                } else {
                    row[t] = 1.0;
                }
            }
        }
    }
    Ok(a)
}

/// Rule for generating the non-anchor rows of `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicPrior {
    Dirichlet(Vec<f64>),
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub n: usize,
    pub k: usize,
    pub p: usize,
    pub prior: TopicPrior,
    #[serde(default)]
    pub anchor_weighting: AnchorWeighting,
}

impl TruthSpec {
    /// Dirichlet(0.1, 0.15, 0.2) weights with three topics.
    pub fn three_topic_dirichlet(n: usize, p: usize) -> Self {
        Self {
            n,
            k: 3,
            p,
            prior: TopicPrior::Dirichlet(vec![0.1, 0.15, 0.2]),
            anchor_weighting: AnchorWeighting::Uniform,
        }
    }
}

pub fn generate_truth<R: Rng + ?Sized>(spec: &TruthSpec, rng: &mut R) -> Result<TopicModelTruth> {
    let w = match &spec.prior {
        TopicPrior::Dirichlet(alpha) => gen_w_dirichlet(spec.n, spec.k, alpha, rng)?,
        TopicPrior::Uniform => gen_w_uniform(spec.n, spec.k, rng)?,
    };
    let a = gen_a_anchor_with(spec.k, spec.p, spec.anchor_weighting, rng)?;
    TopicModelTruth::new(w, a, (0..spec.k).collect(), (0..spec.k).collect())
}

/// Draws `N` words per document: `N · X_i ~ Multinomial(N, Π_i)`.
pub fn sample_corpus<R: Rng + ?Sized>(
    truth: &TopicModelTruth,
    n_words: usize,
    rng: &mut R,
) -> Result<CorpusSample> {
    if n_words == 0 {
        return Err(SpocError::InvalidParameter("n_words must be at least 1".into()));
    }
    let (n, p) = truth.pi.shape();
    let mut x = DenseMatrix::zeros(n, p);
    let scale = n_words as f64;
    for i in 0..n {
        let row = truth.pi.row(i);
        let Some(last) = row.iter().rposition(|&v| v > 0.0) else {
            return Err(SpocError::InvalidParameter(format!("row {i} of Π has no positive entry")));
        };
        // multinomial as a chain of conditional binomials: O(p) per document
        let mut remaining = n_words as u64;
        let mut rest: f64 = row.iter().filter(|v| **v > 0.0).sum();
        let out = x.row_mut(i);
        for (j, &w) in row.iter().enumerate().take(last + 1) {
            if remaining == 0 {
                break;
            }
            if w <= 0.0 {
                continue;
            }
            let q = if j == last { 1.0 } else { (w / rest).min(1.0) };
            let c = if q >= 1.0 {
                remaining
            } else {
                Binomial::new(remaining, q)
                    .map_err(|e| SpocError::InvalidParameter(format!("row {i} of Π: {e}")))?
                    .sample(rng)
            };
            out[j] = c as f64 / scale;
            remaining -= c;
            rest -= w;
        }
    }
    Ok(CorpusSample { x, n_words })
}

/// Base pair `(W⁽⁰⁾, A)` of the minimax lower-bound construction.
///
/// `W⁽⁰⁾` stacks `I_K` on top of `n/K − 1` copies of `(1 − Kγ)I_K + γ𝟙` with
/// `γ = 1/(4K)`; `A = ((N − K)/N)·A⁰ + (K/(pN))·𝟙` where `A⁰` puts topic `t`'s
/// unit mass on the first column of its block of `p/K` columns.
pub fn lower_bound_fixture(n: usize, k: usize, p: usize, n_words: usize) -> Result<TopicModelTruth> {
    let bad = |msg: String| Err(SpocError::InvalidParameter(msg));
    if k < 2 || !k.is_multiple_of(2) {
        return bad(format!("k = {k} must be even and at least 2"));
    }
    if !n.is_multiple_of(k) || !p.is_multiple_of(k) {
        return bad(format!("n = {n} and p = {p} must be multiples of k = {k}"));
    }
    if 4 * k > p || 2 * k > n_words || 2 * k > n {
        return bad(format!(
            "need k <= min(p/4, N/2, n/2) (k = {k}, n = {n}, p = {p}, N = {n_words})"
        ));
    }

    let kf = k as f64;
    let gamma = 1.0 / (4.0 * kf);
    let w = DenseMatrix::from_fn(n, k, |i, j| {
        if i < k {
            if i == j { 1.0 } else { 0.0 }
        } else if (i - k) % k == j {
            1.0 - kf * gamma + gamma
        } else {
            gamma
        }
    });

    let block = p / k;
    let nf = n_words as f64;
    let base = (nf - kf) / nf;
    let floor = kf / (p as f64 * nf);
    let a = DenseMatrix::from_fn(k, p, |t, j| if j == t * block { base + floor } else { floor });

    TopicModelTruth::new(w, a, (0..k).collect(), Vec::new())
}
