//! End-to-end acceptance checks. Runs as a plain binary so the criteria execute
//! one after another (wall-clock budgets are meaningless under a parallel test
//! harness) and each prints a single PASS/FAIL line.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use spoc_core::linalg::{singular_values, spectral_norm, truncated_svd, DenseMatrix};
use spoc_core::metrics::{concentration_threshold, perm_min_error, procrustes_align, ErrorNorm};
use spoc_core::spa::{mvee_origin, spa};
use spoc_core::spoc::{estimate_k, fit_adaptive, fit_w, SpocOptions};
use spoc_core::synth::{
    gen_a_anchor, gen_w_dirichlet, generate_truth, lower_bound_fixture, sample_corpus, AnchorWeighting, RngSeed,
    TopicModelTruth, TopicPrior, TruthSpec,
};

type Outcome = std::result::Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let filter: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let criteria = [
        Criterion { id: 1, name: "noiseless exact recovery", budget: secs(1), run: noiseless_recovery },
        Criterion { id: 2, name: "error rate in N", budget: secs(120), run: rate_in_n },
        Criterion { id: 3, name: "error rate in n", budget: secs(120), run: rate_in_docs },
        Criterion { id: 4, name: "weak dependence on p", budget: secs(180), run: rate_in_p },
        Criterion { id: 5, name: "adaptive K", budget: secs(120), run: adaptive_k },
        Criterion { id: 6, name: "concentration of X - Pi", budget: secs(60), run: concentration },
        Criterion { id: 7, name: "SPA vs max-volume subset", budget: secs(10), run: spa_oracle },
        Criterion { id: 8, name: "MVEE feasibility and optimality", budget: secs(30), run: mvee_oracle },
        Criterion { id: 9, name: "permutation metric exactness", budget: secs(10), run: perm_metric },
        Criterion { id: 10, name: "singular value bounds for W and Pi", budget: secs(30), run: singular_bounds },
        Criterion { id: 11, name: "subspace perturbation bound", budget: secs(60), run: davis_kahan },
        Criterion { id: 12, name: "lower-bound fixture bands", budget: secs(10), run: fixture_bands },
    ];

    let mut failed = 0;
    for c in criteria.iter().filter(|c| filter.is_none_or(|f| f == c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget {:?}", c.budget)),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<36} {} ({:.2}s) {}",
            c.id,
            c.name,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    RngSeed::new(seed, stream).rng()
}

fn noiseless_recovery() -> Outcome {
    let spec = TruthSpec::three_topic_dirichlet(60, 40);
    let truth = generate_truth(&spec, &mut rng(11, 0)).map_err(|e| e.to_string())?;
    let (truth, _) = truth.shuffle_documents(&mut rng(11, 1));
    let est = fit_w(&truth.pi, 3, &SpocOptions::default()).map_err(|e| e.to_string())?;
    let w_err = perm_min_error(&est.w_hat, &truth.w, ErrorNorm::Fro).map_err(|e| e.to_string())?;
    // A is K×p, so compare Âᵀ against Aᵀ column-wise
    let a_err =
        perm_min_error(&est.a_hat.transpose(), &truth.a.transpose(), ErrorNorm::Fro).map_err(|e| e.to_string())?;
    check(
        w_err.fro <= 1e-8 && a_err.fro <= 1e-6,
        format!("W error {:.2e}, A error {:.2e}", w_err.fro, a_err.fro),
    )
}

/// Mean permutation-minimized Frobenius error over `seeds` corpora.
fn mean_error(n: usize, p: usize, n_words: usize, seeds: u64) -> std::result::Result<f64, String> {
    let mut total = 0.0;
    for seed in 0..seeds {
        let spec = TruthSpec::three_topic_dirichlet(n, p);
        let truth = generate_truth(&spec, &mut rng(seed, 0)).map_err(|e| e.to_string())?;
        let x = sample_corpus(&truth, n_words, &mut rng(seed, 1)).map_err(|e| e.to_string())?.x;
        let est = fit_w(&x, 3, &SpocOptions::default()).map_err(|e| e.to_string())?;
        total += perm_min_error(&est.w_hat, &truth.w, ErrorNorm::Fro).map_err(|e| e.to_string())?.fro;
    }
    Ok(total / seeds as f64)
}

fn rate_in_n() -> Outcome {
    let lo = mean_error(300, 1000, 100, 20)?;
    let hi = mean_error(300, 1000, 400, 20)?;
    let ratio = lo / hi;
    check(
        (1.5..=2.7).contains(&ratio),
        format!("err(N=100) {lo:.3} / err(N=400) {hi:.3} = {ratio:.3}"),
    )
}

fn rate_in_docs() -> Outcome {
    let small = mean_error(250, 1000, 200, 20)?;
    let large = mean_error(1000, 1000, 200, 20)?;
    let ratio = large / small;
    check(
        (1.4..=2.8).contains(&ratio),
        format!("err(n=1000) {large:.3} / err(n=250) {small:.3} = {ratio:.3}"),
    )
}

fn rate_in_p() -> Outcome {
    let small = mean_error(300, 500, 200, 20)?;
    let large = mean_error(300, 4000, 200, 20)?;
    let ratio = large / small;
    check(ratio <= 1.5, format!("err(p=4000) {large:.3} / err(p=500) {small:.3} = {ratio:.3}"))
}

/// Dirichlet weights with heavy anchor words: λ_K(Π) sits well above the
/// noise level once N is large.
fn balanced_spec() -> TruthSpec {
    TruthSpec {
        anchor_weighting: AnchorWeighting::Scaled,
        ..TruthSpec::three_topic_dirichlet(300, 500)
    }
}

fn adaptive_k() -> Outcome {
    let n_words = 200_000;
    let spec = balanced_spec();
    let tau = concentration_threshold(spec.n, spec.p, n_words, 4.0);
    let (mut used, mut skipped, mut hits) = (0, 0, 0);
    for seed in 0..200 {
        if used == 50 {
            break;
        }
        let truth = generate_truth(&spec, &mut rng(500 + seed, 0)).map_err(|e| e.to_string())?;
        let lk = singular_values(&truth.pi).map_err(|e| e.to_string())?[spec.k - 1];
        if lk <= 2.0 * tau {
            skipped += 1;
            continue;
        }
        used += 1;
        let x = sample_corpus(&truth, n_words, &mut rng(500 + seed, 1)).map_err(|e| e.to_string())?.x;
        let k_hat = estimate_k(&x, n_words, 4.0).map_err(|e| e.to_string())?;
        if k_hat == spec.k {
            hits += 1;
            let adaptive = fit_adaptive(&x, n_words, &SpocOptions::default()).map_err(|e| e.to_string())?;
            let fixed = fit_w(&x, spec.k, &SpocOptions::default()).map_err(|e| e.to_string())?;
            if adaptive != fixed {
                return Err(format!("seed {seed}: adaptive and fixed-K fits differ"));
            }
        }
    }
    check(
        used == 50 && hits * 100 >= 95 * used,
        format!("K̂ = K in {hits}/{used} corpora ({skipped} truths below 2τ = {:.3} skipped)", 2.0 * tau),
    )
}

fn concentration() -> Outcome {
    let (n, p, n_words) = (200, 500, 100);
    let spec = TruthSpec::three_topic_dirichlet(n, p);
    let bound = concentration_threshold(n, p, n_words, 4.0);
    let (mut inside, mut worst) = (0, 0.0f64);
    for trial in 0..100 {
        let truth = generate_truth(&spec, &mut rng(900 + trial, 0)).map_err(|e| e.to_string())?;
        let x = sample_corpus(&truth, n_words, &mut rng(900 + trial, 1)).map_err(|e| e.to_string())?.x;
        let dev = spectral_norm(&x.sub(&truth.pi).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        worst = worst.max(dev / bound);
        if dev <= bound {
            inside += 1;
        }
    }
    check(
        inside >= 99,
        format!("{inside}/100 trials inside the bound, worst ‖X−Π‖/bound = {worst:.3}"),
    )
}

fn det(m: &DenseMatrix) -> f64 {
    // small sizes only: Gaussian elimination with partial pivoting
    let k = m.rows();
    let mut a: Vec<Vec<f64>> = m.row_iter().map(|r| r.to_vec()).collect();
    let mut d = 1.0;
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[piv][c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            a.swap(piv, c);
            d = -d;
        }
        d *= a[c][c];
        let (top, bottom) = a.split_at_mut(c + 1);
        let pivot_row = &top[c];
        for row in bottom.iter_mut() {
            let f = row[c] / pivot_row[c];
            for (x, p) in row[c..k].iter_mut().zip(&pivot_row[c..k]) {
                *x -= f * p;
            }
        }
    }
    d
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if n < k {
        return Vec::new();
    }
    let mut with_last: Vec<Vec<usize>> = subsets(n - 1, k - 1);
    for s in &mut with_last {
        s.push(n - 1);
    }
    let mut out = subsets(n - 1, k);
    out.extend(with_last);
    out
}

fn spa_oracle() -> Outcome {
    let mut r = rng(7, 0);
    for inst in 0..100 {
        let k = r.random_range(2..=4);
        let n = r.random_range(k + 1..=12);
        let p = r.random_range(2 * k..=20);
        let w = gen_w_dirichlet(n, k, &vec![0.5; k], &mut r).map_err(|e| e.to_string())?;
        let a = gen_a_anchor(k, p, &mut r).map_err(|e| e.to_string())?;
        let truth = TopicModelTruth::new(w.clone(), a.clone(), (0..k).collect(), (0..k).collect())
            .map_err(|e| e.to_string())?;
        let (truth, _) = truth.shuffle_documents(&mut r);
        let u = truth_svd_u(&truth.pi, k)?;

        let chosen: BTreeSet<usize> = spa(&u, k).map_err(|e| e.to_string())?.into_vec().into_iter().collect();
        let best = subsets(n, k)
            .into_iter()
            .max_by(|s, t| det(&u.select_rows(s)).abs().total_cmp(&det(&u.select_rows(t)).abs()))
            .unwrap();
        let best: BTreeSet<usize> = best.into_iter().collect();
        let anchors: BTreeSet<usize> = truth.anchor_docs.iter().copied().collect();
        if chosen != best || best != anchors {
            return Err(format!(
                "instance {inst} (n={n}, K={k}): SPA {chosen:?}, max-volume {best:?}, anchors {anchors:?}"
            ));
        }
    }
    Ok("100/100 instances agree".into())
}

fn truth_svd_u(pi: &DenseMatrix, k: usize) -> std::result::Result<DenseMatrix, String> {
    Ok(truncated_svd(pi, k).map_err(|e| e.to_string())?.u)
}

/// Cyclic pairwise coordinate ascent on the D-optimal design weights, run to a
/// tight tolerance. Returns `−log det` of the feasible ellipsoid it certifies.
fn reference_mvee(points: &DenseMatrix, tol: f64) -> f64 {
    let (n, k) = points.shape();
    let kf = k as f64;
    let mut u = vec![1.0 / n as f64; n];
    let moment = |u: &[f64]| {
        DenseMatrix::from_fn(k, k, |i, j| (0..n).map(|t| u[t] * points[(t, i)] * points[(t, j)]).sum())
    };
    let form = |m: &DenseMatrix, a: &[f64], b: &[f64]| -> f64 {
        (0..k).map(|i| (0..k).map(|j| a[i] * m[(i, j)] * b[j]).sum::<f64>()).sum()
    };
    for _sweep in 0..200_000 {
        let m_inv = moment(&u).inverse().unwrap();
        let g: Vec<f64> = (0..n).map(|i| form(&m_inv, points.row(i), points.row(i))).collect();
        let g_max = g.iter().cloned().fold(f64::MIN, f64::max);
        if g_max <= kf * (1.0 + tol) {
            return -det(&m_inv.scale(1.0 / g_max)).ln();
        }
        // one sweep of exact line searches over every ordered pair
        let mut m_inv = m_inv;
        for i in 0..n {
            for j in 0..n {
                if i == j || u[j] == 0.0 {
                    continue;
                }
                let (ai, aj) = (points.row(i), points.row(j));
                let gi = form(&m_inv, ai, ai);
                let gj = form(&m_inv, aj, aj);
                let gij = form(&m_inv, ai, aj);
                let curv = gi * gj - gij * gij;
                if gi <= gj || curv <= 0.0 {
                    continue;
                }
                let t = ((gi - gj) / (2.0 * curv)).min(u[j]);
                u[i] += t;
                u[j] = if t >= u[j] { 0.0 } else { u[j] - t };
                m_inv = moment(&u).inverse().unwrap();
            }
        }
    }
    f64::NAN
}

fn mvee_oracle() -> Outcome {
    let mut r = rng(8, 0);
    let (mut worst_feas, mut worst_obj) = (0.0f64, 0.0f64);
    for set in 0..50 {
        let k = r.random_range(2..=4);
        let n = r.random_range(k + 2..=25);
        let points = DenseMatrix::from_fn(n, k, |_, _| r.random_range(-1.0..1.0));
        let pre = mvee_origin(&points).map_err(|e| format!("set {set}: {e}"))?;
        let feas = (pre.max_constraint(&points) - 1.0).abs();
        let reference = reference_mvee(&points, 1e-10);
        if !reference.is_finite() {
            return Err(format!("set {set}: reference ascent did not converge"));
        }
        let gap = (pre.objective() - reference).abs();
        worst_feas = worst_feas.max(feas);
        worst_obj = worst_obj.max(gap);
        if feas > 1e-6 || gap > 1e-5 {
            return Err(format!("set {set} (n={n}, K={k}): |max aᵀLa − 1| = {feas:.2e}, objective gap {gap:.2e}"));
        }
    }
    Ok(format!("worst |max aᵀLa − 1| = {worst_feas:.2e}, worst objective gap = {worst_obj:.2e}"))
}

/// Every permutation of `0..k`, by Heap's algorithm.
fn all_perms(k: usize) -> Vec<Vec<usize>> {
    fn heap(m: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if m <= 1 {
            out.push(p.clone());
            return;
        }
        for i in 0..m {
            heap(m - 1, p, out);
            let j = if m.is_multiple_of(2) { i } else { 0 };
            p.swap(j, m - 1);
        }
    }
    let mut out = Vec::new();
    heap(k, &mut (0..k).collect(), &mut out);
    out
}

fn perm_metric() -> Outcome {
    let mut r = rng(9, 0);
    let mut worst = 0.0f64;
    for pair in 0..200 {
        let k = r.random_range(1..=6);
        let n = r.random_range(k..=30);
        let w = DenseMatrix::from_fn(n, k, |_, _| r.random::<f64>());
        let w_hat = DenseMatrix::from_fn(n, k, |_, _| r.random::<f64>());
        for norm in [ErrorNorm::Fro, ErrorNorm::L1, ErrorNorm::L1Inf] {
            let got = perm_min_error(&w_hat, &w, norm).map_err(|e| e.to_string())?.value();
            let brute = all_perms(k)
                .iter()
                .map(|perm| {
                    // column c of Ŵ is matched with column perm[c] of W
                    let diff = DenseMatrix::from_fn(n, k, |i, c| w_hat[(i, c)] - w[(i, perm[c])]);
                    match norm {
                        ErrorNorm::Fro => diff.fro_norm(),
                        ErrorNorm::L1 => diff.data().iter().map(|v| v.abs()).sum(),
                        ErrorNorm::L1Inf => diff
                            .row_iter()
                            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
                            .fold(0.0, f64::max),
                    }
                })
                .fold(f64::INFINITY, f64::min);
            let diff = (got - brute).abs();
            worst = worst.max(diff);
            if diff > 1e-12 {
                return Err(format!("pair {pair} ({norm:?}, K={k}): {got} vs brute force {brute}"));
            }
        }
    }
    Ok(format!("200 pairs x 3 norms, worst difference {worst:.1e}"))
}

fn singular_bounds() -> Outcome {
    let mut r = rng(10, 0);
    let eps = 1e-10;
    for draw in 0..100 {
        let k = r.random_range(2..=6);
        let n = r.random_range(k + 1..=400);
        let p = r.random_range(2 * k..=300);
        let prior = if draw % 2 == 0 {
            TopicPrior::Dirichlet((0..k).map(|_| r.random_range(0.05..2.0)).collect())
        } else {
            TopicPrior::Uniform
        };
        let spec = TruthSpec { n, k, p, prior, anchor_weighting: AnchorWeighting::Uniform };
        let truth = generate_truth(&spec, &mut r).map_err(|e| e.to_string())?;
        let sw = singular_values(&truth.w).map_err(|e| e.to_string())?;
        let sp = singular_values(&truth.pi).map_err(|e| e.to_string())?;
        let (nf, kf) = (n as f64, k as f64);
        let ok = sw[k - 1] >= 1.0 - eps
            && sw[0] >= (nf / kf).sqrt() - eps
            && sw[0] <= nf.sqrt() + eps
            && sp[k - 1] <= (nf / kf).sqrt() + eps;
        if !ok {
            return Err(format!(
                "draw {draw} (n={n}, K={k}): λ_K(W)={:.4}, λ₁(W)={:.4}, λ_K(Π)={:.4}",
                sw[k - 1],
                sw[0],
                sp[k - 1]
            ));
        }
    }
    Ok("100/100 draws inside all bounds".into())
}

fn davis_kahan() -> Outcome {
    let spec = balanced_spec();
    let k = spec.k;
    let n_words = 20_000;
    let (mut used, mut worst) = (0, 0.0f64);
    for seed in 0..200 {
        if used == 50 {
            break;
        }
        let truth = generate_truth(&spec, &mut rng(1300 + seed, 0)).map_err(|e| e.to_string())?;
        let x = sample_corpus(&truth, n_words, &mut rng(1300 + seed, 1)).map_err(|e| e.to_string())?.x;
        let sp = singular_values(&truth.pi).map_err(|e| e.to_string())?;
        let noise = spectral_norm(&x.sub(&truth.pi).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        if noise > sp[k - 1] / 2.0 {
            continue;
        }
        used += 1;
        let u_hat = truncated_svd(&x, k).map_err(|e| e.to_string())?.u;
        let u = truth_svd_u(&truth.pi, k)?;
        let o = procrustes_align(&u_hat, &u).map_err(|e| e.to_string())?;
        let resid = u_hat.sub(&u.matmul(&o).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?.fro_norm();
        let bound = 5.0 * (2.0 * k as f64).sqrt() * (sp[0] / sp[k - 1]) * noise / sp[k - 1];
        worst = worst.max(resid / bound);
        if resid > bound {
            return Err(format!("seed {seed}: residual {resid:.4} exceeds bound {bound:.4}"));
        }
    }
    check(
        used == 50,
        format!("{used} corpora checked, worst residual/bound = {worst:.3}"),
    )
}

fn fixture_bands() -> Outcome {
    let mut checked = 0;
    for &k in &[2usize, 4, 6] {
        for &n in &[12usize, 60, 240] {
            for &p in &[24usize, 120, 600] {
                for &n_words in &[12usize, 100, 1000] {
                    let Ok(fx) = lower_bound_fixture(n, k, p, n_words) else { continue };
                    let sw = singular_values(&fx.w).map_err(|e| e.to_string())?;
                    let sa = singular_values(&fx.a).map_err(|e| e.to_string())?;
                    let kappa = sw[0] / sw[k - 1];
                    if kappa > 3.0 || sa[k - 1] < 0.25 {
                        return Err(format!(
                            "(n={n}, K={k}, p={p}, N={n_words}): κ(W⁽⁰⁾)={kappa:.3}, λ_K(A)={:.3}",
                            sa[k - 1]
                        ));
                    }
                    checked += 1;
                }
            }
        }
    }
    check(checked > 0, format!("{checked} grid points inside both bands"))
}
