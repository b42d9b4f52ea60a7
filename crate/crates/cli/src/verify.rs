//! Self-checks runnable from the command line. Every check is a small
//! Monte-Carlo or exact test; the report is a JSON verdict.

use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spoc_core::linalg::{singular_values, spectral_norm, truncated_svd};
use spoc_core::metrics::{concentration_threshold, perm_min_error, ErrorNorm};
use spoc_core::spa::{mvee_origin, spa};
use spoc_core::spoc::fit_w;
use spoc_core::synth::{generate_truth, lower_bound_fixture, sample_corpus, TopicPrior, TruthSpec};
use spoc_core::{DenseMatrix, RngSeed, SpocOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Invariants,
    Concentration,
    Rates,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub passed: bool,
    pub seed: u64,
    pub budget_seconds: f64,
    pub elapsed_seconds: f64,
    pub checks: Vec<CheckResult>,
}

type Outcome = std::result::Result<String, String>;
type CheckFn = fn(u64) -> Outcome;

fn checks_for(suite: Suite) -> Vec<(Suite, &'static str, CheckFn)> {
    let invariants: Vec<(Suite, &'static str, CheckFn)> = vec![
        (Suite::Invariants, "noiseless recovery", noiseless_recovery),
        (Suite::Invariants, "svd orthonormality", svd_orthonormal),
        (Suite::Invariants, "spa finds anchors", spa_anchors),
        (Suite::Invariants, "mvee feasibility", mvee_feasible),
        (Suite::Invariants, "permutation metric", perm_metric),
        (Suite::Invariants, "singular value bounds", singular_bounds),
        (Suite::Invariants, "lower-bound fixture", fixture_bands),
    ];
    let concentration: Vec<(Suite, &'static str, CheckFn)> =
        vec![(Suite::Concentration, "spectral deviation of X", concentration)];
    let rates: Vec<(Suite, &'static str, CheckFn)> = vec![
        (Suite::Rates, "error ratio in N", rate_in_length),
        (Suite::Rates, "error ratio in n", rate_in_docs),
        (Suite::Rates, "error ratio in p", rate_in_words),
    ];
    match suite {
        Suite::Invariants => invariants,
        Suite::Concentration => concentration,
        Suite::Rates => rates,
        Suite::All => invariants.into_iter().chain(concentration).chain(rates).collect(),
    }
}

/// Runs the suite's checks in order. Checks that would start after the
/// budget is spent are reported as failed rather than silently dropped.
pub fn run_verify(suite: Suite, budget: Duration, seed: u64) -> VerifyReport {
    let start = Instant::now();
    let mut checks = Vec::new();
    for (tag, name, check) in checks_for(suite) {
        if start.elapsed() > budget {
            checks.push(CheckResult {
                suite: tag,
                name: name.to_string(),
                passed: false,
                detail: "not run: time budget exhausted".into(),
                seconds: 0.0,
            });
            continue;
        }
        let t = Instant::now();
        let outcome = check(seed);
        let (passed, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        log::info!("{name}: {} ({detail})", if passed { "pass" } else { "FAIL" });
        checks.push(CheckResult {
            suite: tag,
            name: name.to_string(),
            passed,
            detail,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    let elapsed = start.elapsed();
    VerifyReport {
        suite,
        passed: checks.iter().all(|c| c.passed) && elapsed <= budget,
        seed,
        budget_seconds: budget.as_secs_f64(),
        elapsed_seconds: elapsed.as_secs_f64(),
        checks,
    }
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn noiseless_recovery(seed: u64) -> Outcome {
    let truth = generate_truth(&TruthSpec::three_topic_dirichlet(60, 40), &mut RngSeed::new(seed, 1).rng()).map_err(e2s)?;
    let est = fit_w(&truth.pi, 3, &SpocOptions::default()).map_err(e2s)?;
    let err = perm_min_error(&est.w_hat, &truth.w, ErrorNorm::Fro).map_err(e2s)?.fro;
    check(err <= 1e-8, format!("Frobenius error {err:.2e}"))
}

fn svd_orthonormal(seed: u64) -> Outcome {
    let mut rng = RngSeed::new(seed, 2).rng();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (r, c) = (rng.random_range(5..60), rng.random_range(5..60));
        let m = DenseMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let k = rng.random_range(1..=r.min(c));
        let svd = truncated_svd(&m, k).map_err(e2s)?;
        let gram = svd.u.transpose().matmul(&svd.u).map_err(e2s)?;
        worst = worst.max(gram.max_abs_diff(&DenseMatrix::identity(k)).map_err(e2s)?);
    }
    check(worst <= 1e-10, format!("worst |UᵀU − I| = {worst:.2e}"))
}

fn spa_anchors(seed: u64) -> Outcome {
    let mut rng = RngSeed::new(seed, 3).rng();
    for i in 0..20 {
        let n = rng.random_range(10..80);
        let truth = generate_truth(&TruthSpec::three_topic_dirichlet(n, 30), &mut rng).map_err(e2s)?;
        let (truth, _) = truth.shuffle_documents(&mut rng);
        let u = truncated_svd(&truth.pi, 3).map_err(e2s)?.u;
        let mut got = spa(&u, 3).map_err(e2s)?.into_vec();
        got.sort_unstable();
        let mut want = truth.anchor_docs.clone();
        want.sort_unstable();
        if got != want {
            return Err(format!("instance {i}: picked {got:?}, anchors {want:?}"));
        }
    }
    Ok("20/20 instances".into())
}

fn mvee_feasible(seed: u64) -> Outcome {
    let mut rng = RngSeed::new(seed, 4).rng();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let k = rng.random_range(2..=5);
        let n = rng.random_range(k + 1..200);
        let pts = DenseMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let pre = mvee_origin(&pts).map_err(e2s)?;
        worst = worst.max((pre.max_constraint(&pts) - 1.0).abs());
    }
    check(worst <= 1e-6, format!("worst |max aᵀLa − 1| = {worst:.2e}"))
}

fn perm_metric(seed: u64) -> Outcome {
    let mut rng = RngSeed::new(seed, 5).rng();
    for _ in 0..50 {
        let k = rng.random_range(1..=5);
        let n = rng.random_range(k..20);
        let w = DenseMatrix::from_fn(n, k, |_, _| rng.random::<f64>());
        let perm = {
            let mut p: Vec<usize> = (0..k).collect();
            for i in (1..k).rev() {
                p.swap(i, rng.random_range(0..=i));
            }
            p
        };
        let shuffled = w.select_columns(&perm);
        let err = perm_min_error(&shuffled, &w, ErrorNorm::L1Inf).map_err(e2s)?.l1_inf;
        if err > 1e-12 {
            return Err(format!("column-shuffled copy has error {err:e}"));
        }
    }
    Ok("50/50 shuffled copies matched exactly".into())
}

fn singular_bounds(seed: u64) -> Outcome {
    let mut rng = RngSeed::new(seed, 6).rng();
    for _ in 0..30 {
        let k = rng.random_range(2..=5);
        let n = rng.random_range(k + 1..300);
        let p = rng.random_range(2 * k..200);
        let spec = TruthSpec {
            n,
            k,
            p,
            prior: TopicPrior::Dirichlet(vec![0.3; k]),
            anchor_weighting: Default::default(),
        };
        let truth = generate_truth(&spec, &mut rng).map_err(e2s)?;
        let sw = singular_values(&truth.w).map_err(e2s)?;
        let sp = singular_values(&truth.pi).map_err(e2s)?;
        let (nf, kf) = (n as f64, k as f64);
        let eps = 1e-10;
        if sw[k - 1] < 1.0 - eps || sw[0] < (nf / kf).sqrt() - eps || sw[0] > nf.sqrt() + eps || sp[k - 1] > (nf / kf).sqrt() + eps {
            return Err(format!("violated at n={n}, K={k}"));
        }
    }
    Ok("30/30 draws".into())
}

fn fixture_bands(_seed: u64) -> Outcome {
    for (n, k, p, nw) in [(40, 2, 40, 50), (80, 4, 80, 100), (120, 6, 240, 500)] {
        let fx = lower_bound_fixture(n, k, p, nw).map_err(e2s)?;
        let sw = singular_values(&fx.w).map_err(e2s)?;
        let sa = singular_values(&fx.a).map_err(e2s)?;
        if sw[0] / sw[k - 1] > 3.0 || sa[k - 1] < 0.25 {
            return Err(format!("outside bands at n={n}, K={k}, p={p}, N={nw}"));
        }
    }
    Ok("3/3 fixtures".into())
}

fn concentration(seed: u64) -> Outcome {
    let (n, p, nw) = (200, 500, 100);
    let bound = concentration_threshold(n, p, nw, 4.0);
    let inside: usize = (0..100u64)
        .into_par_iter()
        .map(|t| -> std::result::Result<usize, String> {
            let mut rng = RngSeed::new(seed, 1000 + t).rng();
            let truth = generate_truth(&TruthSpec::three_topic_dirichlet(n, p), &mut rng).map_err(e2s)?;
            let x = sample_corpus(&truth, nw, &mut rng).map_err(e2s)?.x;
            let dev = spectral_norm(&x.sub(&truth.pi).map_err(e2s)?).map_err(e2s)?;
            Ok(usize::from(dev <= bound))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    check(inside >= 99, format!("{inside}/100 trials within {bound:.3}"))
}

fn mean_error(seed: u64, n: usize, p: usize, nw: usize) -> std::result::Result<f64, String> {
    let errs = (0..20u64)
        .into_par_iter()
        .map(|t| -> std::result::Result<f64, String> {
            let mut rng = RngSeed::new(seed, 2000 + t).rng();
            let truth = generate_truth(&TruthSpec::three_topic_dirichlet(n, p), &mut rng).map_err(e2s)?;
            let x = sample_corpus(&truth, nw, &mut rng).map_err(e2s)?.x;
            let est = fit_w(&x, 3, &SpocOptions::default()).map_err(e2s)?;
            Ok(perm_min_error(&est.w_hat, &truth.w, ErrorNorm::Fro).map_err(e2s)?.fro)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

fn rate_in_length(seed: u64) -> Outcome {
    let ratio = mean_error(seed, 300, 1000, 100)? / mean_error(seed, 300, 1000, 400)?;
    check((1.5..=2.7).contains(&ratio), format!("err(N=100)/err(N=400) = {ratio:.3}, expected 1.5..2.7"))
}

fn rate_in_docs(seed: u64) -> Outcome {
    let ratio = mean_error(seed, 1000, 1000, 200)? / mean_error(seed, 250, 1000, 200)?;
    check((1.4..=2.8).contains(&ratio), format!("err(n=1000)/err(n=250) = {ratio:.3}, expected 1.4..2.8"))
}

fn rate_in_words(seed: u64) -> Outcome {
    let ratio = mean_error(seed, 300, 4000, 200)? / mean_error(seed, 300, 500, 200)?;
    check(ratio <= 1.5, format!("err(p=4000)/err(p=500) = {ratio:.3}, expected <= 1.5"))
}
