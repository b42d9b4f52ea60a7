//! Library-level checks of the file front end.

use rand::Rng;
use spoc_cli::fit::{fit_file, FitSettings};
use spoc_cli::io::write_matrix_market;
use spoc_cli::topwords::top_words;
use spoc_core::spoc::fit_w;
use spoc_core::synth::{generate_truth, sample_corpus, TruthSpec};
use spoc_core::{DenseMatrix, RngSeed, SpocOptions};

#[test]
fn matrix_market_round_trip_matches_in_memory_fit() {
    let mut rng = RngSeed::new(3, 0).rng();
    let truth = generate_truth(&TruthSpec::three_topic_dirichlet(60, 40), &mut rng).unwrap();
    let n_words = 200;
    let sample = sample_corpus(&truth, n_words, &mut rng).unwrap();
    let (n, p) = sample.x.shape();
    let counts = DenseMatrix::from_fn(n, p, |i, j| (sample.x[(i, j)] * n_words as f64).round());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.mtx");
    write_matrix_market(&counts, &path).unwrap();

    let settings = FitSettings {
        k: Some(3),
        ..FitSettings::default()
    };
    let report = fit_file(&path, None, 0, &settings).unwrap();
    let direct = fit_w(&sample.x, 3, &SpocOptions::default()).unwrap();
    assert_eq!(report.w_hat, direct.w_hat);
    assert_eq!(report.a_hat, direct.a_hat);
    assert_eq!(report.anchors, direct.anchors.indices());
}

// score for (t, j) recomputed from the definition, then fully sorted
fn brute_force(a: &DenseMatrix, t: usize, m: usize) -> Vec<usize> {
    let (k, p) = a.shape();
    let mut scored: Vec<(usize, f64)> = (0..p)
        .map(|j| {
            let other = (0..k).filter(|&s| s != t).map(|s| a[(s, j)]).fold(f64::NEG_INFINITY, f64::max);
            (j, a[(t, j)] - other)
        })
        .collect();
    scored.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    scored.into_iter().take(m).map(|(j, _)| j).collect()
}

#[test]
fn top_words_agree_with_brute_force() {
    let mut rng = RngSeed::new(9, 0).rng();
    let vocab: Vec<String> = (0..50).map(|j| format!("t{j}")).collect();
    for _ in 0..20 {
        let a = DenseMatrix::from_fn(3, 50, |_, _| rng.random::<f64>());
        let got = top_words(&a, &vocab, 7).unwrap();
        for (t, topic) in got.iter().enumerate() {
            let idx: Vec<usize> = topic.words.iter().map(|w| w.index).collect();
            assert_eq!(idx, brute_force(&a, t, 7));
            assert!(topic.words.iter().all(|w| w.token == vocab[w.index]));
        }
    }
}
