use serde::{Deserialize, Serialize};
use spoc_core::DenseMatrix;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicWords {
    pub topic: usize,
    pub words: Vec<ScoredWord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredWord {
    pub index: usize,
    pub token: String,
    pub score: f64,
}

/// Ranks words by how much more a topic uses them than any other topic:
/// `score(k, j) = Â[k, j] − max_{k' ≠ k} Â[k', j]`. Ties go to the lower index.
pub fn top_words(a_hat: &DenseMatrix, vocab: &[String], m: usize) -> Result<Vec<TopicWords>> {
    let (k, p) = a_hat.shape();
    if vocab.len() != p {
        return Err(CliError::config(format!(
            "vocabulary has {} tokens but Â has {p} columns",
            vocab.len()
        )));
    }
    if m == 0 {
        return Err(CliError::config("number of top words must be at least 1"));
    }

    // best and second-best topic per column give every "max over others" in O(kp)
    let mut first = vec![(f64::NEG_INFINITY, usize::MAX); p];
    let mut second = vec![f64::NEG_INFINITY; p];
    for t in 0..k {
        for (j, &v) in a_hat.row(t).iter().enumerate() {
            if v > first[j].0 {
                second[j] = first[j].0;
                first[j] = (v, t);
            } else if v > second[j] {
                second[j] = v;
            }
        }
    }

    Ok((0..k)
        .map(|t| {
            let mut scored: Vec<(usize, f64)> = a_hat
                .row(t)
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let other = if first[j].1 == t { second[j] } else { first[j].0 };
                    // a single topic has nobody to compare against
                    (j, if other.is_finite() { v - other } else { v })
                })
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            TopicWords {
                topic: t,
                words: scored
                    .into_iter()
                    .take(m)
                    .map(|(index, score)| ScoredWord {
                        index,
                        token: vocab[index].clone(),
                        score,
                    })
                    .collect(),
            }
        })
        .collect())
}
