use std::path::Path;

use serde::{Deserialize, Serialize};
use spoc_core::spoc::{fit_adaptive, fit_w};
use spoc_core::{DenseMatrix, SpocEstimate, SpocOptions};

use crate::error::{CliError, Result};
use crate::io::{prepare_corpus, read_counts, read_vocab, write_dense_csv, write_json, PreparedCorpus};
use crate::topwords::{top_words, TopicWords};

#[derive(Debug, Clone, Default)]
pub struct FitSettings {
    /// `None` selects the number of topics from the data.
    pub k: Option<usize>,
    pub min_words: u64,
    pub options: SpocOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub k: usize,
    pub adaptive: bool,
    pub n_docs: usize,
    pub n_words: usize,
    /// Original 0-based rows that survived the length filter.
    pub kept_documents: Vec<usize>,
    /// Anchor documents as original 0-based rows.
    pub anchors: Vec<usize>,
    pub singular_values: Vec<f64>,
    pub preconditioned: bool,
    pub clipped: bool,
    pub w_hat: DenseMatrix,
    pub a_hat: DenseMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_words: Option<Vec<TopicWords>>,
}

pub fn fit_corpus(corpus: &PreparedCorpus, settings: &FitSettings) -> Result<SpocEstimate> {
    let est = match settings.k {
        Some(k) => fit_w(&corpus.x, k, &settings.options)?,
        None => fit_adaptive(&corpus.x, corpus.effective_length(), &settings.options)?,
    };
    Ok(est)
}

/// Reads a count file, fits, and optionally ranks words per topic.
pub fn fit_file(matrix: &Path, vocab: Option<&Path>, top: usize, settings: &FitSettings) -> Result<FitReport> {
    let counts = read_counts(matrix)?;
    let vocab = vocab.map(read_vocab).transpose()?;
    if let Some(v) = &vocab {
        if v.len() != counts.n_words() {
            return Err(CliError::config(format!(
                "vocabulary has {} tokens but the matrix has {} columns",
                v.len(),
                counts.n_words()
            )));
        }
    }
    let corpus = prepare_corpus(&counts, settings.min_words)?;
    let est = fit_corpus(&corpus, settings)?;
    let top_words = match &vocab {
        Some(v) if top > 0 => Some(top_words(&est.a_hat, v, top)?),
        _ => None,
    };
    Ok(FitReport {
        k: est.k_used,
        adaptive: settings.k.is_none(),
        n_docs: corpus.x.rows(),
        n_words: corpus.x.cols(),
        anchors: est.anchors.indices().iter().map(|&i| corpus.kept[i]).collect(),
        kept_documents: corpus.kept,
        singular_values: est.l_hat,
        preconditioned: est.preconditioned,
        clipped: est.clipped,
        w_hat: est.w_hat,
        a_hat: est.a_hat,
        top_words,
    })
}

/// Writes `fit.json`, `w_hat.csv` and `a_hat.csv` into `dir`.
pub fn write_report(report: &FitReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_json(report, &dir.join("fit.json"))?;
    write_dense_csv(&report.w_hat, &dir.join("w_hat.csv"))?;
    write_dense_csv(&report.a_hat, &dir.join("a_hat.csv"))
}
