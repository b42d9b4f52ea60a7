//! Count-matrix ingestion (MatrixMarket coordinate and dense CSV) and the
//! small amount of output plumbing the CLI needs.

use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use spoc_core::DenseMatrix;

use crate::error::{CliError, Result};

const MM_BANNER: &str = "%%MatrixMarket";

/// Nonnegative integer counts, documents × words.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    pub counts: DenseMatrix,
}

impl CountMatrix {
    pub fn n_docs(&self) -> usize {
        self.counts.rows()
    }

    pub fn n_words(&self) -> usize {
        self.counts.cols()
    }

    pub fn doc_lengths(&self) -> Vec<u64> {
        self.counts.row_sums().into_iter().map(|s| s as u64).collect()
    }
}

/// Reads a count matrix, picking the format from the first line.
pub fn read_counts(path: &Path) -> Result<CountMatrix> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if text.trim_start().starts_with(MM_BANNER) {
        parse_matrix_market(&text, path)
    } else {
        parse_csv(&text, path)
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parses one count cell; `row`/`col` are 1-based for the error message.
fn parse_count(token: &str, row: usize, col: usize) -> Result<f64> {
    let bad = |why| CliError::BadCount {
        row,
        col,
        value: token.to_string(),
        why,
    };
    let v: f64 = token.trim().parse().map_err(|_| bad("not a number"))?;
    if !v.is_finite() {
        return Err(bad("not finite"));
    }
    if v < 0.0 {
        return Err(bad("negative"));
    }
    if v.fract() != 0.0 {
        return Err(bad("fractional"));
    }
    Ok(v)
}

pub fn parse_matrix_market(text: &str, path: &Path) -> Result<CountMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, banner) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let fields: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() != 5 || fields[1] != "matrix" || fields[2] != "coordinate" || fields[4] != "general" {
        return Err(parse_err(
            path,
            1,
            format!("expected '{MM_BANNER} matrix coordinate integer general', found '{banner}'"),
        ));
    }
    if fields[3] != "integer" && fields[3] != "real" {
        return Err(parse_err(path, 1, format!("unsupported field type '{}'", fields[3])));
    }

    let mut body = lines.filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('%'));
    let (size_line, size) = body.next().ok_or_else(|| parse_err(path, 1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(path, size_line, format!("bad size line '{size}'")))?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(parse_err(path, size_line, format!("size line needs 3 integers, found '{size}'")));
    };

    let mut counts = DenseMatrix::zeros(rows, cols);
    let mut seen = 0;
    for (line, entry) in body {
        let tok: Vec<&str> = entry.split_whitespace().collect();
        if tok.len() != 3 {
            return Err(parse_err(path, line, format!("expected 'row col value', found '{entry}'")));
        }
        let index = |t: &str, max: usize, what: &str| -> Result<usize> {
            match t.parse::<usize>() {
                Ok(i) if (1..=max).contains(&i) => Ok(i),
                _ => Err(parse_err(path, line, format!("{what} index '{t}' outside 1..={max}"))),
            }
        };
        let r = index(tok[0], rows, "row")?;
        let c = index(tok[1], cols, "column")?;
        counts[(r - 1, c - 1)] += parse_count(tok[2], r, c)?;
        seen += 1;
    }
    if seen != nnz {
        return Err(parse_err(path, size_line, format!("size line announces {nnz} entries, found {seen}")));
    }
    Ok(CountMatrix { counts })
}

/// Dense comma-separated counts, one document per line. A first line that
/// does not parse as numbers is taken to be a header.
pub fn parse_csv(text: &str, path: &Path) -> Result<CountMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if rows.is_empty() && width.is_none() && cells.iter().any(|c| c.trim().parse::<f64>().is_err()) {
            width = Some(cells.len());
            continue;
        }
        let expected = *width.get_or_insert(cells.len());
        if cells.len() != expected {
            return Err(parse_err(path, idx + 1, format!("expected {expected} columns, found {}", cells.len())));
        }
        let doc = rows.len() + 1;
        let row = cells
            .iter()
            .enumerate()
            .map(|(j, c)| parse_count(c, doc, j + 1))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    Ok(CountMatrix {
        counts: DenseMatrix::from_rows(&rows)?,
    })
}

pub fn write_matrix_market(counts: &DenseMatrix, path: &Path) -> Result<()> {
    let mut out = String::from("%%MatrixMarket matrix coordinate integer general\n");
    let entries: Vec<(usize, usize, f64)> = (0..counts.rows())
        .flat_map(|i| (0..counts.cols()).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, counts[(i, j)]))
        .filter(|e| e.2 != 0.0)
        .collect();
    out.push_str(&format!("{} {} {}\n", counts.rows(), counts.cols(), entries.len()));
    for (i, j, v) in entries {
        out.push_str(&format!("{} {} {}\n", i + 1, j + 1, v as u64));
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

/// Frequencies ready for fitting, after the minimum-length filter.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedCorpus {
    pub x: DenseMatrix,
    pub doc_lengths: Vec<u64>,
    /// Original (0-based) row of each kept document.
    pub kept: Vec<usize>,
}

impl PreparedCorpus {
    /// Single length for the rank threshold: floor of the harmonic mean, which
    /// is the conservative choice when lengths differ.
    pub fn effective_length(&self) -> usize {
        let inv: f64 = self.doc_lengths.iter().map(|&n| 1.0 / n as f64).sum();
        ((self.doc_lengths.len() as f64 / inv).floor() as usize).max(1)
    }
}

/// Divides each row by its length. Empty documents are an error; documents
/// shorter than `min_words` are dropped with a warning.
pub fn prepare_corpus(counts: &CountMatrix, min_words: u64) -> Result<PreparedCorpus> {
    let lengths = counts.doc_lengths();
    if let Some(row) = lengths.iter().position(|&n| n == 0) {
        return Err(CliError::EmptyDocument { row: row + 1 });
    }
    let kept: Vec<usize> = (0..lengths.len()).filter(|&i| lengths[i] >= min_words).collect();
    let dropped = lengths.len() - kept.len();
    if dropped > 0 {
        warn!("dropped {dropped} documents with fewer than {min_words} words");
    }
    if kept.is_empty() {
        return Err(CliError::config(format!("no document has at least {min_words} words")));
    }
    let x = DenseMatrix::from_fn(kept.len(), counts.n_words(), |i, j| {
        counts.counts[(kept[i], j)] / lengths[kept[i]] as f64
    });
    Ok(PreparedCorpus {
        x,
        doc_lengths: kept.iter().map(|&i| lengths[i]).collect(),
        kept,
    })
}

/// One token per line; blank lines are kept as empty tokens so positions
/// still line up with columns.
pub fn read_vocab(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(text.lines().map(|l| l.trim().to_string()).collect())
}

pub fn write_dense_csv(m: &DenseMatrix, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(",")).expect("writing to a Vec cannot fail");
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
