//! LIBSVM text format: `label idx:val idx:val ...`, 1-based strictly
//! increasing indices, absent indices are zero. Text after `#` is ignored.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Dense feature matrix with the per-row labels.
#[derive(Clone, Debug)]
pub struct LibsvmData {
    pub features: DenseMatrix,
    pub labels: Vec<f64>,
}

/// Reads a LIBSVM file; paths ending in `.gz` are decompressed transparently.
///
/// When `dim` is `None` the dimension is the largest index seen.
pub fn parse_libsvm(path: impl AsRef<Path>, dim: Option<usize>) -> Result<LibsvmData> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let mut text = String::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(BufReader::new(file)).read_to_string(&mut text)?;
    } else {
        BufReader::new(file).read_to_string(&mut text)?;
    }
    parse_libsvm_str(&text, dim)
}

pub fn parse_libsvm_str(text: &str, dim: Option<usize>) -> Result<LibsvmData> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize;
    let mut line_start = 0usize;

    for (lineno, raw) in text.split_inclusive('\n').enumerate() {
        let line_no = lineno + 1;
        let base = line_start;
        line_start += raw.len();
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = tokens_with_offsets(content);
        let Some((label_off, label_tok)) = tokens.next() else {
            continue;
        };
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: line_no,
            offset: base + label_off,
            message: format!("invalid label {label_tok:?}"),
        })?;

        let mut entries = Vec::new();
        let mut last = 0usize;
        for (off, tok) in tokens {
            let err = |message: String| Error::Parse {
                line: line_no,
                offset: base + off,
                message,
            };
            let (idx_s, val_s) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx_s
                .parse()
                .map_err(|_| err(format!("invalid feature index {idx_s:?}")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            if idx <= last {
                return Err(err(format!(
                    "feature indices must be strictly increasing ({idx} after {last})"
                )));
            }
            let val: f64 = val_s
                .parse()
                .map_err(|_| err(format!("invalid feature value {val_s:?}")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite feature value {val_s:?}")));
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(Error::IndexOutOfRange {
                        line: line_no,
                        index: idx,
                        dim: d,
                    });
                }
            }
            last = idx;
            entries.push((idx - 1, val));
        }
        max_index = max_index.max(last);
        labels.push(label);
        rows.push(entries);
    }

    let d = dim.unwrap_or(max_index);
    let mut features = DenseMatrix::zeros(rows.len(), d);
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            features[(i, j)] = v;
        }
    }
    Ok(LibsvmData { features, labels })
}

fn tokens_with_offsets(s: &str) -> impl Iterator<Item = (usize, &str)> {
    s.split(|c: char| c.is_ascii_whitespace())
        .scan(0usize, |pos, tok| {
            let start = *pos;
            *pos += tok.len() + 1;
            Some((start, tok))
        })
        .filter(|(_, t)| !t.is_empty())
}

/// Writes rows in LIBSVM format, omitting zero entries. Values use the
/// shortest representation that round-trips exactly.
pub fn write_libsvm<W: Write>(out: &mut W, features: &DenseMatrix, labels: &[f64]) -> Result<()> {
    if labels.len() != features.rows() {
        return Err(Error::dims("write_libsvm", features.rows(), labels.len()));
    }
    for (i, label) in labels.iter().enumerate() {
        write!(out, "{label}")?;
        for j in 0..features.cols() {
            let v = features[(i, j)];
            if v != 0.0 {
                write!(out, " {}:{v}", j + 1)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
