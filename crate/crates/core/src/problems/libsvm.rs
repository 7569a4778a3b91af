//! LIBSVM text format: `label idx:val idx:val ...` with 1-based ascending indices.

use std::path::Path;

use crate::error::{Error, Result};

/// Dense rows and +-1 labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub dim: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn parse_libsvm(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_with_name(&text, &path.display().to_string())
}

pub fn parse_libsvm_str(text: &str) -> Result<Dataset> {
    parse_with_name(text, "<string>")
}

fn parse_with_name(text: &str, name: &str) -> Result<Dataset> {
    let err = |line: usize, msg: String| Error::Parse {
        path: name.into(),
        line,
        msg,
    };
    let mut sparse_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0;
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(line_no, format!("bad label '{label_tok}'")))?;
        let label = if label > 0.0 {
            1.0
        } else if label == 0.0 || label < 0.0 {
            -1.0
        } else {
            return Err(err(line_no, format!("bad label '{label_tok}'")));
        };
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| err(line_no, format!("expected idx:val, got '{tok}'")))?;
            let i: usize = i.parse().map_err(|_| err(line_no, format!("bad index '{i}'")))?;
            let v: f64 = v.parse().map_err(|_| err(line_no, format!("bad value '{v}'")))?;
            if i == 0 {
                return Err(err(line_no, "indices are 1-based".into()));
            }
            if i <= last {
                return Err(err(line_no, format!("index {i} does not ascend past {last}")));
            }
            if !v.is_finite() {
                return Err(err(line_no, format!("non-finite value at index {i}")));
            }
            last = i;
            row.push((i - 1, v));
        }
        dim = dim.max(last);
        sparse_rows.push(row);
        labels.push(label);
    }
    let features = sparse_rows
        .into_iter()
        .map(|row| {
            let mut dense = vec![0.0; dim];
            for (i, v) in row {
                dense[i] = v;
            }
            dense
        })
        .collect();
    Ok(Dataset { features, labels, dim })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_rows() {
        let ds = parse_libsvm_str("+1 1:0.5 3:2\n0 2:1\n").unwrap();
        assert_eq!(ds.dim, 3);
        assert_eq!(ds.labels, vec![1.0, -1.0]);
        assert_eq!(ds.features[0], vec![0.5, 0.0, 2.0]);
        assert_eq!(ds.features[1], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_one_labels() {
        let ds = parse_libsvm_str("0 2:1").unwrap();
        assert_eq!(ds.labels, vec![-1.0]);
        assert_eq!(ds.features[0], vec![0.0, 1.0]);
    }

    #[test]
    fn empty_input() {
        let ds = parse_libsvm_str("").unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.dim, 0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_libsvm_str("1 1:1\n1 3:1 2:1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_libsvm_str("1 1:1\n\n1 x:1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(parse_libsvm_str("1 0:1").is_err());
        assert!(parse_libsvm_str("abc 1:1").is_err());
        assert!(parse_libsvm_str("1 1:1 1:2").is_err());
    }
}
