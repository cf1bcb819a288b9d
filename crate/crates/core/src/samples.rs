//! Sample matrices with column names and their CSV form.
//!
//! The CSV layout is a header line of column names followed by one
//! comma-separated row per sample. Values are written with 17 significant
//! digits so a write/read cycle is lossless.

use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::expr::format_constant;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("no header line")]
    MissingHeader,
    #[error("column count {found} does not match {expected} names")]
    ShapeMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An `n x d` matrix of draws plus column names.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub data: Array2<f64>,
    pub names: Vec<String>,
}

impl SampleSet {
    /// Columns named `x1..xd`.
    pub fn new(data: Array2<f64>) -> Self {
        let names = default_names(data.ncols());
        SampleSet { data, names }
    }

    pub fn with_names(data: Array2<f64>, names: Vec<String>) -> Result<Self, SampleError> {
        if names.len() != data.ncols() {
            return Err(SampleError::ShapeMismatch {
                expected: names.len(),
                found: data.ncols(),
            });
        }
        Ok(SampleSet { data, names })
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_matrix_csv(out, &self.names, self.data.view())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, SampleError> {
        let (names, data) = read_matrix_csv(input)?;
        SampleSet::with_names(data, names)
    }
}

pub fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

/// Writes a header and one row per matrix row.
pub fn write_matrix_csv<W: Write>(
    mut out: W,
    names: &[String],
    data: ArrayView2<'_, f64>,
) -> std::io::Result<()> {
    writeln!(out, "{}", names.join(","))?;
    let mut line = String::new();
    for row in data.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format_constant(*v));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Reads a numeric CSV with a header. Blank lines are skipped. Errors name
/// the 1-based line number.
pub fn read_matrix_csv<R: BufRead>(input: R) -> Result<(Vec<String>, Array2<f64>), SampleError> {
    let mut lines = input.lines().enumerate();
    let names: Vec<String> = loop {
        match lines.next() {
            None => return Err(SampleError::MissingHeader),
            Some((_, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break line.split(',').map(|s| s.trim().to_string()).collect();
            }
        }
    };
    let d = names.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (idx, line) in lines {
        let line = line?;
        let number = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d {
            return Err(SampleError::Malformed {
                line: number,
                message: format!("expected {d} fields, found {}", fields.len()),
            });
        }
        for field in fields {
            let v: f64 = field.trim().parse().map_err(|_| SampleError::Malformed {
                line: number,
                message: format!("not a number: {:?}", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(SampleError::Malformed {
                    line: number,
                    message: format!("non-finite value {v}"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    let data = Array2::from_shape_vec((rows, d), values).expect("row lengths checked");
    Ok((names, data))
}
