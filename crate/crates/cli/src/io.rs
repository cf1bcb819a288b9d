//! File helpers shared by the stages.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::de::DeserializeOwned;
use serde::Serialize;
use symden::expr::format_constant;
use symden::samples::read_matrix_csv;

use crate::error::{AtStage, StageError};

pub fn write_text(path: &Path, text: &str, stage: &str) -> Result<(), StageError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).at_stage(stage)?;
        }
    }
    fs::write(path, text)
        .map_err(|e| StageError::data(stage, format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T, stage: &str) -> Result<(), StageError> {
    let mut text = serde_json::to_string_pretty(value).at_stage(stage)?;
    text.push('\n');
    write_text(path, &text, stage)
}

pub fn read_json<T: DeserializeOwned>(path: &Path, stage: &str) -> Result<T, StageError> {
    let file = fs::File::open(path)
        .map_err(|e| StageError::data(stage, format!("cannot open {}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| StageError::data(stage, format!("{}: {e}", path.display())))
}

/// Reads a numeric CSV with a header line.
pub fn read_matrix(path: &Path, stage: &str) -> Result<(Vec<String>, Array2<f64>), StageError> {
    let file = fs::File::open(path)
        .map_err(|e| StageError::data(stage, format!("cannot open {}: {e}", path.display())))?;
    read_matrix_csv(BufReader::new(file))
        .map_err(|e| StageError::data(stage, format!("{}: {e}", path.display())))
}

/// CSV text with the given header; each row is `points` followed by the
/// matching entry of every extra column.
pub fn table_csv(header: &[String], points: ArrayView2<'_, f64>, columns: &[&[f64]]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for (i, row) in points.rows().into_iter().enumerate() {
        let mut first = true;
        for v in row.iter().copied().chain(columns.iter().map(|c| c[i])) {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&format_constant(v));
        }
        out.push('\n');
    }
    out
}

/// Variable names `x1..xd` followed by `extra`.
pub fn header(names: &[String], extra: &[&str]) -> Vec<String> {
    names
        .iter()
        .cloned()
        .chain(extra.iter().map(|s| s.to_string()))
        .collect()
}
