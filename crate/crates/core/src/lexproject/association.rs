//! Free-association tables in the SWOW CSV layout (a header with `cue`,
//! `R1`, `R2`, `R3` columns; any other columns are ignored).

use std::path::Path;

use super::AssociationTable;
use crate::error::{Error, Result};

/// Placeholders SWOW uses for a missing response.
const MISSING: [&str; 2] = ["na", "no more responses"];

fn normalize(raw: &str) -> Option<String> {
    let s = raw.trim().to_lowercase();
    if s.is_empty() || MISSING.contains(&s.as_str()) {
        return None;
    }
    Some(s.split_whitespace().collect::<Vec<_>>().join("_"))
}

pub fn parse_association_table(path: &Path) -> Result<AssociationTable> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }
    let column = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let cue_col = column("cue").ok_or_else(|| Error::parse(path, 1, "missing cue column"))?;
    let response_cols: Vec<usize> = ["R1", "R2", "R3"].iter().filter_map(|c| column(c)).collect();
    if response_cols.is_empty() {
        return Err(Error::parse(path, 1, "missing response columns R1, R2, R3"));
    }

    let mut table = AssociationTable::default();
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let Some(cue) = record.get(cue_col).and_then(normalize) else {
            return Err(Error::parse(path, i + 2, "empty cue"));
        };
        let responses = table.entries.entry(cue).or_default();
        for &c in &response_cols {
            if let Some(r) = record.get(c).and_then(normalize) {
                responses.push(r);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyInput(path.display().to_string()));
    }
    Ok(table)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}
