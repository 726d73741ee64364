//! Two-column dataset CSV.
//!
//! ```text
//! left,right[,t]
//! "0 4 7","2 3"[,1999]
//! ```
//!
//! Each cell is a space-separated list of non-negative node ids, optionally
//! quoted. Saving always writes the canonical form with quoted cells and
//! rows in lexicographic order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{BipartiteHypergraph, RawIncidence};
use crate::{Error, Result};

/// Optional sidecar label files (one label per line, line number = id).
#[derive(Clone, Debug, Default)]
pub struct DatasetFormat {
    pub left_labels: Option<PathBuf>,
    pub right_labels: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct LoadReport {
    pub graph: BipartiteHypergraph,
    pub rows: usize,
    pub duplicates_collapsed: usize,
}

fn parse_cell(path: &Path, line: u64, cell: &str, column: &str) -> Result<Vec<usize>> {
    let ids: Vec<&str> = cell.split_whitespace().collect();
    if ids.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            line,
            message: format!("empty {column} cell"),
        });
    }
    ids.into_iter()
        .map(|tok| {
            tok.parse::<usize>().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                message: format!("non-integer token {tok:?} in {column} cell"),
            })
        })
        .collect()
}

pub fn load_vocab(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

pub fn load_dataset(path: &Path, format: &DatasetFormat) -> Result<LoadReport> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let mut raw = Vec::new();
    let mut timed = None;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(row as u64 + 1, |p| p.line());
        if row == 0 && record.get(0) == Some("left") {
            if record.get(1) != Some("right") {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    message: "header must be `left,right` with optional `,t`".into(),
                });
            }
            timed = Some(record.get(2) == Some("t"));
            continue;
        }
        let expect_time = *timed.get_or_insert(record.len() == 3);
        let width = if expect_time { 3 } else { 2 };
        if record.len() != width {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("expected {width} cells, found {}", record.len()),
            });
        }
        let left = parse_cell(path, line, &record[0], "left")?;
        let right = parse_cell(path, line, &record[1], "right")?;
        let timestamp = if expect_time {
            Some(record[2].parse::<i64>().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                message: format!("non-integer timestamp {:?}", &record[2]),
            })?)
        } else {
            None
        };
        raw.push(RawIncidence {
            left,
            right,
            timestamp,
        });
    }
    if raw.is_empty() {
        return Err(Error::EmptyDataset(path.into()));
    }

    let left_labels = format.left_labels.as_deref().map(load_vocab).transpose()?;
    let right_labels = format.right_labels.as_deref().map(load_vocab).transpose()?;
    let max_left = raw
        .iter()
        .flat_map(|r| r.left.iter())
        .max()
        .map_or(0, |m| m + 1);
    let max_right = raw
        .iter()
        .flat_map(|r| r.right.iter())
        .max()
        .map_or(0, |m| m + 1);
    let left_size = left_labels.as_ref().map_or(max_left, Vec::len);
    let right_size = right_labels.as_ref().map_or(max_right, Vec::len);

    let rows = raw.len();
    let (graph, duplicates) = BipartiteHypergraph::from_incidences(left_size, right_size, raw)?;
    if duplicates > 0 {
        log::warn!(
            "{}: collapsed {duplicates} duplicate incidences",
            path.display()
        );
    }
    let graph = graph.with_labels(left_labels, right_labels)?;
    Ok(LoadReport {
        graph,
        rows,
        duplicates_collapsed: duplicates,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.into(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Renders the canonical file contents.
pub fn render_dataset(h: &BipartiteHypergraph) -> String {
    let mut rows: Vec<(&[usize], &[usize], Option<i64>)> = h
        .incidences()
        .iter()
        .enumerate()
        .map(|(i, &(f, g))| {
            (
                h.left_hyperedges()[f].members(),
                h.right_hyperedges()[g].members(),
                h.timestamps().map(|t| t[i]),
            )
        })
        .collect();
    rows.sort();
    let mut out = String::new();
    out.push_str(if h.timestamps().is_some() {
        "left,right,t\n"
    } else {
        "left,right\n"
    });
    for (l, r, t) in rows {
        out.push('"');
        out.push_str(&join_ids(l));
        out.push_str("\",\"");
        out.push_str(&join_ids(r));
        out.push('"');
        if let Some(t) = t {
            out.push(',');
            out.push_str(&t.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn save_dataset(h: &BipartiteHypergraph, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(render_dataset(h).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn join_ids(ids: &[usize]) -> String {
    ids.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}
