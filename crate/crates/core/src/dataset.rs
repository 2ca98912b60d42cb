//! On-disk graph layout: a directory holding `edges.tsv` (`i<TAB>j` per
//! line, 0-indexed), `features.csv` (one row of reals per node) and
//! `labels.txt` (one label per line).
//!
//! Labels are either `+1`/`-1` or non-negative integer class ids. Class ids
//! are binarized with the largest class as positive.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{GplError, Result};
use crate::graph::{Label, SparseGraph};
use crate::linalg::Matrix;
use crate::synth::binarize_labels;

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.txt";

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| GplError::io(path, e))
}

/// Non-empty lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_features(path: &Path) -> Result<Matrix> {
    let name = path.display().to_string();
    let text = read(path)?;
    let mut data = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for (line, raw) in lines(&text) {
        let row: Vec<f64> = raw
            .split(',')
            .map(|v| {
                let v = v.trim();
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| GplError::parse(&name, line, format!("bad feature value '{v}'")))
            })
            .collect::<Result<_>>()?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(GplError::parse(
                    &name,
                    line,
                    format!("expected {d} columns, found {}", row.len()),
                ));
            }
            Some(_) => {}
        }
        data.extend(row);
        rows += 1;
    }
    let Some(dim) = dim else {
        return Err(GplError::parse(&name, 1, "no feature rows"));
    };
    Ok(Matrix::from_vec(rows, dim, data))
}

fn parse_labels(path: &Path) -> Result<Vec<Label>> {
    let name = path.display().to_string();
    let text = read(path)?;
    let tokens: Vec<(usize, &str)> = lines(&text).map(|(n, l)| (n, l.trim())).collect();
    if tokens.iter().all(|(_, t)| *t == "+1" || *t == "-1") {
        return Ok(tokens
            .iter()
            .map(|(_, t)| {
                if *t == "+1" {
                    Label::Positive
                } else {
                    Label::Negative
                }
            })
            .collect());
    }
    let classes = tokens
        .iter()
        .map(|&(line, t)| {
            t.parse::<u32>().map_err(|_| {
                GplError::parse(
                    &name,
                    line,
                    format!("expected +1, -1 or a class id, found '{t}'"),
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;
    binarize_labels(&classes)
}

fn parse_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let name = path.display().to_string();
    let text = read(path)?;
    let mut edges = Vec::new();
    for (line, raw) in lines(&text) {
        let fields: Vec<&str> = raw.split('\t').collect();
        let parsed: Vec<usize> = fields
            .iter()
            .filter_map(|f| f.trim().parse().ok())
            .collect();
        let [i, j] = parsed[..] else {
            return Err(GplError::parse(
                &name,
                line,
                format!("expected 'i<TAB>j', found '{raw}'"),
            ));
        };
        if fields.len() != 2 {
            return Err(GplError::parse(
                &name,
                line,
                format!("expected 'i<TAB>j', found '{raw}'"),
            ));
        }
        if i >= n || j >= n {
            return Err(GplError::parse(
                &name,
                line,
                format!("node id out of range for {n} nodes"),
            ));
        }
        if i == j {
            return Err(GplError::parse(
                &name,
                line,
                format!("self-loop on node {i}"),
            ));
        }
        edges.push((i, j));
    }
    Ok(edges)
}

pub fn load_dataset(dir: &Path) -> Result<SparseGraph> {
    let features = parse_features(&dir.join(FEATURES_FILE))?;
    let labels = parse_labels(&dir.join(LABELS_FILE))?;
    let n = features.rows();
    if labels.len() != n {
        return Err(GplError::LabelCount {
            expected: n,
            found: labels.len(),
        });
    }
    let edges = parse_edges(&dir.join(EDGES_FILE), n)?;
    SparseGraph::new(n, &edges, features, labels)
}

/// Writes the three files, creating `dir` if needed. Reals use the shortest
/// representation that parses back to the same value.
pub fn save_dataset(g: &SparseGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| GplError::io(dir, e))?;
    write_file(&dir.join(EDGES_FILE), |w| {
        for &(i, j) in g.edges() {
            writeln!(w, "{i}\t{j}")?;
        }
        Ok(())
    })?;
    write_file(&dir.join(FEATURES_FILE), |w| {
        let x = g.features();
        for i in 0..x.rows() {
            let row: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    })?;
    write_file(&dir.join(LABELS_FILE), |w| {
        for l in g.labels() {
            writeln!(w, "{}", if l.is_positive() { "+1" } else { "-1" })?;
        }
        Ok(())
    })
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| GplError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| GplError::io(path, e))
}
