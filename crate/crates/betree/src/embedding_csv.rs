//! Embedding CSV files: one `label,v1,...,vD` row per sample, with an optional header row.

use std::io::{Read, Write};
use std::path::Path;

use betree_core::data::{Dataset, Provenance};
use betree_core::tree::Sample;

use crate::error::{IoError, Result};

pub fn load_embedding_csv(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    read_embedding_csv(file, path)
}

/// Parses rows from `reader`. A first row whose first field is not a number is a header.
/// The class count is one more than the largest label.
pub fn read_embedding_csv<R: Read>(reader: R, path: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut samples = Vec::new();
    let mut dim = None;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| IoError::format(path, format!("line {line}"), e.to_string()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let first = rec.get(0).unwrap_or("");
        if i == 0 && first.parse::<f64>().is_err() {
            continue;
        }
        let label: usize = first
            .parse()
            .map_err(|_| IoError::format(path, format!("line {line}"), format!("label {first:?} is not a class index")))?;
        let features = rec
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| IoError::format(path, format!("line {line}"), format!("value {f:?} is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(IoError::format(
                    path,
                    format!("line {line}"),
                    format!("{} values, expected {d}", features.len()),
                ))
            }
            Some(_) => {}
        }
        samples.push(Sample::new(features, label));
    }
    if samples.is_empty() {
        return Err(IoError::Usage(format!("{}: no samples in embedding CSV", path.display())));
    }
    let classes = samples.iter().map(|s| s.label).max().unwrap_or(0) + 1;
    Ok(Dataset::new(samples, classes, Provenance::Csv)?)
}

/// Writes `samples` without a header. Values use the shortest representation that
/// parses back to the same float.
pub fn write_embedding_csv<W: Write>(writer: W, samples: &[Sample]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let mut row = Vec::new();
    for s in samples {
        row.clear();
        row.push(s.label.to_string());
        row.extend(s.features.iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush()
}
