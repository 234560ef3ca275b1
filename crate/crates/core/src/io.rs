//! CSV readers and writers for descriptors, feature sets and run outputs.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::data::{FeatureSet, Label};
use crate::encoding::DescriptorSet;
use crate::error::{Error, Result};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse(format!("{}: {other:?}", path.display())),
        })
}

fn parse_value(path: &Path, line: u64, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::Parse(format!("{}:{line}: '{v}' is not a number", path.display())))?;
    if !x.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    Ok(x)
}

/// Descriptor rows `video_id,v1,…,vd`, grouped by video id in order of first
/// appearance. A first line whose value columns are not numeric is taken as
/// a header and skipped.
pub fn read_descriptors(path: &Path) -> Result<Vec<DescriptorSet>> {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut dim: Option<usize> = None;
    for (n, rec) in reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = n as u64 + 1;
        if rec.len() < 2 {
            return Err(Error::Parse(format!("{}:{line}: need a video id and values", path.display())));
        }
        if n == 0 && rec.get(1).is_some_and(|v| v.parse::<f64>().is_err()) {
            continue;
        }
        let d = rec.len() - 1;
        if *dim.get_or_insert(d) != d {
            return Err(Error::DimensionMismatch {
                expected: dim.unwrap(),
                got: d,
            });
        }
        let id = rec[0].to_string();
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            groups.push((id, Vec::new()));
            groups.len() - 1
        });
        for v in rec.iter().skip(1) {
            groups[slot].1.push(parse_value(path, line, v)?);
        }
    }
    let d = dim.unwrap_or(0);
    Ok(groups
        .into_iter()
        .map(|(video_id, values)| DescriptorSet {
            video_id,
            descriptors: DMatrix::from_row_slice(values.len() / d.max(1), d, &values),
        })
        .collect())
}

/// Every `*.csv` under `dir` (sorted by name) or the single file `dir`,
/// merged and grouped by video id.
pub fn read_descriptor_input(input: &Path) -> Result<Vec<DescriptorSet>> {
    let files: Vec<PathBuf> = if input.is_dir() {
        let mut f: Vec<PathBuf> = fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        f.sort();
        f
    } else {
        vec![input.to_path_buf()]
    };
    let mut sets: Vec<DescriptorSet> = Vec::new();
    for f in files {
        for s in read_descriptors(&f)? {
            if let Some(prev) = sets.iter_mut().find(|p| p.video_id == s.video_id) {
                prev.descriptors = crate::data::vstack(&[&prev.descriptors, &s.descriptors])?;
            } else {
                sets.push(s);
            }
        }
    }
    if sets.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(sets)
}

/// `video_id,label` rows.
pub fn read_video_labels(path: &Path) -> Result<HashMap<String, usize>> {
    let mut out = HashMap::new();
    for (n, rec) in reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != 2 {
            return Err(Error::Parse(format!("{}:{}: expected video_id,label", path.display(), n + 1)));
        }
        match rec[1].parse::<usize>() {
            Ok(l) => {
                out.insert(rec[0].to_string(), l);
            }
            Err(_) if n == 0 => continue,
            Err(_) => return Err(Error::Parse(format!("{}:{}: bad label '{}'", path.display(), n + 1, &rec[1]))),
        }
    }
    Ok(out)
}

/// Feature file with header `label,f0,…,f{D-1}`; label `-1` is unlabeled.
pub fn read_features(path: &Path) -> Result<FeatureSet> {
    let mut rows = reader(path)?.into_records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| csv_err(path, e))?,
        None => return Err(Error::EmptyInput),
    };
    if header.get(0) != Some("label") {
        return Err(Error::Parse(format!("{}: header must start with 'label'", path.display())));
    }
    let d = header.len() - 1;
    let mut values = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    for (n, rec) in rows.enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = n as u64 + 2;
        if rec.len() != d + 1 {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: rec.len().saturating_sub(1),
            });
        }
        let label: i64 = rec[0]
            .parse()
            .map_err(|_| Error::Parse(format!("{}:{line}: bad label '{}'", path.display(), &rec[0])))?;
        labels.push(match label {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            l => return Err(Error::Parse(format!("{}:{line}: label {l} below -1", path.display()))),
        });
        for v in rec.iter().skip(1) {
            values.push(parse_value(path, line, v)?);
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    FeatureSet::new(DMatrix::from_row_slice(labels.len(), d, &values), labels)
}

pub fn features_csv(features: &DMatrix<f64>, labels: &[Label]) -> String {
    let mut s = String::from("label");
    for j in 0..features.ncols() {
        s.push_str(&format!(",f{j}"));
    }
    s.push('\n');
    for i in 0..features.nrows() {
        match labels.get(i).copied().flatten() {
            Some(l) => s.push_str(&l.to_string()),
            None => s.push_str("-1"),
        }
        for j in 0..features.ncols() {
            s.push_str(&format!(",{}", features[(i, j)]));
        }
        s.push('\n');
    }
    s
}

pub fn write_features(path: &Path, set: &FeatureSet) -> Result<()> {
    fs::write(path, features_csv(&set.features, &set.labels))?;
    Ok(())
}

/// Plain matrix, no header.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn predictions_csv(predictions: &[usize]) -> String {
    let mut s = String::from("row,predicted_label\n");
    for (i, p) in predictions.iter().enumerate() {
        s.push_str(&format!("{i},{p}\n"));
    }
    s
}

pub fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("iteration,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{i},{l}\n"));
    }
    s
}
