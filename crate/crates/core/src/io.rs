//! CSV ingestion, JSON result documents and per-feature standardization.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Centroids, DataSet, FitResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Read a rectangular numeric table, one point per row.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<DataSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    read_csv(file, has_header)
}

/// Row and column numbers in errors are 1-based and count data rows only.
pub fn read_csv(reader: impl Read, has_header: bool) -> Result<DataSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(has_header).flexible(true).from_reader(reader);
    let mut values = Vec::new();
    let mut dim = None;
    let mut rows = 0usize;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Csv(format!("row {row}: {e}")))?;
        if record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        match dim {
            None => dim = Some(record.len()),
            Some(d) if d != record.len() => {
                return Err(Error::Csv(format!("row {row}: expected {d} columns, found {}", record.len())));
            }
            _ => {}
        }
        for (j, cell) in record.iter().enumerate() {
            let col = j + 1;
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::Csv(format!("row {row}, column {col}: not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(Error::Csv(format!("row {row}, column {col}: non-finite value {cell:?}")));
            }
            values.push(v);
        }
        rows += 1;
    }
    let dim = dim.ok_or_else(|| Error::Csv("no data rows".into()))?;
    DataSet::from_flat(rows, dim, values)
}

/// Write rows of numbers with an optional header.
pub fn write_csv(writer: impl Write, header: Option<&[&str]>, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    if let Some(h) = header {
        w.write_record(h).map_err(csv_err)?;
    }
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, header: Option<&[&str]>, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    write_csv(BufWriter::new(File::create(path)?), header, rows)
}

/// Per-feature z-score transform `(x − mean) / std`. Constant features keep
/// a unit divisor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn fit(data: &DataSet) -> Self {
        let n = data.n_points() as f64;
        let d = data.dim();
        let mean: Vec<f64> = (0..d).map(|j| data.points().map(|p| p[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let var = data.points().map(|p| (p[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 { var.sqrt() } else { 1.0 }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, data: &DataSet) -> Result<DataSet> {
        self.check(data.dim())?;
        let d = data.dim();
        let values = data.as_flat().iter().enumerate().map(|(i, v)| (v - self.mean[i % d]) / self.std[i % d]).collect();
        DataSet::from_flat(data.n_points(), d, values)
    }

    /// Map centroids from standardized back to raw units.
    pub fn invert_centroids(&self, m: &Centroids) -> Result<Centroids> {
        self.check(m.dim())?;
        let d = m.dim();
        let values = m.as_flat().iter().enumerate().map(|(i, v)| v * self.std[i % d] + self.mean[i % d]).collect();
        Centroids::from_flat(m.k(), d, values)
    }

    fn check(&self, dim: usize) -> Result<()> {
        if self.mean.len() != dim || self.std.len() != dim {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), got: dim });
        }
        Ok(())
    }
}

/// What to include beyond the always-present fields.
#[derive(Debug, Clone, Default)]
pub struct SaveOptions {
    pub soft_assignment: bool,
    pub worst_case_points: bool,
    /// Echo of the configuration that produced the fit.
    pub config: serde_json::Value,
    pub standardization: Option<Standardization>,
}

/// On-disk form of a [`FitResult`]. Matrices are row-major nested arrays;
/// an infinite `gamma_final` (the classical baseline) is stored as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub version: String,
    pub centroids: Vec<Vec<f64>>,
    pub hard_labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft_assignment: Option<Vec<Vec<f64>>>,
    pub gamma_final: Option<f64>,
    pub objective_trace: Vec<f64>,
    pub gamma_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_case_points: Option<Vec<Vec<f64>>>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<Standardization>,
}

impl ResultDocument {
    pub fn from_fit(result: &FitResult, opts: &SaveOptions) -> Self {
        Self {
            version: TOOL_VERSION.to_string(),
            centroids: result.centroids.to_rows(),
            hard_labels: result.hard_labels(),
            soft_assignment: opts.soft_assignment.then(|| result.assignment.columns().map(<[f64]>::to_vec).collect()),
            gamma_final: result.gamma_final.is_finite().then_some(result.gamma_final),
            objective_trace: result.objective_trace.clone(),
            gamma_trace: result.gamma_trace.clone(),
            worst_case_points: opts.worst_case_points.then(|| result.worst_case_points.to_rows()),
            iterations: result.iterations,
            converged: result.converged,
            config: opts.config.clone(),
            standardization: opts.standardization.clone(),
        }
    }

    pub fn centroids(&self) -> Result<Centroids> {
        Centroids::new(&self.centroids)
    }
}

pub fn save_result(result: &FitResult, path: impl AsRef<Path>, opts: &SaveOptions) -> Result<()> {
    save_document(&ResultDocument::from_fit(result, opts), path)
}

pub fn save_document(doc: &ResultDocument, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, doc)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_result(path: impl AsRef<Path>) -> Result<ResultDocument> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SoftAssignment;

    #[test]
    fn parses_tables() {
        let d = read_csv("0,0\n1,1\n".as_bytes(), false).unwrap();
        assert_eq!((d.n_points(), d.dim()), (2, 2));
        let h = read_csv("a,b\n1,2\n3,4\n5,6\n".as_bytes(), true).unwrap();
        assert_eq!(h.n_points(), 3);
    }

    #[test]
    fn diagnostics_name_row_and_column() {
        let err = read_csv("1,NaN\n".as_bytes(), false).unwrap_err().to_string();
        assert!(err.contains("row 1, column 2"), "{err}");
        let err = read_csv("1,2\n3\n".as_bytes(), false).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        let err = read_csv("1,x\n".as_bytes(), false).unwrap_err().to_string();
        assert!(err.contains("column 2"), "{err}");
        assert!(read_csv("".as_bytes(), false).is_err());
    }

    fn sample_fit() -> FitResult {
        let data = DataSet::from_scalars(&[0.1, 0.7, 3.3]).unwrap();
        FitResult {
            centroids: Centroids::from_scalars(&[0.1 + 0.2, 1.0 / 3.0]).unwrap(),
            assignment: SoftAssignment::from_columns(&[vec![0.25, 0.75], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            gamma_final: f64::INFINITY,
            objective_trace: vec![2.0, 1.0],
            gamma_trace: vec![],
            worst_case_points: data,
            iterations: 1,
            converged: true,
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit.json");
        let fit = sample_fit();
        save_result(&fit, &path, &SaveOptions::default()).unwrap();
        let doc = load_result(&path).unwrap();
        assert_eq!(doc.centroids().unwrap(), fit.centroids);
        assert!(doc.soft_assignment.is_none() && doc.worst_case_points.is_none());
        assert_eq!(doc.gamma_final, None);
        assert_eq!(doc.hard_labels, vec![1, 0, 1]);
        assert_eq!(doc.objective_trace.len(), doc.iterations + 1);

        let opts = SaveOptions { soft_assignment: true, ..SaveOptions::default() };
        save_result(&fit, &path, &opts).unwrap();
        assert_eq!(load_result(&path).unwrap().soft_assignment.unwrap()[0], vec![0.25, 0.75]);
    }

    #[test]
    fn standardization_inverts() {
        let data = DataSet::new(&[vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]]).unwrap();
        let t = Standardization::fit(&data);
        assert_eq!(t.std[1], 1.0);
        let z = t.apply(&data).unwrap();
        assert!((z.point(0)[0] + z.point(2)[0]).abs() < 1e-15);
        let back = t.invert_centroids(&Centroids::new(&z.to_rows()).unwrap()).unwrap();
        for (a, b) in back.as_flat().iter().zip(data.as_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
