//! Sample-by-variable data matrices with level annotations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense sample matrix. Discrete values are stored as exact small
/// integers in f64 cells; continuous values as reals. Column labels are
/// unique and each carries the level it was generated at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Column labels, unique.
    pub labels: Vec<String>,
    /// Per-column level annotation (0 = coarsest).
    pub levels: Vec<u32>,
    /// Row-major sample matrix.
    pub rows: Vec<Vec<f64>>,
    /// Seed the data was generated from, when applicable.
    pub seed: Option<u64>,
}

/// Sidecar metadata written next to the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    schema_version: u32,
    labels: Vec<String>,
    levels: Vec<u32>,
    seed: Option<u64>,
}

impl Dataset {
    /// Construct with validation: unique labels, consistent widths.
    pub fn new(labels: Vec<String>, levels: Vec<u32>, rows: Vec<Vec<f64>>, seed: Option<u64>) -> Result<Self> {
        if labels.len() != levels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels vs {} level annotations",
                labels.len(),
                levels.len()
            )));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::InvalidModel("duplicate column labels".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != labels.len()) {
            return Err(Error::ShapeMismatch(format!(
                "row width {} does not match {} columns",
                bad.len(),
                labels.len()
            )));
        }
        Ok(Dataset { labels, levels, rows, seed })
    }

    /// Number of samples.
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Number of variables.
    pub fn n_cols(&self) -> usize {
        self.labels.len()
    }

    /// Column index by label.
    pub fn col_by_label(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// One column as a vector.
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[c]).collect()
    }

    /// Column indices whose level annotation equals `level`.
    pub fn columns_at_level(&self, level: u32) -> Vec<usize> {
        (0..self.n_cols()).filter(|&c| self.levels[c] == level).collect()
    }

    /// Restrict to a subset of columns (order follows `cols`).
    pub fn select(&self, cols: &[usize]) -> Dataset {
        Dataset {
            labels: cols.iter().map(|&c| self.labels[c].clone()).collect(),
            levels: cols.iter().map(|&c| self.levels[c]).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| cols.iter().map(|&c| r[c]).collect())
                .collect(),
            seed: self.seed,
        }
    }

    /// Write `<path>` as CSV and `<path>.meta.json` as the sidecar.
    /// Integer-valued cells are written without a decimal point so discrete
    /// data round-trips exactly.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.labels)?;
        let mut buf = Vec::with_capacity(self.n_cols());
        for row in &self.rows {
            buf.clear();
            for &v in row {
                if v.fract() == 0.0 && v.abs() < 1e15 {
                    buf.push(format!("{}", v as i64));
                } else {
                    buf.push(format!("{v}"));
                }
            }
            w.write_record(&buf)?;
        }
        w.flush()?;
        let sidecar = Sidecar {
            schema_version: crate::SCHEMA_VERSION,
            labels: self.labels.clone(),
            levels: self.levels.clone(),
            seed: self.seed,
        };
        let meta = serde_json::to_string_pretty(&sidecar)?;
        std::fs::write(sidecar_path(path), meta + "\n")?;
        Ok(())
    }

    /// Read a CSV written by [`write_csv`]; the sidecar is used when
    /// present, otherwise all columns get level 0.
    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let mut r = csv::Reader::from_path(path)?;
        let labels: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row: std::result::Result<Vec<f64>, _> =
                rec.iter().map(|s| s.parse::<f64>()).collect();
            rows.push(row.map_err(|e| Error::InvalidModel(format!("bad csv cell: {e}")))?);
        }
        let (levels, seed) = match std::fs::read_to_string(sidecar_path(path)) {
            Ok(text) => {
                let sc: Sidecar = serde_json::from_str(&text)?;
                if sc.labels != labels {
                    return Err(Error::InvalidModel(
                        "sidecar labels disagree with CSV header".into(),
                    ));
                }
                (sc.levels, sc.seed)
            }
            Err(_) => (vec![0; labels.len()], None),
        };
        Dataset::new(labels, levels, rows, seed)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    std::path::PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_sidecar() {
        let d = Dataset::new(
            vec!["a".into(), "b".into()],
            vec![0, 1],
            vec![vec![1.0, 0.5], vec![2.0, -0.25]],
            Some(99),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        d.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("1,0.5"), "{text}");
        let back = Dataset::read_csv(&path).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn duplicate_labels_rejected() {
        assert!(Dataset::new(vec!["a".into(), "a".into()], vec![0, 0], vec![], None).is_err());
    }
}
