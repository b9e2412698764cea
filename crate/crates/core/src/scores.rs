//! Integer score grids produced by rubric scoring runs.
//!
//! A [`ScoreMatrix`] holds one row per feedback instance and one column per
//! rubric dimension. Unmasked cells are integers in 1..=5; cells that could
//! not be scored stay masked instead of being silently filled in. Matrices
//! persist as CSV with a same-shape mask sidecar so every consumer can tell
//! real values from holes.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Row-major grid of 1..=5 ratings with a missing-cell mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreMatrix {
    instance_ids: Vec<String>,
    case_ids: Vec<String>,
    dimension_ids: Vec<String>,
    /// Row-major values; masked cells hold 0 and must not be read directly.
    values: Vec<u8>,
    /// True where the cell is missing.
    masked: Vec<bool>,
}

impl ScoreMatrix {
    /// Creates a fully masked matrix over the given instances and dimensions.
    ///
    /// `case_ids` runs parallel to `instance_ids` (the CSV layout carries the
    /// case next to each instance). Instance and dimension ids must be unique.
    pub fn new(
        instance_ids: Vec<String>,
        case_ids: Vec<String>,
        dimension_ids: Vec<String>,
    ) -> Result<Self> {
        if case_ids.len() != instance_ids.len() {
            return Err(Error::invalid(format!(
                "case id list has {} entries for {} instances",
                case_ids.len(),
                instance_ids.len()
            )));
        }
        if dimension_ids.is_empty() {
            return Err(Error::invalid("score matrix needs at least one dimension"));
        }
        let mut seen = HashSet::new();
        for id in &instance_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate instance id \"{id}\"")));
            }
        }
        let mut seen = HashSet::new();
        for id in &dimension_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate dimension id \"{id}\"")));
            }
        }
        let cells = instance_ids.len() * dimension_ids.len();
        Ok(Self {
            instance_ids,
            case_ids,
            dimension_ids,
            values: vec![0; cells],
            masked: vec![true; cells],
        })
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn case_ids(&self) -> &[String] {
        &self.case_ids
    }

    pub fn dimension_ids(&self) -> &[String] {
        &self.dimension_ids
    }

    pub fn n_instances(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn n_dimensions(&self) -> usize {
        self.dimension_ids.len()
    }

    fn cell(&self, row: usize, col: usize) -> usize {
        assert!(row < self.n_instances() && col < self.n_dimensions());
        row * self.n_dimensions() + col
    }

    /// Writes a value, unmasking the cell. Values outside 1..=5 are rejected.
    pub fn set(&mut self, row: usize, col: usize, value: u8) -> Result<()> {
        if !(1..=5).contains(&value) {
            return Err(Error::invalid(format!(
                "score {value} out of range 1..=5 at row {row}, column {col}"
            )));
        }
        let cell = self.cell(row, col);
        self.values[cell] = value;
        self.masked[cell] = false;
        Ok(())
    }

    /// Marks a cell as missing.
    pub fn mask_cell(&mut self, row: usize, col: usize) {
        let cell = self.cell(row, col);
        self.values[cell] = 0;
        self.masked[cell] = true;
    }

    pub fn is_masked(&self, row: usize, col: usize) -> bool {
        self.masked[self.cell(row, col)]
    }

    pub fn get(&self, row: usize, col: usize) -> Option<u8> {
        let cell = self.cell(row, col);
        if self.masked[cell] {
            None
        } else {
            Some(self.values[cell])
        }
    }

    /// One column as options, in row order.
    pub fn column(&self, col: usize) -> Vec<Option<u8>> {
        (0..self.n_instances()).map(|r| self.get(r, col)).collect()
    }

    /// One row as options, in dimension order.
    pub fn row(&self, row: usize) -> Vec<Option<u8>> {
        (0..self.n_dimensions()).map(|c| self.get(row, c)).collect()
    }

    /// Count of unmasked cells.
    pub fn n_scored(&self) -> usize {
        self.masked.iter().filter(|m| !**m).count()
    }

    /// Sidecar path for a matrix CSV: `scores.csv` becomes `scores.mask.csv`.
    pub fn mask_sidecar_path(path: &Path) -> PathBuf {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        path.with_file_name(format!("{stem}.mask.csv"))
    }

    /// Writes the matrix as CSV plus its mask sidecar.
    ///
    /// Layout: `instance_id,case_id,<dim>...` with masked cells left empty.
    /// The sidecar mirrors the shape with 1 marking masked cells.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let render = |mask_view: bool| -> Result<String> {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["instance_id".to_string(), "case_id".to_string()];
            header.extend(self.dimension_ids.iter().cloned());
            w.write_record(&header).map_err(csv_error)?;
            for r in 0..self.n_instances() {
                let mut rec = vec![self.instance_ids[r].clone(), self.case_ids[r].clone()];
                for c in 0..self.n_dimensions() {
                    rec.push(match (mask_view, self.get(r, c)) {
                        (true, v) => u8::from(v.is_none()).to_string(),
                        (false, Some(v)) => v.to_string(),
                        (false, None) => String::new(),
                    });
                }
                w.write_record(&rec).map_err(csv_error)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
        };
        crate::util::atomic_write(path, render(false)?.as_bytes())?;
        crate::util::atomic_write(&Self::mask_sidecar_path(path), render(true)?.as_bytes())?;
        Ok(())
    }

    /// Reads a matrix written by [`ScoreMatrix::write_csv`]. The sidecar is
    /// optional; without it the mask is inferred from empty cells.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
        let header = reader.headers().map_err(csv_error)?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols.len() < 3 || cols[0] != "instance_id" || cols[1] != "case_id" {
            return Err(Error::data(format!(
                "score matrix header must start with instance_id,case_id and carry \
                 at least one dimension column, got {cols:?}"
            )));
        }
        let dimension_ids: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();

        let mut instance_ids = Vec::new();
        let mut case_ids = Vec::new();
        let mut rows: Vec<Vec<Option<u8>>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map(|p| p.line() as usize);
            if record.len() != cols.len() {
                return Err(Error::Data {
                    row: line,
                    message: format!(
                        "expected {} fields, got {}",
                        cols.len(),
                        record.len()
                    ),
                });
            }
            instance_ids.push(record[0].to_string());
            case_ids.push(record[1].to_string());
            let mut row = Vec::with_capacity(dimension_ids.len());
            for (j, raw) in record.iter().skip(2).enumerate() {
                if raw.is_empty() {
                    row.push(None);
                    continue;
                }
                let value: u8 = raw.parse().map_err(|_| Error::Data {
                    row: line,
                    message: format!(
                        "column \"{}\": score \"{raw}\" is not an integer",
                        dimension_ids[j]
                    ),
                })?;
                if !(1..=5).contains(&value) {
                    return Err(Error::Data {
                        row: line,
                        message: format!(
                            "column \"{}\": score {value} out of range 1..=5",
                            dimension_ids[j]
                        ),
                    });
                }
                row.push(Some(value));
            }
            rows.push(row);
        }

        let mut matrix = Self::new(instance_ids, case_ids, dimension_ids)?;
        for (r, row) in rows.iter().enumerate() {
            for (c, value) in row.iter().enumerate() {
                if let Some(v) = *value {
                    matrix.set(r, c, v)?;
                }
            }
        }
        Ok(matrix)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::data(format!("csv: {e}"))
}
