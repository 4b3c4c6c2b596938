//! Persistent data types and their file formats.

pub mod activation;
pub mod attack;
pub mod npy;
pub mod similarity;

pub use activation::{load_activation_set, load_manifest, ActivationSet, LayerMeta, NetworkManifest};
pub use attack::{read_attack_csv, write_attack_csv, AttackRecord, AttackTable, BoxClass, StepClass};
pub use npy::{read_array, write_array, Precision, RawBlock};
pub use similarity::SimilarityMatrix;

use crate::error::{Error, Result};

/// Dense row-major activation matrix: one row per input example, one column
/// per flattened feature.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ActivationMatrix {
    /// Validates `rows >= 2`, `cols >= 1`, the value count and finiteness.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows < 2 {
            return Err(Error::Shape(format!("need at least 2 rows, got {rows}")));
        }
        if cols < 1 {
            return Err(Error::Shape("need at least 1 column".into()));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, col {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(ActivationMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub(crate) fn from_parts_unchecked(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, values.len());
        ActivationMatrix { rows, cols, values }
    }
}

/// Formats a real with 17 significant digits so it survives a text round trip.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn parse_real(field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("{what}: cannot parse {field:?} as a number")))
}
