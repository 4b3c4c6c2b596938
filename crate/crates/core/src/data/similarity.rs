use std::io::{Read, Write};

use super::{fmt_real, parse_real};
use crate::error::{Error, Result};

/// Layer-pair CKA scores for a network pair: `entry(i, j)` compares layer `i`
/// of `net_a` with layer `j` of `net_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub net_a: String,
    pub net_b: String,
    n: usize,
    m: usize,
    entries: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(
        net_a: impl Into<String>,
        net_b: impl Into<String>,
        n: usize,
        m: usize,
        entries: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Shape("similarity matrix needs n, m >= 1".into()));
        }
        if entries.len() != n * m {
            return Err(Error::Shape(format!(
                "{n}x{m} similarity matrix needs {} entries, got {}",
                n * m,
                entries.len()
            )));
        }
        if let Some(v) = entries.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite similarity entry {v}")));
        }
        Ok(SimilarityMatrix {
            net_a: net_a.into(),
            net_b: net_b.into(),
            n,
            m,
            entries,
        })
    }

    /// Anonymous matrix, mostly for tests and DBS experiments.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new("a", "b", rows.len(), m, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn transpose(&self) -> SimilarityMatrix {
        let mut entries = Vec::with_capacity(self.entries.len());
        for j in 0..self.m {
            for i in 0..self.n {
                entries.push(self.get(i, j));
            }
        }
        SimilarityMatrix {
            net_a: self.net_b.clone(),
            net_b: self.net_a.clone(),
            n: self.m,
            m: self.n,
            entries,
        }
    }

    /// CSV with layer indices as the first row and column.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend((0..self.m).map(|j| j.to_string()));
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut rec = vec![i.to_string()];
            rec.extend(self.row(i).iter().map(|&v| fmt_real(v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<similarity csv>", e))?;
        Ok(())
    }

    pub fn read_csv(
        net_a: impl Into<String>,
        net_b: impl Into<String>,
        reader: impl Read,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let m = rdr.headers()?.len().saturating_sub(1);
        let mut entries = Vec::new();
        let mut n = 0;
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            if row.len() != m + 1 {
                return Err(Error::Format(format!("similarity CSV row {i} has {} fields", row.len())));
            }
            if row[0].trim() != i.to_string() {
                return Err(Error::Format(format!("similarity CSV row {i} labelled {:?}", &row[0])));
            }
            for field in row.iter().skip(1) {
                entries.push(parse_real(field, "similarity CSV")?);
            }
            n += 1;
        }
        Self::new(net_a, net_b, n, m, entries)
    }
}
