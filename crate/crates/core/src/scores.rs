//! Network-pair score records and the pair-score CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::data::{fmt_real, parse_real, SimilarityMatrix};
use crate::dbs::{dbs_sweep, network_cka_score};
use crate::error::{Error, Result};

/// Which network-level similarity number a downstream analysis uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum ScoreKind {
    #[default]
    Cka,
    Dbs(usize),
}

impl FromStr for ScoreKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "cka" {
            return Ok(ScoreKind::Cka);
        }
        s.strip_prefix("dbs:")
            .and_then(|r| r.parse().ok())
            .map(ScoreKind::Dbs)
            .ok_or_else(|| Error::InvalidArgument(format!("score kind must be cka or dbs:<r>, got {s:?}")))
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreKind::Cka => f.write_str("cka"),
            ScoreKind::Dbs(r) => write!(f, "dbs:{r}"),
        }
    }
}

/// Orders two network names lexicographically.
pub fn canonical_pair<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairScore {
    pub net_a: String,
    pub net_b: String,
    pub n_layers_a: usize,
    pub n_layers_b: usize,
    pub cka_mean: f64,
    pub dbs: BTreeMap<usize, f64>,
}

impl PairScore {
    pub fn from_matrix(s: &SimilarityMatrix, radii: &[usize]) -> Self {
        PairScore {
            net_a: s.net_a.clone(),
            net_b: s.net_b.clone(),
            n_layers_a: s.n(),
            n_layers_b: s.m(),
            cka_mean: network_cka_score(s),
            dbs: dbs_sweep(s, radii),
        }
    }

    pub fn score(&self, kind: ScoreKind) -> Result<f64> {
        match kind {
            ScoreKind::Cka => Ok(self.cka_mean),
            ScoreKind::Dbs(r) => self.dbs.get(&r).copied().ok_or_else(|| {
                Error::Data(format!(
                    "pair ({}, {}) has no DBS score for radius {r}",
                    self.net_a, self.net_b
                ))
            }),
        }
    }

    pub fn layer_delta(&self) -> usize {
        self.n_layers_a.abs_diff(self.n_layers_b)
    }
}

/// Scores for unordered network pairs, kept in canonical `(net_a, net_b)` order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairScores {
    pairs: BTreeMap<(String, String), PairScore>,
}

impl PairScores {
    pub fn new(scores: impl IntoIterator<Item = PairScore>) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        let mut radii: Option<BTreeSet<usize>> = None;
        for mut p in scores {
            if p.net_a == p.net_b {
                return Err(Error::Data(format!("self pair ({}, {}) in pair scores", p.net_a, p.net_b)));
            }
            if p.net_a > p.net_b {
                std::mem::swap(&mut p.net_a, &mut p.net_b);
                std::mem::swap(&mut p.n_layers_a, &mut p.n_layers_b);
            }
            let these: BTreeSet<usize> = p.dbs.keys().copied().collect();
            match &radii {
                Some(r) if *r != these => {
                    return Err(Error::Data("pair scores carry different DBS radii".into()))
                }
                _ => radii = Some(these),
            }
            let key = (p.net_a.clone(), p.net_b.clone());
            if pairs.insert(key, p).is_some() {
                return Err(Error::Data("duplicate network pair in pair scores".into()));
            }
        }
        let out = PairScores { pairs };
        out.layer_counts()?;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = &PairScore> {
        self.pairs.values()
    }

    /// Symmetric lookup: `(a, b)` and `(b, a)` resolve to the same record.
    pub fn get(&self, a: &str, b: &str) -> Option<&PairScore> {
        let (x, y) = canonical_pair(a, b);
        self.pairs.get(&(x.to_string(), y.to_string()))
    }

    pub fn score(&self, a: &str, b: &str, kind: ScoreKind) -> Result<f64> {
        self.get(a, b)
            .ok_or_else(|| Error::Data(format!("no pair score for ({a}, {b})")))?
            .score(kind)
    }

    pub fn radii(&self) -> Vec<usize> {
        self.iter()
            .next()
            .map(|p| p.dbs.keys().copied().collect())
            .unwrap_or_default()
    }

    /// Layer count of every network mentioned, checked for consistency.
    pub fn layer_counts(&self) -> Result<BTreeMap<String, usize>> {
        let mut counts = BTreeMap::new();
        for p in self.iter() {
            for (name, n) in [(&p.net_a, p.n_layers_a), (&p.net_b, p.n_layers_b)] {
                if let Some(prev) = counts.insert(name.clone(), n) {
                    if prev != n {
                        return Err(Error::Data(format!(
                            "network {name} listed with {prev} and {n} layers"
                        )));
                    }
                }
            }
        }
        Ok(counts)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let radii = self.radii();
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["net_a", "net_b", "n_layers_a", "n_layers_b", "cka_mean"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(radii.iter().map(|r| format!("dbs_r{r}")));
        w.write_record(&header)?;
        for p in self.iter() {
            let mut rec = vec![
                p.net_a.clone(),
                p.net_b.clone(),
                p.n_layers_a.to_string(),
                p.n_layers_b.to_string(),
                fmt_real(p.cka_mean),
            ];
            rec.extend(p.dbs.values().map(|&v| fmt_real(v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<pair score csv>", e))?;
        Ok(())
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let fixed = ["net_a", "net_b", "n_layers_a", "n_layers_b", "cka_mean"];
        if header.len() < fixed.len() || header.iter().zip(fixed).any(|(h, f)| h != f) {
            return Err(Error::Format("pair-score CSV header is malformed".into()));
        }
        let radii = header
            .iter()
            .skip(fixed.len())
            .map(|h| {
                h.strip_prefix("dbs_r")
                    .and_then(|r| r.parse::<usize>().ok())
                    .ok_or_else(|| Error::Format(format!("bad pair-score column {h:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let parse_count = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad layer count {s:?}")))
        };
        let mut scores = Vec::new();
        for row in rdr.records() {
            let row = row?;
            if row.len() != header.len() {
                return Err(Error::Format("pair-score CSV row has wrong field count".into()));
            }
            scores.push(PairScore {
                net_a: row[0].to_string(),
                net_b: row[1].to_string(),
                n_layers_a: parse_count(&row[2])?,
                n_layers_b: parse_count(&row[3])?,
                cka_mean: parse_real(&row[4], "cka_mean")?,
                dbs: radii
                    .iter()
                    .zip(row.iter().skip(fixed.len()))
                    .map(|(&r, v)| Ok((r, parse_real(v, "dbs")?)))
                    .collect::<Result<_>>()?,
            });
        }
        PairScores::new(scores)
    }
}
