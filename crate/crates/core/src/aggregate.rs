//! Descriptive analyses over layer-pair and network-pair scores.
//!
//! Layer-level aggregations take [`PairMatrix`] views whose rows belong to
//! network A. Inputs are sorted by `(net_a, net_b)` before accumulating, so
//! results do not depend on the order pairs are supplied in.

use std::collections::{BTreeMap, BTreeSet};

use crate::data::{NetworkManifest, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::scores::{PairScores, ScoreKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

pub fn summary_stats(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::Empty("summary statistics need at least one value"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    };
    Ok(SummaryStats {
        mean,
        median,
        std: var.sqrt(),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        count: values.len(),
    })
}

/// A similarity matrix with the manifests of its row (A) and column (B) networks.
#[derive(Debug, Clone, Copy)]
pub struct PairMatrix<'a> {
    pub matrix: &'a SimilarityMatrix,
    pub a: &'a NetworkManifest,
    pub b: &'a NetworkManifest,
}

impl<'a> PairMatrix<'a> {
    pub fn new(
        matrix: &'a SimilarityMatrix,
        a: &'a NetworkManifest,
        b: &'a NetworkManifest,
    ) -> Result<Self> {
        if matrix.n() != a.num_layers || matrix.m() != b.num_layers {
            return Err(Error::Mismatch(format!(
                "{}x{} matrix does not fit {} ({} layers) vs {} ({} layers)",
                matrix.n(),
                matrix.m(),
                a.network_name,
                a.num_layers,
                b.network_name,
                b.num_layers
            )));
        }
        Ok(PairMatrix { matrix, a, b })
    }

    /// The same scores viewed with B as the row network.
    pub fn flipped(&self, transposed: &'a SimilarityMatrix) -> PairMatrix<'a> {
        PairMatrix {
            matrix: transposed,
            a: self.b,
            b: self.a,
        }
    }

    fn key(&self) -> (&str, &str) {
        (&self.a.network_name, &self.b.network_name)
    }
}

fn sorted<'p, 'a>(pairs: &'p [PairMatrix<'a>]) -> Vec<&'p PairMatrix<'a>> {
    let mut v: Vec<_> = pairs.iter().collect();
    v.sort_by(|x, y| x.key().cmp(&y.key()));
    v
}

/// Mean score of every layer of network A, grouped by normalized layer position.
/// Returns `(position, mean)` sorted by position.
pub fn position_curve(pairs: &[PairMatrix]) -> Vec<(f64, f64)> {
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for p in sorted(pairs) {
        for layer in &p.a.layers {
            let e = acc.entry(layer.normalized_position.to_bits()).or_default();
            for &v in p.matrix.row(layer.index) {
                e.0 += v;
                e.1 += 1;
            }
        }
    }
    acc.into_iter()
        .map(|(bits, (sum, n))| (f64::from_bits(bits), sum / n as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GridCell {
    /// `None` for a bin that received no comparisons.
    pub mean: Option<f64>,
    pub count: usize,
}

/// `bins × bins` grid over (position in A, position in B).
#[derive(Debug, Clone, PartialEq)]
pub struct PositionGrid {
    pub bins: usize,
    pub cells: Vec<GridCell>,
}

impl PositionGrid {
    pub fn cell(&self, row: usize, col: usize) -> GridCell {
        self.cells[row * self.bins + col]
    }

    pub fn total_count(&self) -> usize {
        self.cells.iter().map(|c| c.count).sum()
    }
}

pub fn bin_index(position: f64, bins: usize) -> usize {
    ((position * bins as f64).floor() as usize).min(bins - 1)
}

pub fn position_grid(pairs: &[PairMatrix], bins: usize) -> Result<PositionGrid> {
    if bins == 0 {
        return Err(Error::InvalidArgument("grid needs at least one bin".into()));
    }
    let mut sums = vec![(0.0, 0usize); bins * bins];
    for p in sorted(pairs) {
        for la in &p.a.layers {
            let r = bin_index(la.normalized_position, bins);
            for lb in &p.b.layers {
                let c = bin_index(lb.normalized_position, bins);
                let cell = &mut sums[r * bins + c];
                cell.0 += p.matrix.get(la.index, lb.index);
                cell.1 += 1;
            }
        }
    }
    Ok(PositionGrid {
        bins,
        cells: sums
            .into_iter()
            .map(|(sum, count)| GridCell {
                mean: (count > 0).then(|| sum / count as f64),
                count,
            })
            .collect(),
    })
}

/// Mean layer-pair score per unordered pair of layer types, keeping only
/// types that occur in more than one network. Keys are `(type_lo, type_hi)`.
pub fn type_matrix(pairs: &[PairMatrix]) -> BTreeMap<(String, String), (f64, usize)> {
    let mut owners: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for p in pairs {
        for m in [p.a, p.b] {
            for l in &m.layers {
                owners
                    .entry(l.layer_type.as_str())
                    .or_default()
                    .insert(m.network_name.as_str());
            }
        }
    }
    let shared: BTreeSet<&str> = owners
        .into_iter()
        .filter(|(_, nets)| nets.len() > 1)
        .map(|(t, _)| t)
        .collect();

    let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for p in sorted(pairs) {
        for la in &p.a.layers {
            if !shared.contains(la.layer_type.as_str()) {
                continue;
            }
            for lb in &p.b.layers {
                if !shared.contains(lb.layer_type.as_str()) {
                    continue;
                }
                let (lo, hi) = if la.layer_type <= lb.layer_type {
                    (&la.layer_type, &lb.layer_type)
                } else {
                    (&lb.layer_type, &la.layer_type)
                };
                let e = acc.entry((lo.clone(), hi.clone())).or_default();
                e.0 += p.matrix.get(la.index, lb.index);
                e.1 += 1;
            }
        }
    }
    acc.into_iter()
        .map(|(k, (sum, n))| (k, (sum / n as f64, n)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeDeltaPoint {
    pub net_a: String,
    pub net_b: String,
    pub layer_delta: usize,
    pub score: f64,
}

/// One `(|n_a - n_b|, score)` point per unordered network pair.
pub fn size_delta_series(scores: &PairScores, kind: ScoreKind) -> Result<Vec<SizeDeltaPoint>> {
    scores
        .iter()
        .map(|p| {
            Ok(SizeDeltaPoint {
                net_a: p.net_a.clone(),
                net_b: p.net_b.clone(),
                layer_delta: p.layer_delta(),
                score: p.score(kind)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalPair {
    pub net_a: String,
    pub net_b: String,
    pub score: f64,
}

/// Most and least similar network pairs. Ties go to the lexicographically
/// smallest `(net_a, net_b)`.
pub fn extremal_pairs(scores: &PairScores, kind: ScoreKind) -> Result<(ExtremalPair, ExtremalPair)> {
    let mut best: Option<ExtremalPair> = None;
    let mut worst: Option<ExtremalPair> = None;
    // Canonical iteration order is lexicographic, so strict comparisons keep
    // the first of any tied group.
    for p in scores.iter() {
        let score = p.score(kind)?;
        let candidate = ExtremalPair {
            net_a: p.net_a.clone(),
            net_b: p.net_b.clone(),
            score,
        };
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(candidate.clone());
        }
        if worst.as_ref().is_none_or(|w| score < w.score) {
            worst = Some(candidate);
        }
    }
    match (best, worst) {
        (Some(b), Some(w)) => Ok((b, w)),
        _ => Err(Error::Empty("extremal pairs need at least one pair score")),
    }
}
