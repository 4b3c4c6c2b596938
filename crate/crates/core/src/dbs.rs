//! Diagonal box similarity (DBS).
//!
//! The diagonal of an `n × m` similarity matrix is rasterized with Bresenham's
//! line algorithm from `(0, 0)` to `(n-1, m-1)`. Every trace cell is widened to
//! a box of radius `r` (edge `2r + 1`, clipped to the matrix) and the score is
//! the mean of `|S_ij|` over the union of those boxes, each cell counted once.

use std::collections::BTreeMap;

use crate::data::SimilarityMatrix;

/// Box radii swept by default.
pub const DEFAULT_RADII: [usize; 19] = [
    1, 2, 3, 5, 7, 9, 11, 13, 15, 30, 45, 60, 75, 90, 105, 120, 150, 200, 300,
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagonalTrace {
    pub points: Vec<(usize, usize)>,
}

/// Integer Bresenham rasterization of the segment `(0,0)–(n-1,m-1)`.
///
/// The longer dimension drives, producing `max(n, m)` points. The minor
/// coordinate advances when the error term is strictly positive, so exact
/// half-way cases round down.
pub fn bresenham_trace(n: usize, m: usize) -> DiagonalTrace {
    assert!(n >= 1 && m >= 1, "trace needs a non-empty matrix");
    let (d_row, d_col) = ((n - 1) as i64, (m - 1) as i64);
    let rows_drive = d_row >= d_col;
    let (major, minor) = if rows_drive { (d_row, d_col) } else { (d_col, d_row) };

    let mut points = Vec::with_capacity(major as usize + 1);
    let mut err = 2 * minor - major;
    let mut minor_pos = 0i64;
    for major_pos in 0..=major {
        let p = if rows_drive {
            (major_pos as usize, minor_pos as usize)
        } else {
            (minor_pos as usize, major_pos as usize)
        };
        points.push(p);
        if err > 0 {
            minor_pos += 1;
            err -= 2 * major;
        }
        err += 2 * minor;
    }
    DiagonalTrace { points }
}

/// Union of the clipped radius-`r` boxes around a trace, stored as one
/// inclusive column interval per covered row.
///
/// The trace moves by at most one cell per step along each axis, so the boxes
/// touching any row overlap into a single contiguous interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoxCover {
    pub radius: usize,
    rows: Vec<Option<(usize, usize)>>,
}

impl BoxCover {
    pub fn new(n: usize, m: usize, radius: usize) -> Self {
        let trace = bresenham_trace(n, m);
        let mut rows: Vec<Option<(usize, usize)>> = vec![None; n];
        for &(i, j) in &trace.points {
            let (lo_c, hi_c) = (j.saturating_sub(radius), (j + radius).min(m - 1));
            for row in rows
                .iter_mut()
                .take((i + radius).min(n - 1) + 1)
                .skip(i.saturating_sub(radius))
            {
                *row = Some(match *row {
                    Some((lo, hi)) => (lo.min(lo_c), hi.max(hi_c)),
                    None => (lo_c, hi_c),
                });
            }
        }
        BoxCover { radius, rows }
    }

    pub fn len(&self) -> usize {
        self.rows
            .iter()
            .flatten()
            .map(|(lo, hi)| hi - lo + 1)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        matches!(self.rows.get(i), Some(Some((lo, hi))) if (*lo..=*hi).contains(&j))
    }

    /// Covered cells in row-major order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.map(|(lo, hi)| (i, lo, hi)))
            .flat_map(|(i, lo, hi)| (lo..=hi).map(move |j| (i, j)))
    }
}

/// Mean of magnitudes summed in ascending order, so the result depends only on
/// the multiset of values and not on traversal order. A constant input returns
/// its magnitude exactly.
pub fn ordered_abs_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut mags: Vec<f64> = values.map(f64::abs).collect();
    mags.sort_by(f64::total_cmp);
    if mags.first() == mags.last() {
        return mags[0];
    }
    mags.iter().sum::<f64>() / mags.len() as f64
}

/// Mean of `|S_ij|` over the union of radius-`radius` boxes on the diagonal.
pub fn dbs(s: &SimilarityMatrix, radius: usize) -> f64 {
    let cover = BoxCover::new(s.n(), s.m(), radius);
    ordered_abs_mean(cover.points().map(|(i, j)| s.get(i, j)))
}

pub fn dbs_sweep(s: &SimilarityMatrix, radii: &[usize]) -> BTreeMap<usize, f64> {
    radii.iter().map(|&r| (r, dbs(s, r))).collect()
}

/// Network-level score: mean of `|S_ij|` over the full matrix.
pub fn network_cka_score(s: &SimilarityMatrix) -> f64 {
    ordered_abs_mean(s.entries().iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_trace_is_the_diagonal() {
        assert_eq!(
            bresenham_trace(4, 4).points,
            vec![(0, 0), (1, 1), (2, 2), (3, 3)]
        );
    }

    #[test]
    fn single_row_trace() {
        assert_eq!(
            bresenham_trace(1, 5).points,
            vec![(0, 0), (0, 1), (0, 2), (0, 3), (0, 4)]
        );
        assert_eq!(bresenham_trace(3, 1).points, vec![(0, 0), (1, 0), (2, 0)]);
        assert_eq!(bresenham_trace(1, 1).points, vec![(0, 0)]);
    }

    #[test]
    fn three_by_five_trace_is_pinned() {
        // Row = j·2/4 rounded half-down: 0, 0.5→0, 1, 1.5→1, 2.
        assert_eq!(
            bresenham_trace(3, 5).points,
            vec![(0, 0), (0, 1), (1, 2), (1, 3), (2, 4)]
        );
        assert_eq!(
            bresenham_trace(5, 3).points,
            vec![(0, 0), (1, 0), (2, 1), (3, 1), (4, 2)]
        );
    }

    #[test]
    fn constant_matrix_scores_its_value() {
        let s = SimilarityMatrix::from_rows(&vec![vec![0.5; 7]; 4]).unwrap();
        for r in [0, 1, 2, 5, 300] {
            assert_eq!(dbs(&s, r), 0.5);
        }
        let sweep = dbs_sweep(&s, &[1, 5, 300]);
        assert!(sweep.values().all(|&v| v == 0.5));
    }

    #[test]
    fn radius_zero_covers_only_the_trace() {
        let s = SimilarityMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.8, 0.0],
            vec![0.0, 0.0, 0.6],
        ])
        .unwrap();
        assert!((dbs(&s, 0) - 0.8).abs() < 1e-15);
        assert_eq!(BoxCover::new(3, 3, 0).len(), 3);
        // r=1 on 4x4 misses only the two far corners.
        assert_eq!(BoxCover::new(3, 3, 1).len(), 9);
        assert_eq!(BoxCover::new(4, 4, 1).len(), 14);
        assert!(!BoxCover::new(4, 4, 1).contains(0, 3));
        assert!(!BoxCover::new(4, 4, 1).contains(3, 0));
    }

    #[test]
    fn identity_pair_score() {
        let s = SimilarityMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(network_cka_score(&s), 0.5);
        assert_eq!(dbs(&s, 2), network_cka_score(&s));
    }

    #[test]
    fn negative_entries_count_by_magnitude() {
        let s = SimilarityMatrix::from_rows(&[vec![-0.5, 0.25], vec![0.25, -0.5]]).unwrap();
        assert_eq!(network_cka_score(&s), 0.375);
        assert_eq!(dbs(&s, 0), 0.5);
    }
}
