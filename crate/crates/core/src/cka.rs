//! Linear centered kernel alignment (CKA) between activation matrices.
//!
//! With column-centered activations `X̃` (examples × p) and `Ỹ` (examples × q):
//!
//! ```text
//! CKA(X, Y) = ‖ỸᵀX̃‖²_F / (‖X̃ᵀX̃‖_F · ‖ỸᵀỸ‖_F)
//! ```
//!
//! which equals the normalized biased HSIC of the linear Gram matrices
//! `K = X̃X̃ᵀ`, `L = ỸỸᵀ`. Both evaluations are implemented; [`CkaMethod::Auto`]
//! picks whichever is cheaper for the given shapes.

use std::cmp::Ordering;

use log::warn;
use rayon::prelude::*;

use crate::data::{ActivationMatrix, ActivationSet, RawBlock, SimilarityMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CkaScore(f64);

impl CkaScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CkaMethod {
    /// Feature-space form when `p·q <= examples²`, Gram form otherwise.
    #[default]
    Auto,
    /// `‖ỸᵀX̃‖²_F` over feature pairs; cost grows with `p·q`.
    Feature,
    /// `⟨X̃X̃ᵀ, ỸỸᵀ⟩_F` over example pairs; cost grows with `examples²`.
    Gram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlattenMode {
    #[default]
    Flatten,
    SpatialMean,
}

/// Subtracts each column's mean. Exactly constant columns become exact zeros.
pub fn center_columns(x: &ActivationMatrix) -> ActivationMatrix {
    let (rows, cols) = (x.rows(), x.cols());
    let mut means = vec![0.0; cols];
    let mut constant = vec![true; cols];
    let first = x.row(0);
    for r in 0..rows {
        for (c, &v) in x.row(r).iter().enumerate() {
            means[c] += v;
            constant[c] &= v == first[c];
        }
    }
    for m in &mut means {
        *m /= rows as f64;
    }
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for (c, &v) in x.row(r).iter().enumerate() {
            out.push(if constant[c] { 0.0 } else { v - means[c] });
        }
    }
    ActivationMatrix::from_parts_unchecked(rows, cols, out)
}

/// A centered matrix together with its self-similarity norm.
struct Prepared {
    centered: ActivationMatrix,
    norm: f64,
    degenerate: bool,
}

impl Prepared {
    fn new(x: &ActivationMatrix) -> Self {
        let centered = center_columns(x);
        let norm = if centered.cols() <= centered.rows() {
            feature_gram_norm(&centered)
        } else {
            example_gram_norm(&centered)
        };
        let scale: f64 = x.values().iter().map(|v| v * v).sum();
        let degenerate = norm == 0.0 || norm <= 1e-20 * scale;
        Prepared {
            centered,
            norm,
            degenerate,
        }
    }
}

fn dot_columns(x: &ActivationMatrix, a: usize, y: &ActivationMatrix, b: usize) -> f64 {
    (0..x.rows()).map(|r| x.get(r, a) * y.get(r, b)).sum()
}

fn dot_rows(x: &ActivationMatrix, i: usize, j: usize) -> f64 {
    x.row(i).iter().zip(x.row(j)).map(|(a, b)| a * b).sum()
}

/// ‖XᵀX‖_F via the p×p feature Gram matrix.
fn feature_gram_norm(x: &ActivationMatrix) -> f64 {
    let p = x.cols();
    let mut sum = 0.0;
    for a in 0..p {
        for b in 0..p {
            let d = dot_columns(x, a, x, b);
            sum += d * d;
        }
    }
    sum.sqrt()
}

/// ‖XXᵀ‖_F via the examples×examples Gram matrix.
fn example_gram_norm(x: &ActivationMatrix) -> f64 {
    let n = x.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = dot_rows(x, i, j);
            sum += d * d;
        }
    }
    sum.sqrt()
}

fn example_gram(x: &ActivationMatrix) -> Vec<f64> {
    let n = x.rows();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let d = dot_rows(x, i, j);
            k[i * n + j] = d;
            k[j * n + i] = d;
        }
    }
    k
}

/// Total order on matrices used to evaluate the asymmetric feature form in a
/// fixed argument order, so that `cka(X, Y)` and `cka(Y, X)` are bit-identical.
fn canonical_order(x: &ActivationMatrix, y: &ActivationMatrix) -> Ordering {
    x.cols()
        .cmp(&y.cols())
        .then_with(|| {
            x.values()
                .iter()
                .zip(y.values())
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

fn cross_feature(x: &ActivationMatrix, y: &ActivationMatrix) -> f64 {
    let (x, y) = match canonical_order(x, y) {
        Ordering::Greater => (y, x),
        _ => (x, y),
    };
    let mut sum = 0.0;
    for a in 0..x.cols() {
        for b in 0..y.cols() {
            let d = dot_columns(x, a, y, b);
            sum += d * d;
        }
    }
    sum
}

fn cross_gram(x: &ActivationMatrix, y: &ActivationMatrix) -> f64 {
    let k = example_gram(x);
    let l = example_gram(y);
    k.iter().zip(&l).map(|(a, b)| a * b).sum()
}

fn resolve(method: CkaMethod, x: &ActivationMatrix, y: &ActivationMatrix) -> CkaMethod {
    match method {
        CkaMethod::Auto => {
            if x.cols() * y.cols() <= x.rows() * x.rows() {
                CkaMethod::Feature
            } else {
                CkaMethod::Gram
            }
        }
        m => m,
    }
}

fn cka_prepared(x: &Prepared, y: &Prepared, method: CkaMethod) -> Result<CkaScore> {
    if x.degenerate || y.degenerate {
        return Err(Error::Degenerate(
            "all-constant activations have zero centered norm".into(),
        ));
    }
    let cross = match resolve(method, &x.centered, &y.centered) {
        CkaMethod::Gram => cross_gram(&x.centered, &y.centered),
        _ => cross_feature(&x.centered, &y.centered),
    };
    Ok(CkaScore((cross / (x.norm * y.norm)).max(0.0)))
}

fn check_rows(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(Error::Mismatch(format!(
            "CKA needs equal example counts, got {} and {}",
            x.rows(),
            y.rows()
        )));
    }
    Ok(())
}

pub fn linear_cka(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<CkaScore> {
    linear_cka_with(x, y, CkaMethod::Auto)
}

pub fn linear_cka_with(
    x: &ActivationMatrix,
    y: &ActivationMatrix,
    method: CkaMethod,
) -> Result<CkaScore> {
    check_rows(x, y)?;
    cka_prepared(&Prepared::new(x), &Prepared::new(y), method)
}

/// Turns an `examples × C × H × W` (or any `examples × ...`) block into a
/// 2-D matrix. `Flatten` keeps C-order features; `SpatialMean` averages every
/// channel over the trailing dimensions.
pub fn flatten_layer(block: &RawBlock, mode: FlattenMode) -> Result<ActivationMatrix> {
    if block.shape.len() < 2 {
        return Err(Error::Shape(format!(
            "activation block needs at least 2 dimensions, got {:?}",
            block.shape
        )));
    }
    if block.shape.contains(&0) {
        return Err(Error::Shape(format!("zero-sized dimension in {:?}", block.shape)));
    }
    let examples = block.shape[0];
    let features: usize = block.shape[1..].iter().product();
    if block.shape.len() == 2 || mode == FlattenMode::Flatten {
        return ActivationMatrix::new(examples, features, block.values.clone());
    }
    let channels = block.shape[1];
    let spatial = features / channels;
    let values = block
        .values
        .chunks_exact(spatial)
        .map(|c| c.iter().sum::<f64>() / spatial as f64)
        .collect();
    ActivationMatrix::new(examples, channels, values)
}

#[derive(Debug, Clone)]
pub struct LayerSimilarity {
    pub matrix: SimilarityMatrix,
    /// Layer pairs scored 0 because one side had constant activations.
    pub degenerate_pairs: usize,
}

/// Scores every layer of `a` against every layer of `b`. Entries are computed
/// in parallel on the current rayon pool; each is independent and sequential
/// internally, so results do not depend on the thread count.
pub fn layer_similarity_matrix(a: &ActivationSet, b: &ActivationSet) -> Result<LayerSimilarity> {
    if a.num_examples() != b.num_examples() {
        return Err(Error::Mismatch(format!(
            "{} has {} examples but {} has {}",
            a.name(),
            a.num_examples(),
            b.name(),
            b.num_examples()
        )));
    }
    let prep_a: Vec<Prepared> = a.matrices.par_iter().map(Prepared::new).collect();
    let prep_b: Vec<Prepared> = b.matrices.par_iter().map(Prepared::new).collect();
    let (n, m) = (prep_a.len(), prep_b.len());
    let scores: Vec<Option<f64>> = (0..n * m)
        .into_par_iter()
        .map(|k| {
            cka_prepared(&prep_a[k / m], &prep_b[k % m], CkaMethod::Auto)
                .ok()
                .map(CkaScore::value)
        })
        .collect();
    let degenerate_pairs = scores.iter().filter(|s| s.is_none()).count();
    if degenerate_pairs > 0 {
        warn!(
            "{} vs {}: {} degenerate layer pairs scored as 0",
            a.name(),
            b.name(),
            degenerate_pairs
        );
    }
    let matrix = SimilarityMatrix::new(
        a.name(),
        b.name(),
        n,
        m,
        scores.into_iter().map(|s| s.unwrap_or(0.0)).collect(),
    )?;
    Ok(LayerSimilarity {
        matrix,
        degenerate_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> ActivationMatrix {
        ActivationMatrix::new(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn centering_examples() {
        assert_eq!(center_columns(&col(&[1.0, -1.0])).values(), &[1.0, -1.0]);
        assert_eq!(center_columns(&col(&[1.0, 2.0, 3.0])).values(), &[-1.0, 0.0, 1.0]);
        assert_eq!(center_columns(&col(&[0.1, 0.1, 0.1])).values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_input_is_degenerate() {
        let x = col(&[0.3, 0.3, 0.3, 0.3]);
        let y = col(&[1.0, 2.0, 3.0, 5.0]);
        assert!(matches!(linear_cka(&x, &y), Err(Error::Degenerate(_))));
        assert!(matches!(linear_cka(&y, &x), Err(Error::Degenerate(_))));
    }

    #[test]
    fn row_mismatch_is_an_error() {
        let x = col(&[1.0, 2.0, 3.0]);
        let y = col(&[1.0, 2.0]);
        assert!(matches!(linear_cka(&x, &y), Err(Error::Mismatch(_))));
    }

    #[test]
    fn one_dimensional_cka_is_squared_correlation() {
        // For single columns, CKA reduces to the squared Pearson correlation.
        let x = col(&[1.0, 2.0, 3.0]);
        let y = col(&[1.0, 2.0, 4.0]);
        // centered: (-1,0,1), (-4/3,-1/3,5/3); r² = (3)² / (2 · 42/9) = 27/28
        let v = linear_cka(&x, &y).unwrap().value();
        assert!((v - 27.0 / 28.0).abs() < 1e-15, "{v}");
    }

    #[test]
    fn both_routes_agree() {
        let x = ActivationMatrix::from_rows(&[
            vec![1.0, 0.5, -2.0],
            vec![0.0, 1.5, 1.0],
            vec![2.0, -1.0, 0.5],
            vec![-1.0, 0.0, 3.0],
        ])
        .unwrap();
        let y = ActivationMatrix::from_rows(&[vec![0.2], vec![1.1], vec![-0.7], vec![0.4]]).unwrap();
        let f = linear_cka_with(&x, &y, CkaMethod::Feature).unwrap().value();
        let g = linear_cka_with(&x, &y, CkaMethod::Gram).unwrap().value();
        assert!((f - g).abs() < 1e-12);
    }

    #[test]
    fn flatten_modes() {
        let (a, b, c, d) = (1.0, 2.0, 3.0, 5.0);
        let block = RawBlock::new(vec![2, 1, 2, 2], vec![a, b, c, d, 10.0, 20.0, 30.0, 40.0]).unwrap();
        let flat = flatten_layer(&block, FlattenMode::Flatten).unwrap();
        assert_eq!((flat.rows(), flat.cols()), (2, 4));
        assert_eq!(flat.row(0), &[a, b, c, d]);
        let pooled = flatten_layer(&block, FlattenMode::SpatialMean).unwrap();
        assert_eq!(pooled.row(0), &[(a + b + c + d) / 4.0]);
        assert_eq!(pooled.row(1), &[25.0]);

        let two_d = RawBlock::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        for mode in [FlattenMode::Flatten, FlattenMode::SpatialMean] {
            assert_eq!(flatten_layer(&two_d, mode).unwrap().values(), two_d.values.as_slice());
        }
    }

    #[test]
    fn flatten_rejects_zero_dimension() {
        let block = RawBlock::new(vec![2, 0, 3], vec![]).unwrap();
        assert!(matches!(flatten_layer(&block, FlattenMode::Flatten), Err(Error::Shape(_))));
    }

    #[test]
    fn channel_order_is_preserved_when_pooling() {
        // 2 examples, 2 channels, 1x2 spatial
        let block = RawBlock::new(vec![2, 2, 1, 2], vec![1., 3., 10., 30., 2., 4., 20., 40.]).unwrap();
        let pooled = flatten_layer(&block, FlattenMode::SpatialMean).unwrap();
        assert_eq!(pooled.values(), &[2.0, 20.0, 3.0, 30.0]);
    }
}
