//! CART regression tree, the seeded train/test split, and the evaluation
//! metrics (MSE, improvement over a mean model, threshold accuracy).

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Row-major feature matrix with regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    width: usize,
    y: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, y: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        let width = feature_names.len();
        if rows.len() != y.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} targets",
                rows.len(),
                y.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::Shape(format!(
                "feature row of width {} but {} feature names",
                r.len(),
                width
            )));
        }
        let x = rows.concat();
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in dataset".into()));
        }
        Ok(Dataset {
            x,
            width,
            y,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.width..(i + 1) * self.width]
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            width: self.width,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn target_mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }
}

/// SplitMix64 generator (Steele, Lea & Flood); fully specified so splits are
/// reproducible across languages.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// Fisher–Yates permutation of `0..n`: for `i` from `n-1` down to 1, swap `i`
/// with `next() mod (i + 1)`.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = SplitMix64::new(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        idx.swap(i, j);
    }
    idx
}

/// Splits into the first `⌊fraction·n⌋` shuffled rows (train) and the rest.
pub fn train_test_split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if data.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 rows to split, got {}",
            data.len()
        )));
    }
    let order = shuffled_indices(data.len(), seed);
    let n_train = (train_fraction * data.len() as f64).floor() as usize;
    if n_train == 0 || n_train == data.len() {
        return Err(Error::InvalidArgument(format!(
            "fraction {train_fraction} of {} rows leaves an empty side",
            data.len()
        )));
    }
    Ok((data.select(&order[..n_train]), data.select(&order[n_train..])))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Fitted tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
    pub width: usize,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitOptions {
    /// `Some(0)` forces a single leaf. `None` grows until pure.
    pub max_depth: Option<usize>,
}

fn mean_of(y: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
}

struct Grower<'d> {
    data: &'d Dataset,
    options: FitOptions,
    nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    sse: f64,
}

impl Grower<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let y = self.data.targets();
        let value = mean_of(y, &idx);
        self.nodes.push(Node::Leaf {
            value,
            samples: idx.len(),
        });

        let depth_ok = self.options.max_depth.is_none_or(|d| depth < d);
        let pure = idx.iter().all(|&i| y[i] == y[idx[0]]);
        if idx.len() < 2 || pure || !depth_ok {
            return id;
        }
        let node_sse: f64 = idx.iter().map(|&i| (y[i] - value).powi(2)).sum();
        let tol = 1e-12 * node_sse;
        let Some(best) = self.best_split(&idx, value, tol) else {
            return id;
        };
        if best.sse >= node_sse - tol {
            return id;
        }
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.data.row(i)[best.feature] <= best.threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    /// Lowest child SSE over midpoints of consecutive distinct values. Ties
    /// (within `tol`) keep the earliest feature, then the lowest threshold.
    fn best_split(&self, idx: &[usize], node_mean: f64, tol: f64) -> Option<Candidate> {
        let y = self.data.targets();
        let n = idx.len();
        let mut best: Option<Candidate> = None;
        let mut order = idx.to_vec();
        for feature in 0..self.data.width() {
            let value = |i: usize| self.data.row(i)[feature];
            order.sort_by(|&a, &b| value(a).total_cmp(&value(b)));

            let total_s1: f64 = order.iter().map(|&i| y[i] - node_mean).sum();
            let total_s2: f64 = order.iter().map(|&i| (y[i] - node_mean).powi(2)).sum();
            let (mut s1, mut s2) = (0.0, 0.0);
            for k in 0..n - 1 {
                let c = y[order[k]] - node_mean;
                s1 += c;
                s2 += c * c;
                let (lo, hi) = (value(order[k]), value(order[k + 1]));
                if lo == hi {
                    continue;
                }
                let (nl, nr) = ((k + 1) as f64, (n - k - 1) as f64);
                let (r1, r2) = (total_s1 - s1, total_s2 - s2);
                let sse = (s2 - s1 * s1 / nl).max(0.0) + (r2 - r1 * r1 / nr).max(0.0);
                if best.as_ref().is_none_or(|b| sse < b.sse - tol) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(Candidate {
                        feature,
                        threshold,
                        sse,
                    });
                }
            }
        }
        best
    }
}

/// Grows an unpruned CART regression tree: no depth limit, nodes with fewer
/// than two rows or zero SSE become leaves.
pub fn fit(train: &Dataset) -> Result<TreeModel> {
    fit_with(train, FitOptions::default())
}

pub fn fit_with(train: &Dataset, options: FitOptions) -> Result<TreeModel> {
    if train.is_empty() {
        return Err(Error::Empty("cannot fit a tree on an empty dataset"));
    }
    let mut grower = Grower {
        data: train,
        options,
        nodes: Vec::new(),
    };
    grower.grow((0..train.len()).collect(), 0);
    Ok(TreeModel {
        nodes: grower.nodes,
        width: train.width(),
        feature_names: train.feature_names.clone(),
    })
}

impl TreeModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|r| {
                if r.len() != self.width {
                    Err(Error::Shape(format!(
                        "row width {} does not match model width {}",
                        r.len(),
                        self.width
                    )))
                } else {
                    Ok(self.predict_row(r))
                }
            })
            .collect()
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.width() != self.width {
            return Err(Error::Shape(format!(
                "dataset width {} does not match model width {}",
                data.width(),
                self.width
            )));
        }
        Ok((0..data.len()).map(|i| self.predict_row(data.row(i))).collect())
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Indented text rendering, one `feature <= threshold` line per split.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        self.dump_node(0, 0, &mut out);
        out
    }

    fn dump_node(&self, id: usize, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        match &self.nodes[id] {
            Node::Leaf { value, samples } => {
                let _ = writeln!(out, "{pad}value = {value:.16e} (samples = {samples})");
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let name = self
                    .feature_names
                    .get(*feature)
                    .cloned()
                    .unwrap_or_else(|| format!("x{feature}"));
                let _ = writeln!(out, "{pad}{name} <= {threshold:.16e}");
                self.dump_node(*left, depth + 1, out);
                let _ = writeln!(out, "{pad}else");
                self.dump_node(*right, depth + 1, out);
            }
        }
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.01;

/// Absolute slack so that differences equal to the threshold up to rounding
/// (e.g. `0.51 - 0.50`) count as within it.
const THRESHOLD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub mse: f64,
    pub baseline_mse: f64,
    /// `None` when the baseline already has zero error.
    pub improvement_pct: Option<f64>,
    pub threshold_accuracy: f64,
    pub threshold: f64,
}

pub fn metrics_from_predictions(
    predictions: &[f64],
    truth: &[f64],
    threshold: f64,
    baseline_mean: f64,
) -> Result<EvalMetrics> {
    if truth.is_empty() {
        return Err(Error::Empty("evaluation needs at least one test row"));
    }
    if predictions.len() != truth.len() {
        return Err(Error::Shape("prediction and truth lengths differ".into()));
    }
    let n = truth.len() as f64;
    let mse = predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    let baseline_mse = truth.iter().map(|t| (baseline_mean - t).powi(2)).sum::<f64>() / n;
    let within = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| (*p - *t).abs() <= threshold + THRESHOLD_SLACK)
        .count();
    Ok(EvalMetrics {
        mse,
        baseline_mse,
        improvement_pct: (baseline_mse > 0.0).then(|| 100.0 * (baseline_mse - mse) / baseline_mse),
        threshold_accuracy: within as f64 / n,
        threshold,
    })
}

pub fn evaluate(
    model: &TreeModel,
    test: &Dataset,
    threshold: f64,
    baseline_mean: f64,
) -> Result<EvalMetrics> {
    let predictions = model.predict_dataset(test)?;
    metrics_from_predictions(&predictions, test.targets(), threshold, baseline_mean)
}
