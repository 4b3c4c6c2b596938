//! Reference implementations and synthetic fixtures shared by the integration
//! tests. The oracles use the textbook definitions directly and do not share
//! code with the library.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use netsim::data::{
    write_attack_csv, ActivationMatrix, ActivationSet, AttackRecord, AttackTable, BoxClass,
    NetworkManifest, Precision, SimilarityMatrix, StepClass,
};
use netsim::scores::PairScores;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_values(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ActivationMatrix {
    ActivationMatrix::new(rows, cols, gaussian_values(rng, rows * cols)).unwrap()
}

/// Random orthogonal `p × p` matrix (row-major) from Gram–Schmidt on a
/// Gaussian draw.
pub fn random_orthogonal(rng: &mut impl Rng, p: usize) -> Vec<f64> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(p);
    while q.len() < p {
        let mut v = gaussian_values(rng, p);
        for _ in 0..2 {
            for u in &q {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    q.concat()
}

/// `x · q · scale` for a `cols × cols` row-major `q`.
pub fn rotate_and_scale(x: &ActivationMatrix, q: &[f64], scale: f64) -> ActivationMatrix {
    let (n, p) = (x.rows(), x.cols());
    let mut out = vec![0.0; n * p];
    for r in 0..n {
        for c in 0..p {
            out[r * p + c] = scale * (0..p).map(|k| x.get(r, k) * q[k * p + c]).sum::<f64>();
        }
    }
    ActivationMatrix::new(n, p, out).unwrap()
}

// ---------------------------------------------------------------- CKA oracle

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

fn linear_gram(x: &ActivationMatrix) -> Vec<f64> {
    let n = x.rows();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = x.row(i).iter().zip(x.row(j)).map(|(a, b)| a * b).sum();
        }
    }
    k
}

/// `tr(K H L H)` with the explicit centering matrix `H = I - 11ᵀ/n`.
fn hsic(k: &[f64], l: &[f64], n: usize) -> f64 {
    let h: Vec<f64> = (0..n * n)
        .map(|idx| f64::from(u8::from(idx / n == idx % n)) - 1.0 / n as f64)
        .collect();
    let khlh = matmul(&matmul(&matmul(k, &h, n), l, n), &h, n);
    (0..n).map(|i| khlh[i * n + i]).sum()
}

/// Normalized HSIC on uncentered linear Gram matrices.
pub fn cka_oracle(x: &ActivationMatrix, y: &ActivationMatrix) -> f64 {
    let n = x.rows();
    let (k, l) = (linear_gram(x), linear_gram(y));
    hsic(&k, &l, n) / (hsic(&k, &k, n) * hsic(&l, &l, n)).sqrt()
}

// ---------------------------------------------------------------- DBS oracle

/// Diagonal cells by rounding the ideal line, halves rounded down.
pub fn trace_oracle(n: usize, m: usize) -> Vec<(usize, usize)> {
    let (dr, dc) = (n - 1, m - 1);
    let (major, minor) = (dr.max(dc), dr.min(dc));
    (0..=major)
        .map(|t| {
            let other = if major == 0 { 0 } else { (2 * t * minor + major - 1) / (2 * major) };
            if dr >= dc { (t, other) } else { (other, t) }
        })
        .collect()
}

/// Every cell within Chebyshev distance `r` of a trace cell.
pub fn cover_oracle(n: usize, m: usize, r: usize) -> BTreeSet<(usize, usize)> {
    let mut cells = BTreeSet::new();
    for (ti, tj) in trace_oracle(n, m) {
        for i in 0..n {
            for j in 0..m {
                if i.abs_diff(ti) <= r && j.abs_diff(tj) <= r {
                    cells.insert((i, j));
                }
            }
        }
    }
    cells
}

/// Mean `|S|` over the oracle cover, magnitudes added smallest first.
pub fn dbs_oracle(s: &SimilarityMatrix, r: usize) -> f64 {
    let mut mags: Vec<f64> = cover_oracle(s.n(), s.m(), r)
        .into_iter()
        .map(|(i, j)| s.get(i, j).abs())
        .collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if mags.iter().all(|v| *v == mags[0]) {
        return mags[0];
    }
    mags.iter().sum::<f64>() / mags.len() as f64
}

pub fn random_similarity(rng: &mut impl Rng, n: usize, m: usize) -> SimilarityMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    SimilarityMatrix::from_rows(&rows).unwrap()
}

// --------------------------------------------------------- correlation oracles

pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let (mx, my) = (sx / n, sy / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}

/// Rank by counting: `#{less} + (#{equal} + 1) / 2`.
pub fn rank_oracle(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    pearson_oracle(&rank_oracle(x), &rank_oracle(y))
}

/// tau-b through `n0`, `n1`, `n2` tie-group counts.
pub fn kendall_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in 0..n {
            if i < j {
                let sx = (x[i] - x[j]).signum() * f64::from(u8::from(x[i] != x[j]));
                let sy = (y[i] - y[j]).signum() * f64::from(u8::from(y[i] != y[j]));
                s += (sx * sy) as i64;
            }
        }
    }
    let tie_pairs = |v: &[f64]| -> i64 {
        let distinct: BTreeSet<u64> = v.iter().map(|a| a.to_bits()).collect();
        distinct
            .iter()
            .map(|bits| {
                let t = v.iter().filter(|a| a.to_bits() == *bits).count() as i64;
                t * (t - 1) / 2
            })
            .sum()
    };
    let n0 = (n * (n - 1) / 2) as i64;
    let (n1, n2) = (tie_pairs(x), tie_pairs(y));
    s as f64 / (((n0 - n1) * (n0 - n2)) as f64).sqrt()
}

/// Distance correlation from the V-statistic identity
/// `dCov² = S1 + S2 - 2·S3` on raw pairwise distances.
pub fn dcor_oracle(x: &[f64], y: &[f64]) -> f64 {
    let dcov2 = |u: &[f64], v: &[f64]| -> f64 {
        let n = u.len() as f64;
        let a = |i: usize, j: usize| (u[i] - u[j]).abs();
        let b = |i: usize, j: usize| (v[i] - v[j]).abs();
        let idx = 0..u.len();
        let (mut s1, mut sa, mut sb, mut s3) = (0.0, 0.0, 0.0, 0.0);
        for i in idx.clone() {
            let (mut ra, mut rb) = (0.0, 0.0);
            for j in idx.clone() {
                s1 += a(i, j) * b(i, j);
                sa += a(i, j);
                sb += b(i, j);
                ra += a(i, j);
                rb += b(i, j);
            }
            s3 += ra * rb;
        }
        s1 / (n * n) + (sa / (n * n)) * (sb / (n * n)) - 2.0 * s3 / (n * n * n)
    };
    let xy = dcov2(x, y).max(0.0);
    let denom = (dcov2(x, x) * dcov2(y, y)).sqrt();
    if denom <= 0.0 { 0.0 } else { (xy / denom).sqrt() }
}

// ---------------------------------------------------------------- CART oracle

#[derive(Debug, Clone, PartialEq)]
pub enum OracleTree {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<OracleTree>,
        right: Box<OracleTree>,
    },
}

fn sse(ys: &[f64]) -> f64 {
    let m = ys.iter().sum::<f64>() / ys.len() as f64;
    ys.iter().map(|y| (y - m).powi(2)).sum()
}

/// Greedy regression tree where every candidate split is scored by directly
/// recomputing both children's squared error.
pub fn cart_oracle(rows: &[Vec<f64>], y: &[f64]) -> OracleTree {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let node_sse = sse(y);
    if y.len() < 2 || y.iter().all(|v| *v == y[0]) {
        return OracleTree::Leaf(mean);
    }
    let tol = 1e-12 * node_sse;
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..rows[0].len() {
        let distinct: BTreeSet<u64> = rows.iter().map(|r| r[f].to_bits()).collect();
        let mut vals: Vec<f64> = distinct.into_iter().map(f64::from_bits).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in vals.windows(2) {
            let t = if w[0] + (w[1] - w[0]) / 2.0 >= w[1] { w[0] } else { w[0] + (w[1] - w[0]) / 2.0 };
            let left: Vec<f64> = rows.iter().zip(y).filter(|(r, _)| r[f] <= t).map(|(_, v)| *v).collect();
            let right: Vec<f64> = rows.iter().zip(y).filter(|(r, _)| r[f] > t).map(|(_, v)| *v).collect();
            let cost = sse(&left) + sse(&right);
            if best.is_none_or(|(_, _, c)| cost < c - tol) {
                best = Some((f, t, cost));
            }
        }
    }
    match best {
        Some((f, t, cost)) if cost < node_sse - tol => {
            let (l, r): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| rows[i][f] <= t);
            let pick = |ix: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
                (ix.iter().map(|&i| rows[i].clone()).collect(), ix.iter().map(|&i| y[i]).collect())
            };
            let ((lr, ly), (rr, ry)) = (pick(&l), pick(&r));
            OracleTree::Split {
                feature: f,
                threshold: t,
                left: Box::new(cart_oracle(&lr, &ly)),
                right: Box::new(cart_oracle(&rr, &ry)),
            }
        }
        _ => OracleTree::Leaf(mean),
    }
}

/// Structural comparison: identical splits, leaf means within `tol`.
pub fn tree_matches(model: &netsim::tree::TreeModel, id: usize, oracle: &OracleTree, tol: f64) -> bool {
    use netsim::tree::Node;
    match (&model.nodes[id], oracle) {
        (Node::Leaf { value, .. }, OracleTree::Leaf(v)) => (value - v).abs() <= tol,
        (
            Node::Split { feature, threshold, left, right },
            OracleTree::Split { feature: f, threshold: t, left: ol, right: or },
        ) => {
            feature == f
                && threshold == t
                && tree_matches(model, *left, ol, tol)
                && tree_matches(model, *right, or, tol)
        }
        _ => false,
    }
}

/// Small random dataset; values drawn from a coarse grid so ties occur.
pub fn random_small_dataset(rng: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = rng.random_range(1..=8);
    let width = rng.random_range(1..=2);
    let rows = (0..n)
        .map(|_| (0..width).map(|_| f64::from(rng.random_range(0..5u8)) * 0.25).collect())
        .collect();
    let y = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    (rows, y)
}

// ------------------------------------------------------------ pipeline fixture

pub const FIXTURE_EXAMPLES: usize = 64;
pub const FIXTURE_NETWORKS: usize = 8;
const LATENT_DIM: usize = 6;

pub fn fixture_network_name(i: usize) -> String {
    format!("net{i}")
}

/// Eight networks sharing a latent signal. Each layer is a random linear
/// read-out of the latent code plus network-specific noise, so pair
/// similarities spread across a range.
pub fn write_fixture_networks(data_dir: &Path, seed: u64) {
    let mut rng = rng(seed);
    let latent = gaussian_values(&mut rng, FIXTURE_EXAMPLES * LATENT_DIM);
    let types = ["conv", "relu", "pool", "linear"];
    for net in 0..FIXTURE_NETWORKS {
        let num_layers = 4 + net % 4 + net / 2;
        let noise = 0.2 + 1.6 * net as f64 / (FIXTURE_NETWORKS - 1) as f64;
        let names: Vec<String> = (0..num_layers).map(|l| format!("layer{l}")).collect();
        let layers: Vec<(&str, &str)> = names
            .iter()
            .enumerate()
            .map(|(l, n)| (n.as_str(), types[(l + net) % types.len()]))
            .collect();
        let manifest = NetworkManifest::new(fixture_network_name(net), FIXTURE_EXAMPLES, &layers);
        let matrices = (0..num_layers)
            .map(|_| {
                let width = rng.random_range(3..=12);
                let w = gaussian_values(&mut rng, LATENT_DIM * width);
                let mut values = Vec::with_capacity(FIXTURE_EXAMPLES * width);
                for e in 0..FIXTURE_EXAMPLES {
                    for c in 0..width {
                        let signal: f64 = (0..LATENT_DIM)
                            .map(|k| latent[e * LATENT_DIM + k] * w[k * width + c])
                            .sum();
                        let eps: f64 = StandardNormal.sample(&mut rng);
                        values.push(signal + noise * eps);
                    }
                }
                ActivationMatrix::new(FIXTURE_EXAMPLES, width, values).unwrap()
            })
            .collect();
        let set = ActivationSet::new(manifest, matrices).unwrap();
        set.save(&data_dir.join(fixture_network_name(net)), Precision::F64).unwrap();
    }
}

pub const FIXTURE_ATTACKS: [(&str, BoxClass, StepClass); 4] = [
    ("Square", BoxClass::Black, StepClass::Multi),
    ("HopSkipJump", BoxClass::Black, StepClass::Multi),
    ("FGSM", BoxClass::White, StepClass::Single),
    ("PGD", BoxClass::White, StepClass::Multi),
];

/// Transferred success is a step function of pair CKA (split at the median)
/// plus Gaussian noise with σ = 0.002; self-attacks succeed fully.
pub fn write_planted_attacks(scores: &PairScores, path: &Path, seed: u64) -> AttackTable {
    let mut rng = rng(seed);
    let noise = Normal::new(0.0, 0.002).unwrap();
    let mut cka: Vec<f64> = scores.iter().map(|p| p.cka_mean).collect();
    cka.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cut = cka[cka.len() / 2];
    let mut records = Vec::new();
    for (attack, box_class, step_class) in FIXTURE_ATTACKS {
        for s in 0..FIXTURE_NETWORKS {
            for t in 0..FIXTURE_NETWORKS {
                let (src, tgt) = (fixture_network_name(s), fixture_network_name(t));
                let rate = if s == t {
                    1.0
                } else {
                    let sim = scores.get(&src, &tgt).unwrap().cka_mean;
                    let base: f64 = if sim >= cut { 0.8 } else { 0.2 };
                    (base + noise.sample(&mut rng)).clamp(0.0, 1.0)
                };
                records.push(AttackRecord {
                    attack_name: attack.into(),
                    targeted: false,
                    box_class,
                    step_class,
                    source_network: src,
                    target_network: tgt,
                    success_rate: rate,
                });
            }
        }
    }
    let table = AttackTable::new(records).unwrap();
    let mut buf = Vec::new();
    write_attack_csv(&table, &mut buf).unwrap();
    fs::write(path, buf).unwrap();
    table
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Networks plus `attacks.csv` under `root/data`. Pair scores are computed
/// once in `root/seed_out` to plant the attack table.
pub fn build_standard_fixture(root: &Path) -> std::path::PathBuf {
    use netsim::pipeline::commands::{cmd_sim, load_pair_scores};
    use netsim::pipeline::config::RunConfig;
    let data = root.join("data");
    write_fixture_networks(&data, 7);
    let cfg = RunConfig::new(&data, root.join("seed_out"));
    cmd_sim(&cfg).unwrap();
    let scores = load_pair_scores(&cfg).unwrap();
    write_planted_attacks(&scores, &data.join("attacks.csv"), 11);
    data
}
