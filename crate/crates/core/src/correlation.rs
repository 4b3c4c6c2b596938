//! Correlation coefficients and the per-source-network scan relating pair
//! similarity to transferred attack success.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::{fmt_real, AttackTable};
use crate::error::{Error, Result};
use crate::scores::{PairScores, ScoreKind};

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Mismatch(format!(
            "correlation inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 samples, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite correlation input".into()));
    }
    for (name, v) in [("x", x), ("y", y)] {
        if v.iter().all(|&e| e == v[0]) {
            return Err(Error::UndefinedCorrelation(format!("{name} is constant")));
        }
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Kendall's tau-b: `(C - D) / sqrt((C + D + Tx)(C + D + Ty))`, where `Tx`
/// and `Ty` count pairs tied in only one of the two variables.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i].partial_cmp(&x[j]).expect("finite");
            let dy = y[i].partial_cmp(&y[j]).expect("finite");
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {}
                (Equal, _) => tie_x += 1,
                (_, Equal) => tie_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let cd = (concordant + discordant) as f64;
    let denom = ((cd + tie_x as f64) * (cd + tie_y as f64)).sqrt();
    Ok(((concordant as f64 - discordant as f64) / denom).clamp(-1.0, 1.0))
}

fn centered_distances(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut d: Vec<f64> = (0..n * n).map(|k| (v[k / n] - v[k % n]).abs()).collect();
    let row_means: Vec<f64> = d.chunks(n).map(mean).collect();
    let grand = mean(&row_means);
    // distance matrices are symmetric, so column means equal row means
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }
    d
}

/// Distance correlation from doubly centered pairwise distance matrices
/// (biased V-statistic form). Lies in `[0, 1]`.
pub fn distance_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let a = centered_distances(x);
    let b = centered_distances(y);
    let dcov2_xy = mean(&a.iter().zip(&b).map(|(p, q)| p * q).collect::<Vec<_>>()).max(0.0);
    let dvar2_x = mean(&a.iter().map(|p| p * p).collect::<Vec<_>>());
    let dvar2_y = mean(&b.iter().map(|q| q * q).collect::<Vec<_>>());
    let denom = (dvar2_x * dvar2_y).sqrt();
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((dcov2_xy / denom).sqrt().min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pearson,
    Spearman,
    Kendall,
    Dcor,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pearson, Method::Spearman, Method::Kendall, Method::Dcor];

    pub fn compute(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            Method::Pearson => pearson(x, y),
            Method::Spearman => spearman(x, y),
            Method::Kendall => kendall_tau_b(x, y),
            Method::Dcor => distance_correlation(x, y),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pearson => "pearson",
            Method::Spearman => "spearman",
            Method::Kendall => "kendall",
            Method::Dcor => "dcor",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown correlation method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub source_network: String,
    pub attack_name: String,
    pub targeted: bool,
    pub method: Method,
    pub score_kind: ScoreKind,
    pub coefficient: f64,
    pub abs_coefficient: f64,
    pub n: usize,
}

/// A scan cell that produced no coefficient, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanDiagnostic {
    pub source_network: String,
    pub attack_name: String,
    pub targeted: bool,
    pub method: Option<Method>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScanOutput {
    pub reports: Vec<CorrelationReport>,
    pub diagnostics: Vec<ScanDiagnostic>,
}

/// For every `(source, attack, targeted)` cell, correlates the similarity of
/// the source to each target with the success rate transferred onto that
/// target. Output is sorted by source, attack, targeted flag, then method.
pub fn correlation_scan(
    scores: &PairScores,
    table: &AttackTable,
    methods: &[Method],
    kind: ScoreKind,
) -> Result<ScanOutput> {
    type Cell<'t> = BTreeMap<&'t str, f64>;
    let mut cells: BTreeMap<(&str, &str, bool), Cell> = BTreeMap::new();
    for r in table.records().iter().filter(|r| r.is_transferred()) {
        scores.get(&r.source_network, &r.target_network).ok_or_else(|| {
            Error::Data(format!(
                "no pair score for ({}, {})",
                r.source_network, r.target_network
            ))
        })?;
        cells
            .entry((&r.source_network, &r.attack_name, r.targeted))
            .or_default()
            .insert(&r.target_network, r.success_rate);
    }

    let cells: Vec<_> = cells.into_iter().collect();
    let per_cell = cells
        .par_iter()
        .map(|((source, attack, targeted), targets)| -> Result<ScanOutput> {
            let mut out = ScanOutput::default();
            let diag = |method, reason: String| ScanDiagnostic {
                source_network: source.to_string(),
                attack_name: attack.to_string(),
                targeted: *targeted,
                method,
                reason,
            };
            if targets.len() < 2 {
                out.diagnostics
                    .push(diag(None, format!("only {} target network(s)", targets.len())));
                return Ok(out);
            }
            let mut x = Vec::with_capacity(targets.len());
            let mut y = Vec::with_capacity(targets.len());
            for (target, &rate) in targets {
                x.push(scores.score(source, target, kind)?);
                y.push(rate);
            }
            for &method in methods {
                match method.compute(&x, &y) {
                    Ok(c) => out.reports.push(CorrelationReport {
                        source_network: source.to_string(),
                        attack_name: attack.to_string(),
                        targeted: *targeted,
                        method,
                        score_kind: kind,
                        coefficient: c,
                        abs_coefficient: c.abs(),
                        n: x.len(),
                    }),
                    Err(e @ Error::UndefinedCorrelation(_)) => {
                        out.diagnostics.push(diag(Some(method), e.to_string()))
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut merged = ScanOutput::default();
    for cell in per_cell {
        merged.reports.extend(cell.reports);
        merged.diagnostics.extend(cell.diagnostics);
    }
    Ok(merged)
}

pub fn write_scan_csv(reports: &[CorrelationReport], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "source_network",
        "attack",
        "targeted",
        "method",
        "score_kind",
        "coefficient",
        "abs_coefficient",
        "n",
    ])?;
    for r in reports {
        w.write_record([
            r.source_network.as_str(),
            &r.attack_name,
            if r.targeted { "true" } else { "false" },
            &r.method.to_string(),
            &r.score_kind.to_string(),
            &fmt_real(r.coefficient),
            &fmt_real(r.abs_coefficient),
            &r.n.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<scan csv>", e))?;
    Ok(())
}

pub fn write_diagnostics_csv(diags: &[ScanDiagnostic], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["source_network", "attack", "targeted", "method", "reason"])?;
    for d in diags {
        w.write_record([
            d.source_network.as_str(),
            &d.attack_name,
            if d.targeted { "true" } else { "false" },
            &d.method.map(|m| m.to_string()).unwrap_or_default(),
            &d.reason,
        ])?;
    }
    w.flush().map_err(|e| Error::io("<diagnostics csv>", e))?;
    Ok(())
}
