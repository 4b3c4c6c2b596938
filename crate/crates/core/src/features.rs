//! Attack-table subsets and the regression feature matrix built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::data::{AttackRecord, AttackTable, BoxClass, StepClass};
use crate::error::{Error, Result};
use crate::scores::{PairScores, ScoreKind};
use crate::tree::Dataset;

/// Networks with fewer layers than this are `small`; the rest are `large`.
pub const LARGE_NETWORK_LAYERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerClass {
    Small,
    Large,
}

impl LayerClass {
    pub fn of(num_layers: usize) -> Self {
        if num_layers < LARGE_NETWORK_LAYERS {
            LayerClass::Small
        } else {
            LayerClass::Large
        }
    }
}

impl FromStr for LayerClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(LayerClass::Small),
            "large" => Ok(LayerClass::Large),
            other => Err(Error::InvalidArgument(format!("layer class must be small|large, got {other:?}"))),
        }
    }
}

impl fmt::Display for LayerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerClass::Small => "small",
            LayerClass::Large => "large",
        })
    }
}

/// Conjunction of optional record filters. The default keeps everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubsetCriteria {
    pub targeted: Option<bool>,
    pub box_class: Option<BoxClass>,
    pub step_class: Option<StepClass>,
    pub attack_names: Option<Vec<String>>,
    /// Applied to the target network's layer count.
    pub layer_class: Option<LayerClass>,
    /// Keep attacks whose transferred success-rate std is strictly below this.
    pub low_std: Option<f64>,
}

type AttackKey<'a> = (&'a str, bool);

fn attack_key(r: &AttackRecord) -> AttackKey<'_> {
    (&r.attack_name, r.targeted)
}

/// Population std of transferred success rates per `(attack, targeted)`.
pub fn attack_std(table: &AttackTable) -> BTreeMap<(String, bool), f64> {
    let mut groups: BTreeMap<AttackKey, Vec<f64>> = BTreeMap::new();
    for r in table.records().iter().filter(|r| r.is_transferred()) {
        groups.entry(attack_key(r)).or_default().push(r.success_rate);
    }
    groups
        .into_iter()
        .map(|((name, targeted), v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            ((name.to_string(), targeted), var.sqrt())
        })
        .collect()
}

pub fn subset_filter(
    table: &AttackTable,
    criteria: &SubsetCriteria,
    layer_counts: &BTreeMap<String, usize>,
) -> Result<AttackTable> {
    if let Some(names) = &criteria.attack_names {
        let known: BTreeSet<&str> = table.records().iter().map(|r| r.attack_name.as_str()).collect();
        if let Some(unknown) = names.iter().find(|n| !known.contains(n.as_str())) {
            return Err(Error::InvalidArgument(format!("unknown attack name {unknown:?}")));
        }
    }
    if criteria.layer_class.is_some() {
        if let Some(r) = table
            .records()
            .iter()
            .find(|r| !layer_counts.contains_key(&r.target_network))
        {
            return Err(Error::Data(format!(
                "no layer count for network {}",
                r.target_network
            )));
        }
    }
    let low_std_keys: Option<BTreeSet<(String, bool)>> = criteria.low_std.map(|limit| {
        attack_std(table)
            .into_iter()
            .filter(|(_, std)| *std < limit)
            .map(|(k, _)| k)
            .collect()
    });

    Ok(table.filtered(|r| {
        criteria.targeted.is_none_or(|t| r.targeted == t)
            && criteria.box_class.is_none_or(|b| r.box_class == b)
            && criteria.step_class.is_none_or(|s| r.step_class == s)
            && criteria
                .attack_names
                .as_ref()
                .is_none_or(|names| names.contains(&r.attack_name))
            && criteria
                .layer_class
                .is_none_or(|c| LayerClass::of(layer_counts[&r.target_network]) == c)
            && low_std_keys
                .as_ref()
                .is_none_or(|keys| keys.contains(&(r.attack_name.clone(), r.targeted)))
    }))
}

pub const FEATURE_NAMES: [&str; 3] = ["similarity", "source_layers", "target_layers"];

/// One row per transferred record passing `criteria`:
/// `(similarity, source layer count, target layer count)` → success rate.
pub fn assemble_features(
    scores: &PairScores,
    table: &AttackTable,
    criteria: &SubsetCriteria,
    kind: ScoreKind,
) -> Result<Dataset> {
    let counts = scores.layer_counts()?;
    let subset = subset_filter(table, criteria, &counts)?;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for r in subset.records().iter().filter(|r| r.is_transferred()) {
        let pair = scores.get(&r.source_network, &r.target_network).ok_or_else(|| {
            Error::Data(format!(
                "no pair score for ({}, {})",
                r.source_network, r.target_network
            ))
        })?;
        let similarity = pair.score(kind)?;
        rows.push(vec![
            similarity,
            counts[&r.source_network] as f64,
            counts[&r.target_network] as f64,
        ]);
        y.push(r.success_rate);
    }
    Dataset::new(rows, y, FEATURE_NAMES.iter().map(|s| s.to_string()).collect())
}
