//! Command-line flags, the optional `key = value` config file, and the merged
//! [`RunConfig`]. Flags take precedence over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::cka::FlattenMode;
use crate::data::attack::parse_bool;
use crate::dbs::DEFAULT_RADII;
use crate::error::{Error, Result};
use crate::features::{LayerClass, SubsetCriteria};
use crate::scores::ScoreKind;
use crate::tree::DEFAULT_THRESHOLD;

pub const DEFAULT_VMIN: f64 = 0.32;
pub const DEFAULT_VMAX: f64 = 0.75;
pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Parser)]
#[command(name = "netsim", version, about = "Network similarity and attack transferability analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Layer-pair CKA matrices and pair scores for every network pair
    Sim,
    /// Summary statistics, position curve/grid, type matrix, size deltas
    Aggregate,
    /// Per-source correlation scan between similarity and attack success
    Correlate,
    /// Decision-tree regression of attack success from similarity
    Tree,
    /// SVG heatmaps
    Report,
}

#[derive(Debug, Default, Clone, Args)]
pub struct Flags {
    /// Optional file of `key = value` lines using the long flag names
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding one activation subdirectory per network
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Attack CSV (default: <data-dir>/attacks.csv)
    #[arg(long, global = true)]
    pub attacks: Option<PathBuf>,
    /// Comma-separated DBS box radii
    #[arg(long, global = true)]
    pub radii: Option<String>,
    /// `cka` or `dbs:<r>`
    #[arg(long, global = true)]
    pub score_kind: Option<String>,
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub vmin: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub vmax: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub targeted: Option<String>,
    #[arg(long = "box", global = true)]
    pub box_class: Option<String>,
    #[arg(long, global = true)]
    pub steps: Option<String>,
    #[arg(long, global = true)]
    pub low_std: Option<f64>,
    #[arg(long, global = true)]
    pub layer_class: Option<String>,
    /// Comma-separated attack names to keep
    #[arg(long, global = true)]
    pub attack_names: Option<String>,
    /// Cap the regression tree depth (0 = mean model)
    #[arg(long, global = true)]
    pub max_depth: Option<usize>,
    /// Accuracy threshold on |prediction - truth|
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Average 4-D activation blocks over spatial positions instead of flattening
    #[arg(long, global = true)]
    pub spatial_mean: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub attacks: PathBuf,
    pub radii: Vec<usize>,
    pub score_kind: ScoreKind,
    /// `None` runs the standard subset list in `tree`.
    pub subset: Option<SubsetCriteria>,
    pub bins: usize,
    pub vmin: f64,
    pub vmax: f64,
    pub threads: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub threshold: f64,
    pub max_depth: Option<usize>,
    pub flatten: FlattenMode,
}

impl RunConfig {
    pub fn new(data_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        let data_dir = data_dir.into();
        RunConfig {
            attacks: data_dir.join("attacks.csv"),
            data_dir,
            out_dir: out_dir.into(),
            radii: DEFAULT_RADII.to_vec(),
            score_kind: ScoreKind::Cka,
            subset: None,
            bins: DEFAULT_BINS,
            vmin: DEFAULT_VMIN,
            vmax: DEFAULT_VMAX,
            threads: 1,
            seed: DEFAULT_SEED,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            threshold: DEFAULT_THRESHOLD,
            max_depth: None,
            flatten: FlattenMode::Flatten,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::InvalidArgument("radii list is empty".into()));
        }
        if !(self.vmin < self.vmax) {
            return Err(Error::InvalidArgument(format!(
                "vmin ({}) must be below vmax ({})",
                self.vmin, self.vmax
            )));
        }
        if self.threads == 0 {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        if self.bins == 0 {
            return Err(Error::InvalidArgument("bins must be at least 1".into()));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::InvalidArgument("threshold must be non-negative".into()));
        }
        Ok(())
    }

    /// Merges flags over the optional config file over defaults.
    pub fn from_flags(flags: &Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => parse_config_file(path)?,
            None => BTreeMap::new(),
        };
        let text = |flag: &Option<String>, key: &str| flag.clone().or_else(|| file.get(key).cloned());
        fn typed<T: FromStr + Clone>(
            flag: &Option<T>,
            file: &BTreeMap<String, String>,
            key: &str,
        ) -> Result<Option<T>> {
            if let Some(v) = flag {
                return Ok(Some(v.clone()));
            }
            file.get(key)
                .map(|s| {
                    s.parse::<T>()
                        .map_err(|_| Error::InvalidArgument(format!("config key {key}: bad value {s:?}")))
                })
                .transpose()
        }
        let path = |flag: &Option<PathBuf>, key: &str| {
            flag.clone().or_else(|| file.get(key).map(PathBuf::from))
        };

        let data_dir = path(&flags.data_dir, "data-dir")
            .ok_or_else(|| Error::InvalidArgument("--data-dir is required".into()))?;
        let out_dir = path(&flags.out_dir, "out-dir")
            .ok_or_else(|| Error::InvalidArgument("--out-dir is required".into()))?;
        let mut cfg = RunConfig::new(data_dir, out_dir);
        if let Some(a) = path(&flags.attacks, "attacks") {
            cfg.attacks = a;
        }
        if let Some(r) = text(&flags.radii, "radii") {
            cfg.radii = parse_radii(&r)?;
        }
        if let Some(k) = text(&flags.score_kind, "score-kind") {
            cfg.score_kind = k.parse()?;
        }
        if let Some(b) = typed(&flags.bins, &file, "bins")? {
            cfg.bins = b;
        }
        if let Some(v) = typed(&flags.vmin, &file, "vmin")? {
            cfg.vmin = v;
        }
        if let Some(v) = typed(&flags.vmax, &file, "vmax")? {
            cfg.vmax = v;
        }
        if let Some(s) = typed(&flags.seed, &file, "seed")? {
            cfg.seed = s;
        }
        if let Some(t) = typed(&flags.threads, &file, "threads")? {
            cfg.threads = t;
        }
        if let Some(t) = typed(&flags.threshold, &file, "threshold")? {
            cfg.threshold = t;
        }
        cfg.max_depth = typed(&flags.max_depth, &file, "max-depth")?;
        let spatial = flags.spatial_mean
            || file
                .get("spatial-mean")
                .map(|v| parse_bool(v))
                .transpose()?
                .unwrap_or(false);
        if spatial {
            cfg.flatten = FlattenMode::SpatialMean;
        }

        let mut subset = SubsetCriteria::default();
        let mut any = false;
        if let Some(t) = text(&flags.targeted, "targeted") {
            subset.targeted = Some(parse_bool(&t)?);
            any = true;
        }
        if let Some(b) = text(&flags.box_class, "box") {
            subset.box_class = Some(b.parse()?);
            any = true;
        }
        if let Some(s) = text(&flags.steps, "steps") {
            subset.step_class = Some(s.parse()?);
            any = true;
        }
        if let Some(l) = typed(&flags.low_std, &file, "low-std")? {
            subset.low_std = Some(l);
            any = true;
        }
        if let Some(c) = text(&flags.layer_class, "layer-class") {
            subset.layer_class = Some(c.parse::<LayerClass>()?);
            any = true;
        }
        if let Some(names) = text(&flags.attack_names, "attack-names") {
            subset.attack_names = Some(
                names
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect(),
            );
            any = true;
        }
        cfg.subset = any.then_some(subset);
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_radii(text: &str) -> Result<Vec<usize>> {
    let mut radii = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad radius {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    radii.sort_unstable();
    radii.dedup();
    Ok(radii)
}

/// Reads `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected key = value", n + 1)))?;
        let value = value.trim().trim_matches('"');
        out.insert(key.trim().replace('_', "-"), value.to_string());
    }
    Ok(out)
}
