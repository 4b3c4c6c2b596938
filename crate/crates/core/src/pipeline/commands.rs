use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use super::config::RunConfig;
use super::svg::Heatmap;
use crate::aggregate::{
    extremal_pairs, position_curve, position_grid, size_delta_series, summary_stats, type_matrix,
    PairMatrix, SummaryStats,
};
use crate::cka::{flatten_layer, layer_similarity_matrix, FlattenMode};
use crate::correlation::{correlation_scan, write_diagnostics_csv, write_scan_csv, Method, ScanOutput};
use crate::data::activation::{layer_file_name, MANIFEST_FILE};
use crate::data::{
    fmt_real, load_manifest, npy, read_attack_csv, ActivationSet, AttackTable, BoxClass,
    NetworkManifest, SimilarityMatrix,
};
use crate::error::{Error, Result};
use crate::features::{assemble_features, subset_filter, SubsetCriteria};
use crate::scores::{PairScore, PairScores, ScoreKind};
use crate::tree::{evaluate, fit_with, train_test_split, EvalMetrics, FitOptions};

pub const PAIR_SCORES_FILE: &str = "pair_scores.csv";
pub const MATRIX_DIR: &str = "matrices";

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn check_network_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains(['/', '\\']) || name.contains("__") || name.starts_with('.') {
        return Err(Error::Data(format!(
            "network name {name:?} cannot be used in file names (no '/', '\\', '__' or leading '.')"
        )));
    }
    Ok(())
}

pub fn matrix_file_name(net_a: &str, net_b: &str) -> String {
    format!("{net_a}__{net_b}")
}

/// Network directories under `data_dir`, keyed and sorted by network name.
pub fn discover_networks(data_dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = fs::read_dir(data_dir).map_err(|e| Error::io(data_dir, e))?;
    let mut found = BTreeMap::new();
    for entry in entries {
        let dir = entry.map_err(|e| Error::io(data_dir, e))?.path();
        if !dir.join(MANIFEST_FILE).is_file() {
            continue;
        }
        let manifest = load_manifest(&dir)?;
        check_network_name(&manifest.network_name)?;
        if let Some(prev) = found.insert(manifest.network_name.clone(), dir.clone()) {
            return Err(Error::Data(format!(
                "network {} appears in both {} and {}",
                manifest.network_name,
                prev.display(),
                dir.display()
            )));
        }
    }
    Ok(found)
}

/// Loads a network directory, turning any >2-D layer block into a matrix with `mode`.
pub fn load_network(dir: &Path, mode: FlattenMode) -> Result<ActivationSet> {
    let manifest = load_manifest(dir)?;
    let mut matrices = Vec::with_capacity(manifest.num_layers);
    for i in 0..manifest.num_layers {
        let path = dir.join(layer_file_name(i));
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
        matrices.push(flatten_layer(&npy::read_block(&path)?, mode)?);
    }
    ActivationSet::new(manifest, matrices)
}

fn load_manifests(cfg: &RunConfig) -> Result<BTreeMap<String, NetworkManifest>> {
    discover_networks(&cfg.data_dir)?
        .into_iter()
        .map(|(name, dir)| Ok((name, load_manifest(&dir)?)))
        .collect()
}

pub fn load_pair_scores(cfg: &RunConfig) -> Result<PairScores> {
    let path = cfg.out_dir.join(PAIR_SCORES_FILE);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    PairScores::read_csv(file)
}

fn load_matrix(cfg: &RunConfig, net_a: &str, net_b: &str) -> Result<SimilarityMatrix> {
    let path = cfg
        .out_dir
        .join(MATRIX_DIR)
        .join(format!("{}.csv", matrix_file_name(net_a, net_b)));
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    SimilarityMatrix::read_csv(net_a, net_b, file)
}

fn load_attacks(cfg: &RunConfig) -> Result<AttackTable> {
    if !cfg.attacks.is_file() {
        return Err(Error::MissingFile(cfg.attacks.clone()));
    }
    read_attack_csv(&cfg.attacks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub networks: usize,
    pub pairs: usize,
    pub degenerate_pairs: usize,
}

/// Scores every unordered network pair; the lexicographically smaller name
/// supplies the matrix rows.
pub fn cmd_sim(cfg: &RunConfig) -> Result<SimSummary> {
    let networks = discover_networks(&cfg.data_dir)?;
    if networks.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 networks under {}, found {}",
            cfg.data_dir.display(),
            networks.len()
        )));
    }
    let sets: Vec<ActivationSet> = networks
        .par_iter()
        .map(|(_, dir)| load_network(dir, cfg.flatten))
        .collect::<Result<_>>()?;
    let examples = sets[0].num_examples();
    if let Some(odd) = sets.iter().find(|s| s.num_examples() != examples) {
        return Err(Error::Mismatch(format!(
            "{} has {} examples but {} has {}",
            odd.name(),
            odd.num_examples(),
            sets[0].name(),
            examples
        )));
    }
    info!("scoring {} networks with {} examples", sets.len(), examples);

    let pairs: Vec<(usize, usize)> = (0..sets.len())
        .flat_map(|i| (i + 1..sets.len()).map(move |j| (i, j)))
        .collect();
    let results = pairs
        .par_iter()
        .map(|&(i, j)| layer_similarity_matrix(&sets[i], &sets[j]))
        .collect::<Result<Vec<_>>>()?;

    let mut scores = Vec::with_capacity(results.len());
    let mut diag = csv::Writer::from_writer(Vec::new());
    diag.write_record(["net_a", "net_b", "degenerate_pairs"])?;
    let mut degenerate = 0;
    for r in &results {
        let m = &r.matrix;
        let bytes = csv_bytes(|b| m.write_csv(b))?;
        write_file(
            &cfg.out_dir
                .join(MATRIX_DIR)
                .join(format!("{}.csv", matrix_file_name(&m.net_a, &m.net_b))),
            &bytes,
        )?;
        scores.push(PairScore::from_matrix(m, &cfg.radii));
        diag.write_record([m.net_a.as_str(), &m.net_b, &r.degenerate_pairs.to_string()])?;
        degenerate += r.degenerate_pairs;
    }
    let scores = PairScores::new(scores)?;
    write_file(
        &cfg.out_dir.join(PAIR_SCORES_FILE),
        &csv_bytes(|b| scores.write_csv(b))?,
    )?;
    let diag = diag
        .into_inner()
        .map_err(|e| Error::Format(format!("diagnostics buffer: {e}")))?;
    write_file(&cfg.out_dir.join("sim_diagnostics.csv"), &diag)?;
    Ok(SimSummary {
        networks: sets.len(),
        pairs: scores.len(),
        degenerate_pairs: degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSummary {
    pub network_pairs: SummaryStats,
    pub layer_pairs: SummaryStats,
    pub most_similar: (String, String, f64),
    pub least_similar: (String, String, f64),
}

fn stats_record(scope: &str, kind: &str, s: &SummaryStats) -> Vec<String> {
    vec![
        scope.to_string(),
        kind.to_string(),
        s.count.to_string(),
        fmt_real(s.mean),
        fmt_real(s.median),
        fmt_real(s.std),
        fmt_real(s.min),
        fmt_real(s.max),
    ]
}

pub fn cmd_aggregate(cfg: &RunConfig) -> Result<AggregateSummary> {
    let scores = load_pair_scores(cfg)?;
    if scores.is_empty() {
        return Err(Error::Empty("pair-score file lists no network pairs"));
    }
    let manifests = load_manifests(cfg)?;
    let manifest = |name: &str| {
        manifests
            .get(name)
            .ok_or_else(|| Error::Data(format!("no manifest for network {name} under the data directory")))
    };
    let matrices: Vec<SimilarityMatrix> = scores
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|p| load_matrix(cfg, &p.net_a, &p.net_b))
        .collect::<Result<_>>()?;
    let transposed: Vec<SimilarityMatrix> = matrices.iter().map(SimilarityMatrix::transpose).collect();
    let mut forward = Vec::with_capacity(matrices.len());
    for m in &matrices {
        forward.push(PairMatrix::new(m, manifest(&m.net_a)?, manifest(&m.net_b)?)?);
    }
    let both: Vec<PairMatrix> = forward
        .iter()
        .chain(
            forward
                .iter()
                .zip(&transposed)
                .map(|(p, t)| p.flipped(t))
                .collect::<Vec<_>>()
                .iter(),
        )
        .copied()
        .collect();

    // summary statistics
    let layer_values: Vec<f64> = matrices.iter().flat_map(|m| m.entries().iter().copied()).collect();
    let layer_stats = summary_stats(&layer_values)?;
    let mut kinds = vec![ScoreKind::Cka];
    kinds.extend(scores.radii().into_iter().map(ScoreKind::Dbs));
    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record(["scope", "score_kind", "count", "mean", "median", "std", "min", "max"])?;
    let mut extremal = csv::Writer::from_writer(Vec::new());
    extremal.write_record(["score_kind", "which", "net_a", "net_b", "score"])?;
    let mut network_stats = None;
    let mut extremes = None;
    for kind in &kinds {
        let values = scores.iter().map(|p| p.score(*kind)).collect::<Result<Vec<_>>>()?;
        let stats = summary_stats(&values)?;
        summary.write_record(stats_record("network_pairs", &kind.to_string(), &stats))?;
        let (hi, lo) = extremal_pairs(&scores, *kind)?;
        for (which, p) in [("max", &hi), ("min", &lo)] {
            extremal.write_record([kind.to_string().as_str(), which, &p.net_a, &p.net_b, &fmt_real(p.score)])?;
        }
        if *kind == cfg.score_kind {
            network_stats = Some(stats);
            extremes = Some((hi, lo));
        }
    }
    summary.write_record(stats_record("layer_pairs", "cka", &layer_stats))?;
    let network_stats = network_stats.ok_or_else(|| {
        Error::InvalidArgument(format!("score kind {} is not among the computed radii", cfg.score_kind))
    })?;
    let (hi, lo) = extremes.expect("set with network stats");

    let finish = |w: csv::Writer<Vec<u8>>| {
        w.into_inner()
            .map_err(|e| Error::Format(format!("csv buffer: {e}")))
    };
    write_file(&cfg.out_dir.join("summary.csv"), &finish(summary)?)?;
    write_file(&cfg.out_dir.join("extremal.csv"), &finish(extremal)?)?;

    let mut curve = csv::Writer::from_writer(Vec::new());
    curve.write_record(["position", "mean_score"])?;
    for (pos, mean) in position_curve(&both) {
        curve.write_record([fmt_real(pos), fmt_real(mean)])?;
    }
    write_file(&cfg.out_dir.join("position_curve.csv"), &finish(curve)?)?;

    let grid = position_grid(&forward, cfg.bins)?;
    let mut gw = csv::Writer::from_writer(Vec::new());
    gw.write_record(["row_bin", "col_bin", "row_lo", "row_hi", "col_lo", "col_hi", "mean", "count"])?;
    let edge = |k: usize| fmt_real(k as f64 / cfg.bins as f64);
    for r in 0..cfg.bins {
        for c in 0..cfg.bins {
            let cell = grid.cell(r, c);
            gw.write_record([
                r.to_string(),
                c.to_string(),
                edge(r),
                edge(r + 1),
                edge(c),
                edge(c + 1),
                cell.mean.map(fmt_real).unwrap_or_default(),
                cell.count.to_string(),
            ])?;
        }
    }
    write_file(&cfg.out_dir.join("position_grid.csv"), &finish(gw)?)?;

    let mut tw = csv::Writer::from_writer(Vec::new());
    tw.write_record(["type_a", "type_b", "mean", "count"])?;
    for ((a, b), (mean, count)) in type_matrix(&forward) {
        tw.write_record([a, b, fmt_real(mean), count.to_string()])?;
    }
    write_file(&cfg.out_dir.join("type_matrix.csv"), &finish(tw)?)?;

    let mut sw = csv::Writer::from_writer(Vec::new());
    sw.write_record(["net_a", "net_b", "layer_delta", "score_kind", "score"])?;
    for p in size_delta_series(&scores, cfg.score_kind)? {
        sw.write_record([
            p.net_a,
            p.net_b,
            p.layer_delta.to_string(),
            cfg.score_kind.to_string(),
            fmt_real(p.score),
        ])?;
    }
    write_file(&cfg.out_dir.join("size_delta.csv"), &finish(sw)?)?;

    println!(
        "network pairs ({}): n={} mean={:.4} median={:.4} std={:.4} min={:.4} max={:.4}",
        cfg.score_kind,
        network_stats.count,
        network_stats.mean,
        network_stats.median,
        network_stats.std,
        network_stats.min,
        network_stats.max
    );
    println!(
        "layer pairs: n={} mean={:.4} median={:.4} std={:.4} min={:.4} max={:.4}",
        layer_stats.count, layer_stats.mean, layer_stats.median, layer_stats.std, layer_stats.min, layer_stats.max
    );
    println!("most similar: {} / {} ({:.4})", hi.net_a, hi.net_b, hi.score);
    println!("least similar: {} / {} ({:.4})", lo.net_a, lo.net_b, lo.score);

    Ok(AggregateSummary {
        network_pairs: network_stats,
        layer_pairs: layer_stats,
        most_similar: (hi.net_a, hi.net_b, hi.score),
        least_similar: (lo.net_a, lo.net_b, lo.score),
    })
}

pub fn cmd_correlate(cfg: &RunConfig) -> Result<ScanOutput> {
    let scores = load_pair_scores(cfg)?;
    let mut table = load_attacks(cfg)?;
    if let Some(criteria) = &cfg.subset {
        table = subset_filter(&table, criteria, &scores.layer_counts()?)?;
    }
    let out = correlation_scan(&scores, &table, &Method::ALL, cfg.score_kind)?;
    write_file(
        &cfg.out_dir.join("correlation_scan.csv"),
        &csv_bytes(|b| write_scan_csv(&out.reports, b))?,
    )?;
    write_file(
        &cfg.out_dir.join("correlation_diagnostics.csv"),
        &csv_bytes(|b| write_diagnostics_csv(&out.diagnostics, b))?,
    )?;
    if !out.diagnostics.is_empty() {
        warn!("{} scan cells produced no coefficient", out.diagnostics.len());
    }
    info!("{} correlation rows written", out.reports.len());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subset {
    pub name: String,
    pub criteria: SubsetCriteria,
}

/// Subsets evaluated by `tree` when no subset flags are given: each attack
/// family split by the targeted flag.
pub fn standard_subsets() -> Vec<Subset> {
    use crate::data::StepClass;
    let families: [(&str, SubsetCriteria); 6] = [
        ("white_box", SubsetCriteria { box_class: Some(BoxClass::White), ..Default::default() }),
        ("black_box", SubsetCriteria { box_class: Some(BoxClass::Black), ..Default::default() }),
        ("single_step", SubsetCriteria { step_class: Some(StepClass::Single), ..Default::default() }),
        ("multi_step", SubsetCriteria { step_class: Some(StepClass::Multi), ..Default::default() }),
        ("low_std", SubsetCriteria { low_std: Some(0.10), ..Default::default() }),
        ("all", SubsetCriteria::default()),
    ];
    families
        .into_iter()
        .flat_map(|(name, base)| {
            [false, true].map(|t| Subset {
                name: name.to_string(),
                criteria: SubsetCriteria { targeted: Some(t), ..base.clone() },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetResult {
    pub subset: Subset,
    pub outcome: std::result::Result<(EvalMetrics, String), String>,
}

fn targeted_label(c: &SubsetCriteria) -> &'static str {
    match c.targeted {
        Some(true) => "true",
        Some(false) => "false",
        None => "any",
    }
}

fn run_subset(cfg: &RunConfig, scores: &PairScores, table: &AttackTable, subset: &Subset) -> Result<(EvalMetrics, String)> {
    let data = assemble_features(scores, table, &subset.criteria, cfg.score_kind)?;
    if data.len() < 2 {
        return Err(Error::Data(format!("subset has {} rows, need at least 2", data.len())));
    }
    let (train, test) = train_test_split(&data, cfg.train_fraction, cfg.seed)?;
    let model = fit_with(&train, FitOptions { max_depth: cfg.max_depth })?;
    let metrics = evaluate(&model, &test, cfg.threshold, train.target_mean())?;
    Ok((metrics, model.dump()))
}

pub fn cmd_tree(cfg: &RunConfig) -> Result<Vec<SubsetResult>> {
    let scores = load_pair_scores(cfg)?;
    let table = load_attacks(cfg)?;
    let subsets = match &cfg.subset {
        Some(c) => vec![Subset { name: "custom".into(), criteria: c.clone() }],
        None => standard_subsets(),
    };
    let results: Vec<SubsetResult> = subsets
        .into_par_iter()
        .map(|subset| {
            let outcome = run_subset(cfg, &scores, &table, &subset).map_err(|e| e.to_string());
            SubsetResult { subset, outcome }
        })
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["subset", "targeted", "mse", "baseline_mse", "mse_improvement_pct", "threshold_accuracy"])?;
    for r in &results {
        let targeted = targeted_label(&r.subset.criteria);
        match &r.outcome {
            Ok((m, dump)) => {
                w.write_record([
                    r.subset.name.as_str(),
                    targeted,
                    &fmt_real(m.mse),
                    &fmt_real(m.baseline_mse),
                    &m.improvement_pct.map(fmt_real).unwrap_or_else(|| "undefined".into()),
                    &fmt_real(m.threshold_accuracy),
                ])?;
                write_file(
                    &cfg.out_dir.join("trees").join(format!("{}_{}.txt", r.subset.name, targeted)),
                    dump.as_bytes(),
                )?;
            }
            Err(msg) => {
                warn!("subset {} (targeted={}): {}", r.subset.name, targeted, msg);
                w.write_record([r.subset.name.as_str(), targeted, "NA", "NA", "NA", "NA"])?;
            }
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("csv buffer: {e}")))?;
    write_file(&cfg.out_dir.join("tree_metrics.csv"), &bytes)?;
    Ok(results)
}

fn network_heatmap(
    scores: &PairScores,
    names: &[String],
    kind: ScoreKind,
    cfg: &RunConfig,
) -> Result<String> {
    let mut values = Vec::with_capacity(names.len() * names.len());
    for a in names {
        for b in names {
            values.push(if a == b {
                None
            } else {
                Some(scores.score(a, b, kind)?)
            });
        }
    }
    Heatmap {
        title: format!("Network similarity ({kind})"),
        row_labels: names.to_vec(),
        col_labels: names.to_vec(),
        values,
        vmin: cfg.vmin,
        vmax: cfg.vmax,
    }
    .render()
}

fn success_heatmap(table: &AttackTable, box_class: BoxClass, names: &[String]) -> Option<Result<String>> {
    let mut cells: BTreeMap<(&str, &str), (f64, usize)> = BTreeMap::new();
    for r in table
        .records()
        .iter()
        .filter(|r| r.is_transferred() && r.box_class == box_class)
    {
        let e = cells.entry((&r.source_network, &r.target_network)).or_default();
        e.0 += r.success_rate;
        e.1 += 1;
    }
    if cells.is_empty() {
        return None;
    }
    let values = names
        .iter()
        .flat_map(|a| names.iter().map(move |b| (a, b)))
        .map(|(a, b)| cells.get(&(a.as_str(), b.as_str())).map(|(s, n)| s / *n as f64))
        .collect();
    Some(
        Heatmap {
            title: format!("Mean transferred success rate ({box_class} box), source rows"),
            row_labels: names.to_vec(),
            col_labels: names.to_vec(),
            values,
            vmin: 0.0,
            vmax: 1.0,
        }
        .render(),
    )
}

pub fn cmd_report(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let scores = load_pair_scores(cfg)?;
    if scores.is_empty() {
        return Err(Error::Empty("pair-score file lists no network pairs"));
    }
    let names: Vec<String> = scores.layer_counts()?.into_keys().collect();
    let report = cfg.out_dir.join("report");
    let mut written = Vec::new();
    let mut emit = |path: PathBuf, svg: String| -> Result<()> {
        write_file(&path, svg.as_bytes())?;
        written.push(path);
        Ok(())
    };

    let mut kinds = vec![ScoreKind::Cka];
    match cfg.score_kind {
        ScoreKind::Dbs(r) => kinds.push(ScoreKind::Dbs(r)),
        ScoreKind::Cka if scores.radii().contains(&5) => kinds.push(ScoreKind::Dbs(5)),
        ScoreKind::Cka => {}
    }
    for kind in kinds {
        let file = match kind {
            ScoreKind::Cka => "network_cka.svg".to_string(),
            ScoreKind::Dbs(r) => format!("network_dbs_r{r}.svg"),
        };
        emit(report.join(file), network_heatmap(&scores, &names, kind, cfg)?)?;
    }

    let pairs: Vec<&PairScore> = scores.iter().collect();
    let layer_maps = pairs
        .par_iter()
        .map(|p| {
            let m = load_matrix(cfg, &p.net_a, &p.net_b)?;
            let svg = Heatmap {
                title: format!("Layer CKA: {} (rows) vs {} (columns)", p.net_a, p.net_b),
                row_labels: (0..m.n()).map(|i| i.to_string()).collect(),
                col_labels: (0..m.m()).map(|j| j.to_string()).collect(),
                values: m.entries().iter().map(|&v| Some(v)).collect(),
                vmin: cfg.vmin,
                vmax: cfg.vmax,
            }
            .render()?;
            Ok((matrix_file_name(&p.net_a, &p.net_b), svg))
        })
        .collect::<Result<Vec<_>>>()?;
    for (name, svg) in layer_maps {
        emit(report.join("layers").join(format!("{name}.svg")), svg)?;
    }

    if cfg.attacks.is_file() {
        let table = read_attack_csv(&cfg.attacks)?;
        for box_class in [BoxClass::Black, BoxClass::White] {
            if let Some(svg) = success_heatmap(&table, box_class, &names) {
                emit(report.join(format!("success_{box_class}.svg")), svg?)?;
            }
        }
    }
    Ok(written)
}
