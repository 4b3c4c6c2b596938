mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use netsim::data::npy::write_block;
use netsim::data::{NetworkManifest, Precision, RawBlock};

fn netsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = netsim(args);
    assert!(
        out.status.success(),
        "netsim {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn full_pipeline_through_the_binary() {
    let root = tempfile::tempdir().unwrap();
    let data = common::build_standard_fixture(root.path());
    let out = root.path().join("out");
    let (d, o) = (data.to_str().unwrap(), out.to_str().unwrap());
    let base = ["--data-dir", d, "--out-dir", o, "--radii", "1,2,5"];

    run_ok(&[&["sim"], &base[..]].concat());
    assert_eq!(header(&out.join("pair_scores.csv")), "net_a,net_b,n_layers_a,n_layers_b,cka_mean,dbs_r1,dbs_r2,dbs_r5");
    let pairs = fs::read_to_string(out.join("pair_scores.csv")).unwrap().lines().count() - 1;
    assert_eq!(pairs, 28);
    assert!(out.join("matrices/net0__net7.csv").is_file());
    assert!(!out.join("matrices/net7__net0.csv").exists());

    let stdout = run_ok(&[&["aggregate"], &base[..]].concat());
    assert!(stdout.contains("most similar"));
    for f in ["summary.csv", "extremal.csv", "position_curve.csv", "position_grid.csv", "type_matrix.csv", "size_delta.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let grid = fs::read_to_string(out.join("position_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 100);

    run_ok(&[&["correlate", "--score-kind", "dbs:2"], &base[..]].concat());
    let scan = fs::read_to_string(out.join("correlation_scan.csv")).unwrap();
    // 8 sources × 4 attacks × 1 targeted flag × 4 methods
    assert_eq!(scan.lines().count(), 1 + 8 * 4 * 4);
    assert!(scan.lines().skip(1).all(|l| l.contains(",dbs:2,")));

    run_ok(&[&["tree"], &base[..]].concat());
    let metrics = fs::read_to_string(out.join("tree_metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 12);
    assert!(metrics.contains("black_box,true,NA,NA,NA,NA"));
    assert!(out.join("trees/black_box_false.txt").is_file());

    run_ok(&[&["report", "--score-kind", "dbs:5"], &base[..]].concat());
    for f in ["network_cka.svg", "network_dbs_r5.svg", "success_black.svg", "success_white.svg", "layers/net3__net5.svg"] {
        let svg = fs::read_to_string(out.join("report").join(f)).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"), "{f}");
    }
}

#[test]
fn errors_are_reported_on_one_line() {
    let root = tempfile::tempdir().unwrap();
    let o = root.path().join("out");
    let missing = root.path().join("nope");
    let out = netsim(&["sim", "--data-dir", missing.to_str().unwrap(), "--out-dir", o.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error kind=io:"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    let out = netsim(&["aggregate", "--data-dir", root.path().to_str().unwrap(), "--out-dir", o.to_str().unwrap()]);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error kind=missing_file:"));

    let out = netsim(&["sim", "--data-dir", ".", "--out-dir", "x", "--vmin", "0.9", "--vmax", "0.1"]);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error kind=invalid_argument:"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    common::write_fixture_networks(&data, 5);
    let out = root.path().join("out");
    let cfg = root.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "# fixture run\ndata_dir = {}\nout-dir = {}\nradii = 9, 3\nthreads = 2\n",
            data.display(),
            root.path().join("ignored").display()
        ),
    )
    .unwrap();
    run_ok(&["sim", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(header(&out.join("pair_scores.csv")).ends_with("cka_mean,dbs_r3,dbs_r9"));
    assert!(!root.path().join("ignored").exists());
}

#[test]
fn spatial_mean_pools_conv_blocks() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let mut rng = common::rng(3);
    for net in ["a", "b"] {
        let dir = data.join(net);
        let manifest = NetworkManifest::new(net, 10, &[("c1", "conv"), ("c2", "conv")]);
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("manifest.json"), manifest.to_json()).unwrap();
        for l in 0..2 {
            let block = RawBlock::new(vec![10, 3, 2, 2], common::gaussian_values(&mut rng, 120)).unwrap();
            write_block(&block, &dir.join(format!("layer_{l:03}.npy")), Precision::F32).unwrap();
        }
    }
    let (d, flat, pooled) = (
        data.to_str().unwrap(),
        root.path().join("flat"),
        root.path().join("pooled"),
    );
    run_ok(&["sim", "--data-dir", d, "--out-dir", flat.to_str().unwrap()]);
    run_ok(&["sim", "--data-dir", d, "--out-dir", pooled.to_str().unwrap(), "--spatial-mean"]);
    let a = fs::read(flat.join("pair_scores.csv")).unwrap();
    let b = fs::read(pooled.join("pair_scores.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn mismatched_example_counts_are_rejected() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    common::write_fixture_networks(&data, 1);
    let manifest_path = data.join("net0/manifest.json");
    let text = fs::read_to_string(&manifest_path).unwrap();
    let mut manifest = NetworkManifest::from_json(&text).unwrap();
    manifest.num_examples = 32;
    fs::write(&manifest_path, manifest.to_json()).unwrap();
    let out = netsim(&["sim", "--data-dir", data.to_str().unwrap(), "--out-dir", root.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error kind=mismatch:"), "{err}");
}
