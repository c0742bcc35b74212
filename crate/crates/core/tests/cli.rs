//! End-to-end tests of the command-line interface on small fixtures.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, Output};

use causal_foundry::cycles::read_cycle_index;
use causal_foundry::fixture::{write_furnace_fixture, FurnaceFixture, FIXTURE_CONFIG};
use causal_foundry::graph::{CausalGraph, GraphLink};
use causal_foundry::pipeline::{read_manifest, ClusterSample, DiscoverSummary};
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causal-foundry"))
        .args(args)
        .arg("--config")
        .arg(dir.join("pipeline.toml"))
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture(clusters: usize, cycles: usize, extra_config: &str) -> (TempDir, FurnaceFixture) {
    let tmp = tempfile::tempdir().unwrap();
    let fx = write_furnace_fixture(tmp.path(), clusters, cycles, 3).unwrap();
    set_config(tmp.path(), extra_config);
    (tmp, fx)
}

fn merge(base: &mut toml::Value, extra: toml::Value) {
    match (base, extra) {
        (toml::Value::Table(b), toml::Value::Table(e)) => {
            for (k, v) in e {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Writes the fixture config with the tables in `extra` merged over it.
fn set_config(dir: &Path, extra: &str) {
    let mut cfg: toml::Value = toml::from_str(FIXTURE_CONFIG).unwrap();
    merge(&mut cfg, toml::from_str(extra).unwrap());
    std::fs::write(dir.join("pipeline.toml"), toml::to_string(&cfg).unwrap()).unwrap();
}

#[test]
fn config_merge_helper_overrides_keys() {
    let tmp = tempfile::tempdir().unwrap();
    set_config(tmp.path(), "[sampler]\nfraction = 1.0\n[segmentation]\nmin_duration_s = 5\n[discovery.ci]\ncmi_k = 4");
    let text = std::fs::read_to_string(tmp.path().join("pipeline.toml")).unwrap();
    let v: toml::Value = toml::from_str(&text).unwrap();
    assert_eq!(v["sampler"]["fraction"].as_float(), Some(1.0));
    assert_eq!(v["sampler"]["emd_threshold"].as_float(), Some(0.6));
    assert_eq!(v["segmentation"]["min_duration_s"].as_integer(), Some(5));
    assert_eq!(v["discovery"]["tau_max"].as_integer(), Some(3));
    assert_eq!(v["discovery"]["ci"]["cmi_k"].as_integer(), Some(4));
    assert_eq!(v["discovery"]["ci"]["cmi_permutations"].as_integer(), Some(30));
}

#[test]
fn missing_input_is_a_data_error() {
    let (tmp, _) = fixture(1, 2, "");
    std::fs::remove_file(tmp.path().join("trace.csv")).unwrap();
    let o = run(tmp.path(), &["segment"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("trace.csv"));
}

#[test]
fn inverted_duration_rules_are_a_config_error() {
    let (tmp, _) = fixture(1, 2, "[segmentation]\nmin_duration_s = 5000.0\nmax_duration_s = 4000.0");
    let o = run(tmp.path(), &["segment"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let (tmp, _) = fixture(1, 2, "[sampler]\nfractoin = 0.5");
    let o = run(tmp.path(), &["segment"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn segment_recovers_fixture_boundaries() {
    let (tmp, fx) = fixture(3, 3, "");
    let o = run(tmp.path(), &["segment"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cycles = read_cycle_index(&tmp.path().join("out/segment/cycles.csv")).unwrap();
    let rows: Vec<(usize, usize)> = cycles.iter().map(|c| (c.start_row, c.end_row)).collect();
    assert_eq!(rows, fx.cycle_rows);
    let labels: BTreeMap<usize, usize> = cycles.iter().map(|c| (c.id, c.cluster.unwrap())).collect();
    assert_eq!(labels, fx.labels);
    assert!(tmp.path().join("out/effective_config.json").is_file());
}

#[test]
fn full_fraction_selects_every_screened_cycle() {
    let (tmp, fx) = fixture(3, 8, "[sampler]\nfraction = 1.0");
    assert!(run(tmp.path(), &["segment"]).status.success());
    let o = run(tmp.path(), &["sample"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for cluster in 0..3 {
        let dir = tmp.path().join(format!("out/sample/cluster_{cluster}"));
        let chosen: BTreeSet<usize> = read_manifest(&dir.join("manifest.csv"))
            .unwrap()
            .into_iter()
            .map(|(c, id)| {
                assert_eq!(c, cluster);
                id
            })
            .collect();
        let info: ClusterSample =
            serde_json::from_str(&std::fs::read_to_string(dir.join("validation.json")).unwrap()).unwrap();
        let removed: BTreeSet<usize> = info.removed.iter().map(|r| r.cycle.id).collect();
        let members: BTreeSet<usize> = fx.labels.iter().filter(|(_, &c)| c == cluster).map(|(&id, _)| id).collect();
        assert!(chosen.is_disjoint(&removed));
        assert_eq!(&chosen | &removed, members);
        assert!(info.validation.pass);
        assert!(info.validation.emd.iter().all(|&e| e == 0.0));
        assert_eq!(info.validation.mmd, 0.0);
    }
}

#[test]
fn impossible_thresholds_warn_but_succeed() {
    let (tmp, _) = fixture(2, 8, "[sampler]\nemd_threshold = 1e-12\nmmd_threshold = 1e-12\nmax_retries = 3");
    assert!(run(tmp.path(), &["segment"]).status.success());
    let o = run(tmp.path(), &["sample"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    for cluster in 0..2 {
        let path = tmp.path().join(format!("out/sample/cluster_{cluster}/validation.json"));
        let info: ClusterSample = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert!(!info.validation.pass);
        assert_eq!(info.validation.retries_used, 3);
    }
}

#[test]
fn undersized_cluster_is_skipped_and_others_proceed() {
    let (tmp, fx) = fixture(
        2,
        4,
        "[sampler]\nfraction = 1.0\n[discovery]\ntau_max = 1\n[discovery.ci]\nmin_samples = 300\ncmi_permutations = 20\ngpdc_permutations = 20\n[variables]\ndiscover = [5, 6, 10]",
    );
    // move all but one cycle of cluster 1 into cluster 0
    let mut labels = String::from("cycle_id,cluster\n");
    let mut kept_one = false;
    for (&id, &c) in &fx.labels {
        let c = if c == 1 && kept_one { 0 } else { c };
        kept_one |= c == 1;
        labels.push_str(&format!("{id},{c}\n"));
    }
    std::fs::write(tmp.path().join("labels.csv"), labels).unwrap();

    let o = run(tmp.path(), &["pipeline"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("cluster 1 skipped"));
    let summary: DiscoverSummary =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/graphs/summary.json")).unwrap()).unwrap();
    let status: Vec<(&str, bool)> = summary
        .clusters
        .iter()
        .map(|c| (c.status.as_str(), c.reason.is_some()))
        .collect();
    assert_eq!(status, [("ok", false), ("skipped", true)]);
    for method in ["robust_parcorr", "parcorr_wls", "gpdc", "cmiknn", "hybrid"] {
        assert!(tmp.path().join(format!("out/graphs/cluster_0/{method}.json")).is_file());
        assert!(tmp.path().join(format!("out/graphs/cluster_0/{method}.dot")).is_file());
        assert!(!tmp.path().join(format!("out/graphs/cluster_1/{method}.json")).exists());
    }
    assert!(tmp.path().join("out/compare/pair_frequency.csv").is_file());
}

#[test]
fn compare_on_empty_graph_dir_gives_empty_table() {
    let (tmp, _) = fixture(1, 2, "");
    std::fs::create_dir_all(tmp.path().join("out/graphs")).unwrap();
    let o = run(tmp.path(), &["compare"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("out/compare/pair_frequency.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn compare_on_single_cluster_gives_unit_frequencies() {
    let (tmp, _) = fixture(1, 2, "");
    let dir = tmp.path().join("out/graphs/cluster_4");
    std::fs::create_dir_all(&dir).unwrap();
    let link = |source, target, lag| GraphLink {
        source,
        target,
        lag,
        strength: 0.3,
        p_value: 0.01,
        mark: None,
        provenance: None,
    };
    let g = CausalGraph {
        method: "hybrid".into(),
        variables: causal_foundry::dataset::furnace_schema(),
        tau_max: 3,
        lag_unit_s: 10.0,
        links: vec![link(5, 11, 3), link(5, 11, 1), link(4, 5, 1), link(3, 8, 2)],
    };
    g.write_json(&dir.join("hybrid.json")).unwrap();
    let o = run(tmp.path(), &["compare"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("out/compare/pair_frequency.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[2] == "1" && r[3] == "4"));
    let pair_5_11 = rows.iter().find(|r| r[..2] == ["5", "11"]).unwrap();
    assert_eq!(pair_5_11[4..], ["1", "3"]);
}

#[test]
fn bench_scores_every_method_on_a_tiny_suite() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("pipeline.toml"),
        "[discovery]\ntau_max = 1\n[discovery.ci]\ncmi_permutations = 20\ngpdc_permutations = 20\n",
    )
    .unwrap();
    let out = tmp.path().join("bench");
    let o = run(
        tmp.path(),
        &[
            "bench",
            "--generate",
            "linear",
            "--count",
            "1",
            "--n-vars",
            "3",
            "--length",
            "300",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let methods: Vec<&str> = stdout.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["robust_parcorr", "parcorr_wls", "gpdc", "cmiknn", "hybrid"]);
    assert!(out.join("suite.json").is_file());

    // the written suite replays to the same scores
    let replay = run(tmp.path(), &["bench", "--suite", out.join("suite.json").to_str().unwrap(), "--out", tmp.path().join("replay").to_str().unwrap()]);
    assert!(replay.status.success(), "{}", stderr(&replay));
    assert_eq!(String::from_utf8(replay.stdout).unwrap(), stdout);
}

#[test]
fn bench_without_a_suite_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("pipeline.toml"), "").unwrap();
    let o = run(tmp.path(), &["bench"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
