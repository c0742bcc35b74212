//! The four analysis stages as file-to-file commands. Each stage reads only
//! what earlier stages wrote under the output directory.
//!
//! Layout of the output directory:
//!
//! ```text
//! effective_config.json
//! segment/   cycles.csv, labels.csv, segmentation.json
//! sample/    cluster_<c>/manifest.csv, cluster_<c>/validation.json, summary.json
//! graphs/    cluster_<c>/<method>.json|.dot, cluster_<c>/hybrid_conflicts.json, summary.json
//! compare/   pair_frequency.csv, report.txt, common_specific.json, feedback.json, lag_summary.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci::TestKind;
use crate::config::Resolved;
use crate::cycles::{
    baseline_cluster, compute_cycle_stats, csv_error, export_cluster_labels, ingest_cluster_labels,
    read_cycle_index, segment_cycles, write_cycle_index, MeltingCycle,
};
use crate::dataset::{drop_sparse_variables, load_csv_with_interval, standardize, DroppedVariable, TimeSeriesDataset};
use crate::error::{Error, ErrorKind, Result};
use crate::graph::{CausalGraph, LaggedAdjacency};
use crate::hybrid::{hybrid, ResolvedConflict};
use crate::io::{write_atomic, write_json};
use crate::pcmci::{boundary_mask, run_pcmci_plus};
use crate::posthoc::{common_and_specific, detect_feedback_pairs, lag_summary, pair_frequency, text_report};
use crate::rng::stable_mix;
use crate::sampler::{concatenate, remove_outlier_cycles, sample_and_validate, RemovedCycle, ValidationReport};
use crate::synth::HYBRID;

const SEGMENT_DIR: &str = "segment";
const SAMPLE_DIR: &str = "sample";
const GRAPH_DIR: &str = "graphs";
const COMPARE_DIR: &str = "compare";

fn cluster_dir(stage: &Path, cluster: usize) -> PathBuf {
    stage.join(format!("cluster_{cluster}"))
}

/// Clears a stage directory so stale files from earlier runs do not linger.
fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Cluster labels that have a `cluster_<c>` subdirectory, ascending.
fn cluster_subdirs(stage: &Path) -> Result<Vec<usize>> {
    if !stage.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(stage).map_err(|e| Error::io(stage, e))? {
        let entry = entry.map_err(|e| Error::io(stage, e))?;
        let name = entry.file_name();
        let Some(label) = name.to_str().and_then(|n| n.strip_prefix("cluster_")) else {
            continue;
        };
        if let (Ok(c), true) = (label.parse(), entry.path().is_dir()) {
            out.push(c);
        }
    }
    out.sort_unstable();
    Ok(out)
}

pub fn write_effective_config(r: &Resolved) -> Result<()> {
    ensure_dir(&r.output)?;
    write_json(&r.output.join("effective_config.json"), &r.config)
}

fn load_trace(r: &Resolved) -> Result<TimeSeriesDataset> {
    load_csv_with_interval(&r.input, &r.schema, r.config.data.interval_s)
}

// ---------------------------------------------------------------------------
// segment

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub cycles: usize,
    pub discarded: usize,
    /// `"file"` or `"baseline"`.
    pub clustering: String,
    pub cluster_sizes: BTreeMap<usize, usize>,
}

pub fn cmd_segment(r: &Resolved) -> Result<SegmentSummary> {
    let cfg = &r.config;
    let ds = load_trace(r)?;
    let seg = segment_cycles(&ds, &cfg.segmentation, cfg.variables.temperature)?;
    let mut cycles = seg.cycles;
    for c in cycles.iter_mut() {
        c.stats = compute_cycle_stats(&ds, c, cfg.stat_variables())?;
    }
    let (partition, clustering) = match &r.labels {
        Some(path) => (ingest_cluster_labels(path, &cycles)?, "file"),
        None => (
            baseline_cluster(
                &cycles,
                &ds,
                cfg.variables.temperature,
                cfg.clustering.k,
                cfg.clustering.profile_len,
                stable_mix(cfg.seed, 0x636c75),
            )?,
            "baseline",
        ),
    };
    partition.apply(&mut cycles);

    let dir = r.output.join(SEGMENT_DIR);
    fresh_dir(&dir)?;
    write_effective_config(r)?;
    write_cycle_index(&dir.join("cycles.csv"), &cycles)?;
    export_cluster_labels(&dir.join("labels.csv"), &partition)?;
    let mut cluster_sizes = BTreeMap::new();
    for c in partition.assignments.values() {
        *cluster_sizes.entry(*c).or_insert(0) += 1;
    }
    let summary = SegmentSummary {
        cycles: cycles.len(),
        discarded: seg.discarded,
        clustering: clustering.to_string(),
        cluster_sizes,
    };
    write_json(&dir.join("segmentation.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// sample

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSample {
    pub cluster: usize,
    pub cycles: usize,
    /// `false` when the cluster was too small for outlier screening.
    pub outliers_screened: bool,
    pub removed: Vec<RemovedCycle>,
    pub validation: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub clusters: Vec<usize>,
    pub failed_validation: Vec<usize>,
    pub unlabelled_cycles: usize,
}

fn read_cycles(r: &Resolved) -> Result<Vec<MeltingCycle>> {
    read_cycle_index(&r.output.join(SEGMENT_DIR).join("cycles.csv"))
}

fn sample_cluster(cluster: usize, members: &[MeltingCycle], r: &Resolved) -> Result<(Vec<MeltingCycle>, ClusterSample)> {
    let (kept, removed, screened) = match remove_outlier_cycles(members, &r.config.sampler) {
        Ok((k, rm)) => (k, rm, true),
        Err(Error::TooFewCycles { .. }) => (members.to_vec(), Vec::new(), false),
        Err(e) => return Err(e),
    };
    let mut sampler = r.config.sampler.clone();
    sampler.seed = stable_mix(sampler.seed, cluster as u64);
    let (selected, validation) = sample_and_validate(&kept, &sampler)?;
    Ok((
        selected,
        ClusterSample {
            cluster,
            cycles: members.len(),
            outliers_screened: screened,
            removed,
            validation,
        },
    ))
}

pub fn cmd_sample(r: &Resolved) -> Result<SampleSummary> {
    let cycles = read_cycles(r)?;
    let mut by_cluster: BTreeMap<usize, Vec<MeltingCycle>> = BTreeMap::new();
    let mut unlabelled = 0;
    for c in cycles {
        match c.cluster {
            Some(k) => by_cluster.entry(k).or_default().push(c),
            None => unlabelled += 1,
        }
    }
    let results = by_cluster
        .par_iter()
        .map(|(&k, members)| sample_cluster(k, members, r))
        .collect::<Result<Vec<_>>>()?;

    let dir = r.output.join(SAMPLE_DIR);
    fresh_dir(&dir)?;
    write_effective_config(r)?;
    let mut failed = Vec::new();
    for (selected, info) in &results {
        let cdir = cluster_dir(&dir, info.cluster);
        ensure_dir(&cdir)?;
        let mut manifest = String::from("cluster,cycle_id\n");
        for c in selected {
            manifest.push_str(&format!("{},{}\n", info.cluster, c.id));
        }
        write_atomic(&cdir.join("manifest.csv"), manifest.as_bytes())?;
        write_json(&cdir.join("validation.json"), info)?;
        if !info.validation.pass {
            failed.push(info.cluster);
        }
    }
    let summary = SampleSummary {
        clusters: by_cluster.keys().copied().collect(),
        failed_validation: failed,
        unlabelled_cycles: unlabelled,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    cluster: usize,
    cycle_id: usize,
}

pub fn read_manifest(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    reader
        .deserialize::<ManifestRow>()
        .map(|row| {
            let row = row.map_err(|e| csv_error(path, e))?;
            Ok((row.cluster, row.cycle_id))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// discover

/// Graph file stems written per cluster, in output order.
pub fn graph_methods() -> Vec<&'static str> {
    TestKind::ALL.iter().map(|k| k.name()).chain([HYBRID]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDiscovery {
    pub cluster: usize,
    pub cycles: usize,
    pub rows: usize,
    /// `"ok"` or `"skipped"`.
    pub status: String,
    pub reason: Option<String>,
    pub variables_dropped: Vec<DroppedVariable>,
    /// Link count per method.
    pub links: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoverSummary {
    /// Variable ids shared by every analysed cluster (the graphs' universe).
    pub variables: Vec<usize>,
    /// Variables dropped from the universe because some cluster lost them.
    pub excluded_variables: Vec<usize>,
    pub clusters: Vec<ClusterDiscovery>,
}

struct Prepared {
    cluster: usize,
    cycles: usize,
    seq: Option<crate::sampler::RepresentativeSequence>,
    info: ClusterDiscovery,
}

fn skipped(info: &mut ClusterDiscovery, reason: String) {
    info.status = "skipped".into();
    info.reason = Some(reason);
}

/// Stitches, filters and standardizes one cluster's selected cycles.
fn prepare_cluster(
    cluster: usize,
    ids: &[usize],
    cycles: &BTreeMap<usize, MeltingCycle>,
    ds: &TimeSeriesDataset,
    r: &Resolved,
) -> Result<Prepared> {
    let mut info = ClusterDiscovery {
        cluster,
        cycles: ids.len(),
        rows: 0,
        status: "ok".into(),
        reason: None,
        variables_dropped: Vec::new(),
        links: BTreeMap::new(),
    };
    let selected = ids
        .iter()
        .map(|id| cycles.get(id).cloned().ok_or(Error::UnknownCycleId(*id)))
        .collect::<Result<Vec<_>>>()?;
    let mut attempt = || -> Result<crate::sampler::RepresentativeSequence> {
        let mut seq = concatenate(&selected, ds)?;
        if let Some(keep) = &r.config.variables.discover {
            let pos: Vec<usize> = keep.iter().filter_map(|&id| seq.data.position_of(id)).collect();
            seq.data = seq.data.select_positions(&pos);
        }
        let (data, dropped) = drop_sparse_variables(&seq.data, r.config.data.max_missing_fraction)?;
        let (data, report) = standardize(&data)?;
        info.variables_dropped = dropped.merge(report).variables_dropped;
        seq.data = data;
        Ok(seq)
    };
    let seq = match attempt() {
        Ok(s) => Some(s),
        Err(e) if e.kind() == ErrorKind::Data => {
            skipped(&mut info, e.to_string());
            None
        }
        Err(e) => return Err(e),
    };
    if let Some(s) = &seq {
        info.rows = s.data.n_rows();
    }
    Ok(Prepared {
        cluster,
        cycles: ids.len(),
        seq,
        info,
    })
}

/// Usable rows once every window reaching back `2 * tau_max` steps must lie
/// inside one cycle.
fn usable_rows(seq: &crate::sampler::RepresentativeSequence, tau_max: usize) -> usize {
    boundary_mask(seq.data.n_rows(), &seq.boundary_rows, 2 * tau_max)
        .into_iter()
        .filter(|&v| v)
        .count()
}

type ClusterGraphs = (Vec<(CausalGraph, LaggedAdjacency)>, CausalGraph, Vec<ResolvedConflict>);

fn discover_cluster(
    seq: &crate::sampler::RepresentativeSequence,
    cluster: usize,
    r: &Resolved,
) -> Result<ClusterGraphs> {
    let base = &r.config.discovery;
    let runs = TestKind::ALL
        .par_iter()
        .map(|&kind| {
            let mut c = base.with_test(kind);
            c.seed = stable_mix(base.seed, cluster as u64);
            run_pcmci_plus(seq, &c)
        })
        .collect::<Result<Vec<_>>>()?;
    let h = hybrid(&runs[0].1, &runs[1].1, &runs[2].1, &runs[3].1)?;
    let w4 = &runs[3].0;
    let hg = CausalGraph::from_adjacency(&h.matrix, &w4.variables, w4.lag_unit_s, HYBRID, Some(&h.provenance));
    Ok((runs, hg, h.resolved_conflicts))
}

pub fn cmd_discover(r: &Resolved) -> Result<DiscoverSummary> {
    let ds = load_trace(r)?;
    let cycles: BTreeMap<usize, MeltingCycle> = read_cycles(r)?.into_iter().map(|c| (c.id, c)).collect();
    let sample_dir = r.output.join(SAMPLE_DIR);
    let clusters = cluster_subdirs(&sample_dir)?;
    let mut prepared = Vec::new();
    for &k in &clusters {
        let manifest = read_manifest(&cluster_dir(&sample_dir, k).join("manifest.csv"))?;
        if let Some(&(other, _)) = manifest.iter().find(|(c, _)| *c != k) {
            return Err(Error::InvalidDataset(format!("manifest of cluster {k} lists cluster {other}")));
        }
        let ids: Vec<usize> = manifest.into_iter().map(|(_, id)| id).collect();
        prepared.push(prepare_cluster(k, &ids, &cycles, &ds, r)?);
    }

    // Graphs must share one variable universe for the cross-cluster comparison.
    let mut all_ids = BTreeSet::new();
    let mut universe: Option<BTreeSet<usize>> = None;
    for p in &prepared {
        if let Some(seq) = &p.seq {
            let ids: BTreeSet<usize> = seq.data.variables().iter().map(|v| v.index).collect();
            all_ids.extend(ids.iter().copied());
            universe = Some(match universe {
                None => ids,
                Some(u) => u.intersection(&ids).copied().collect(),
            });
        }
    }
    let universe: Vec<usize> = universe.unwrap_or_default().into_iter().collect();
    let tau_max = r.config.discovery.tau_max;
    let min_rows = r.config.discovery.ci.min_samples;
    for p in prepared.iter_mut() {
        let Some(seq) = p.seq.as_mut() else { continue };
        if universe.is_empty() {
            skipped(&mut p.info, "no variable is shared by all clusters".into());
            p.seq = None;
            continue;
        }
        let pos: Vec<usize> = universe.iter().filter_map(|&id| seq.data.position_of(id)).collect();
        seq.data = seq.data.select_positions(&pos);
        let usable = usable_rows(seq, tau_max);
        if usable < min_rows {
            skipped(
                &mut p.info,
                format!("too few samples: {usable} usable rows at tau_max {tau_max}, need {min_rows}"),
            );
            p.seq = None;
        }
    }

    let results = prepared
        .par_iter()
        .map(|p| match &p.seq {
            None => Ok(None),
            Some(seq) => match discover_cluster(seq, p.cluster, r) {
                Ok(g) => Ok(Some(Ok(g))),
                Err(e) if e.kind() == ErrorKind::Data => Ok(Some(Err(e.to_string()))),
                Err(e) => Err(e),
            },
        })
        .collect::<Result<Vec<_>>>()?;

    let dir = r.output.join(GRAPH_DIR);
    fresh_dir(&dir)?;
    write_effective_config(r)?;
    let mut infos = Vec::new();
    for (p, res) in prepared.iter().zip(results) {
        let mut info = p.info.clone();
        match res {
            None => {}
            Some(Err(reason)) => skipped(&mut info, reason),
            Some(Ok((runs, hg, conflicts))) => {
                let cdir = cluster_dir(&dir, p.cluster);
                ensure_dir(&cdir)?;
                let graphs = runs.iter().map(|(g, _)| g).chain([&hg]);
                for (g, name) in graphs.zip(graph_methods()) {
                    g.write_json(&cdir.join(format!("{name}.json")))?;
                    g.write_dot(&cdir.join(format!("{name}.dot")))?;
                    info.links.insert(name.to_string(), g.links.len());
                }
                write_json(&cdir.join("hybrid_conflicts.json"), &conflicts)?;
            }
        }
        debug_assert_eq!(info.cycles, p.cycles);
        infos.push(info);
    }
    let summary = DiscoverSummary {
        excluded_variables: all_ids.into_iter().filter(|id| !universe.contains(id)).collect(),
        variables: universe,
        clusters: infos,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// compare

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub method: String,
    pub clusters: Vec<usize>,
    pub pairs: usize,
}

/// Reads `graphs/cluster_<c>/<method>.json` for every cluster that has one.
pub fn read_cluster_graphs(graph_dir: &Path, method: &str) -> Result<BTreeMap<usize, CausalGraph>> {
    let mut out = BTreeMap::new();
    for k in cluster_subdirs(graph_dir)? {
        let path = cluster_dir(graph_dir, k).join(format!("{method}.json"));
        if path.is_file() {
            out.insert(k, CausalGraph::read_json(&path)?);
        }
    }
    Ok(out)
}

pub fn compare_graphs(graphs: &BTreeMap<usize, CausalGraph>, min_common: usize, dir: &Path) -> Result<usize> {
    fresh_dir(dir)?;
    let table = pair_frequency(graphs)?;
    table.write_csv(&dir.join("pair_frequency.csv"))?;
    write_atomic(&dir.join("report.txt"), text_report(graphs, min_common)?.as_bytes())?;
    write_json(&dir.join("common_specific.json"), &common_and_specific(graphs, min_common)?)?;
    write_json(&dir.join("feedback.json"), &detect_feedback_pairs(graphs))?;
    let lags = table
        .rows
        .iter()
        .map(|row| lag_summary(graphs, (row.source, row.target)))
        .collect::<Result<Vec<_>>>()?;
    write_json(&dir.join("lag_summary.json"), &lags)?;
    Ok(table.rows.len())
}

pub fn cmd_compare(r: &Resolved) -> Result<CompareSummary> {
    let method = &r.config.compare.method;
    let graphs = read_cluster_graphs(&r.output.join(GRAPH_DIR), method)?;
    write_effective_config(r)?;
    let pairs = compare_graphs(&graphs, r.config.compare.min_common, &r.output.join(COMPARE_DIR))?;
    Ok(CompareSummary {
        method: method.clone(),
        clusters: graphs.keys().copied().collect(),
        pairs,
    })
}

// ---------------------------------------------------------------------------
// all stages

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub segment: SegmentSummary,
    pub sample: SampleSummary,
    pub discover: DiscoverSummary,
    pub compare: CompareSummary,
}

pub fn cmd_pipeline(r: &Resolved) -> Result<PipelineSummary> {
    Ok(PipelineSummary {
        segment: cmd_segment(r)?,
        sample: cmd_sample(r)?,
        discover: cmd_discover(r)?,
        compare: cmd_compare(r)?,
    })
}
