//! Cross-cluster comparison of per-cluster causal graphs: pair occurrence
//! frequencies, common and cluster-specific pairs, lag summaries and feedback
//! pairs. Graph keys are cluster labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, Mark};
use crate::io;

pub type Pair = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRow {
    pub source: usize,
    pub target: usize,
    pub frequency: usize,
    pub clusters: Vec<usize>,
    pub min_lag: usize,
    pub max_lag: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairFrequencyTable {
    pub rows: Vec<PairRow>,
}

fn check_universe(graphs: &BTreeMap<usize, CausalGraph>) -> Result<()> {
    let mut ids = graphs.iter().map(|(c, g)| (c, g.variable_ids()));
    if let Some((c0, first)) = ids.next() {
        for (c, other) in ids {
            if other != first {
                return Err(Error::UniverseMismatch(format!(
                    "cluster {c} has variables {other:?}, cluster {c0} has {first:?}"
                )));
            }
        }
    }
    Ok(())
}

/// Directed `(source, target, lag)` links of a graph without self-pairs; an
/// unoriented or conflicting lag-0 link contributes both directions.
fn pair_links(g: &CausalGraph) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
    g.directed_edges().into_iter().filter(|e| e.0 != e.1)
}

/// A pair counts once per cluster with a link `a -> b` at any lag. Rows are
/// sorted by descending frequency, then pair.
pub fn pair_frequency(graphs: &BTreeMap<usize, CausalGraph>) -> Result<PairFrequencyTable> {
    check_universe(graphs)?;
    let mut acc: BTreeMap<Pair, (BTreeSet<usize>, usize, usize)> = BTreeMap::new();
    for (&cluster, g) in graphs {
        for (s, t, lag) in pair_links(g) {
            let e = acc.entry((s, t)).or_insert((BTreeSet::new(), lag, lag));
            e.0.insert(cluster);
            e.1 = e.1.min(lag);
            e.2 = e.2.max(lag);
        }
    }
    let mut rows: Vec<PairRow> = acc
        .into_iter()
        .map(|((source, target), (clusters, min_lag, max_lag))| PairRow {
            source,
            target,
            frequency: clusters.len(),
            clusters: clusters.into_iter().collect(),
            min_lag,
            max_lag,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.frequency
            .cmp(&a.frequency)
            .then((a.source, a.target).cmp(&(b.source, b.target)))
    });
    Ok(PairFrequencyTable { rows })
}

impl PairFrequencyTable {
    pub fn frequency_of(&self, pair: Pair) -> usize {
        self.rows
            .iter()
            .find(|r| (r.source, r.target) == pair)
            .map_or(0, |r| r.frequency)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("source,target,frequency,clusters,min_lag,max_lag\n");
        for r in &self.rows {
            let clusters: Vec<String> = r.clusters.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.source,
                r.target,
                r.frequency,
                clusters.join(";"),
                r.min_lag,
                r.max_lag
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_csv().as_bytes())
    }

    /// One line per frequency, highest first: `6  (5, 11)`.
    pub fn by_frequency(&self) -> Vec<(usize, Vec<Pair>)> {
        let mut out: Vec<(usize, Vec<Pair>)> = Vec::new();
        for r in &self.rows {
            match out.last_mut() {
                Some((f, pairs)) if *f == r.frequency => pairs.push((r.source, r.target)),
                _ => out.push((r.frequency, vec![(r.source, r.target)])),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CommonSpecific {
    pub common: Vec<Pair>,
    pub specific: BTreeMap<usize, Vec<Pair>>,
}

/// Common pairs occur in at least `min_common` clusters; specific pairs in
/// exactly one.
pub fn common_and_specific(
    graphs: &BTreeMap<usize, CausalGraph>,
    min_common: usize,
) -> Result<CommonSpecific> {
    if min_common < 2 {
        return Err(Error::Config(format!("min_common must be at least 2, got {min_common}")));
    }
    let table = pair_frequency(graphs)?;
    let mut out = CommonSpecific::default();
    for r in &table.rows {
        if r.frequency >= min_common {
            out.common.push((r.source, r.target));
        } else if r.frequency == 1 {
            out.specific
                .entry(r.clusters[0])
                .or_default()
                .push((r.source, r.target));
        }
    }
    for pairs in out.specific.values_mut() {
        pairs.sort_unstable();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSummary {
    pub pair: Pair,
    pub min_lag: usize,
    pub max_lag: usize,
    pub min_lag_s: f64,
    pub max_lag_s: f64,
    pub per_cluster: BTreeMap<usize, Vec<usize>>,
}

pub fn lag_summary(graphs: &BTreeMap<usize, CausalGraph>, pair: Pair) -> Result<LagSummary> {
    let mut per_cluster: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut unit = None;
    for (&cluster, g) in graphs {
        let lags: Vec<usize> = pair_links(g)
            .filter(|&(s, t, _)| (s, t) == pair)
            .map(|e| e.2)
            .collect();
        if !lags.is_empty() {
            unit.get_or_insert(g.lag_unit_s);
            per_cluster.insert(cluster, lags);
        }
    }
    let unit = unit.ok_or(Error::PairAbsent(pair.0, pair.1))?;
    let all = per_cluster.values().flatten();
    let min_lag = *all.clone().min().expect("non-empty");
    let max_lag = *all.max().expect("non-empty");
    Ok(LagSummary {
        pair,
        min_lag,
        max_lag,
        min_lag_s: min_lag as f64 * unit,
        max_lag_s: max_lag as f64 * unit,
        per_cluster,
    })
}

/// Per cluster, unordered pairs `(a, b)`, `a < b`, with an oriented link in
/// each direction at any lags. Unoriented and conflicting lag-0 links do not
/// count as a direction.
pub fn detect_feedback_pairs(graphs: &BTreeMap<usize, CausalGraph>) -> BTreeMap<usize, Vec<Pair>> {
    let mut out = BTreeMap::new();
    for (&cluster, g) in graphs {
        let oriented: BTreeSet<Pair> = g
            .links
            .iter()
            .filter(|l| l.source != l.target)
            .filter(|l| l.lag > 0 || l.mark == Some(Mark::Directed))
            .map(|l| (l.source, l.target))
            .collect();
        let pairs: Vec<Pair> = oriented
            .iter()
            .filter(|&&(a, b)| a < b && oriented.contains(&(b, a)))
            .copied()
            .collect();
        if !pairs.is_empty() {
            out.insert(cluster, pairs);
        }
    }
    out
}

fn fmt_pairs(pairs: &[Pair]) -> String {
    pairs
        .iter()
        .map(|(a, b)| format!("({a}, {b})"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Plain-text report: the frequency table, common and specific pairs, and
/// feedback pairs.
pub fn text_report(
    graphs: &BTreeMap<usize, CausalGraph>,
    min_common: usize,
) -> Result<String> {
    let table = pair_frequency(graphs)?;
    let cs = common_and_specific(graphs, min_common)?;
    let feedback = detect_feedback_pairs(graphs);
    let mut s = String::new();
    let _ = writeln!(s, "Occurrence frequency of causal pairs across {} clusters", graphs.len());
    let _ = writeln!(s, "Frequency  Causal pairs");
    for (f, pairs) in table.by_frequency() {
        let _ = writeln!(s, "{f:<9}  {}", fmt_pairs(&pairs));
    }
    let _ = writeln!(s, "\nCommon pairs (in >= {min_common} clusters): {}", fmt_pairs(&cs.common));
    let _ = writeln!(s, "Cluster-specific pairs:");
    for (c, pairs) in &cs.specific {
        let _ = writeln!(s, "  cluster {c}: {}", fmt_pairs(pairs));
    }
    let _ = writeln!(s, "Feedback pairs:");
    for (c, pairs) in &feedback {
        let _ = writeln!(s, "  cluster {c}: {}", fmt_pairs(pairs));
    }
    for &(a, b) in &cs.common {
        let l = lag_summary(graphs, (a, b))?;
        let _ = writeln!(
            s,
            "Lag ({a}, {b}): {}..{} steps ({}..{} s)",
            l.min_lag, l.max_lag, l.min_lag_s, l.max_lag_s
        );
    }
    Ok(s)
}
