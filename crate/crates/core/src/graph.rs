//! Lag-resolved adjacency structures and the exported causal graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::VariableMeta;
use crate::error::{Error, Result};
use crate::io;

/// Orientation of a contemporaneous (lag 0) link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mark {
    Directed,
    Unoriented,
    Conflict,
}

/// Where a link of the integrated graph came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Present in all three of the first matrices only.
    Consensus,
    /// Present in the fourth matrix only.
    W4,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkEntry {
    pub strength: f64,
    pub p_value: f64,
    /// Set for lag-0 entries only.
    pub mark: Option<Mark>,
}

/// `(source, target, lag)` entries over variable positions `0..n`.
///
/// Lag-0 conventions: a directed link is one entry; an unoriented or
/// conflicting link is stored as both `(i, j, 0)` and `(j, i, 0)` carrying
/// the same mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaggedAdjacency {
    /// Variable ids (schema indices) by position.
    pub variables: Vec<usize>,
    pub tau_max: usize,
    pub entries: BTreeMap<(usize, usize, usize), LinkEntry>,
}

impl LaggedAdjacency {
    pub fn new(variables: Vec<usize>, tau_max: usize) -> Self {
        Self {
            variables,
            tau_max,
            entries: BTreeMap::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn contains(&self, source: usize, target: usize, lag: usize) -> bool {
        self.entries.contains_key(&(source, target, lag))
    }

    pub fn get(&self, source: usize, target: usize, lag: usize) -> Option<&LinkEntry> {
        self.entries.get(&(source, target, lag))
    }

    pub fn insert(&mut self, source: usize, target: usize, lag: usize, entry: LinkEntry) {
        assert!(source < self.n_vars() && target < self.n_vars() && lag <= self.tau_max);
        assert!(lag > 0 || source != target, "self-link at lag 0");
        self.entries.insert((source, target, lag), entry);
    }

    pub fn remove(&mut self, source: usize, target: usize, lag: usize) -> Option<LinkEntry> {
        self.entries.remove(&(source, target, lag))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn same_universe(&self, other: &Self) -> Result<()> {
        if self.variables != other.variables || self.tau_max != other.tau_max {
            return Err(Error::UniverseMismatch(format!(
                "variables {:?}/tau_max {} vs {:?}/{}",
                self.variables, self.tau_max, other.variables, other.tau_max
            )));
        }
        Ok(())
    }

    /// Directed lag-0 edges `(from, to)`.
    pub fn directed_lag0(&self) -> Vec<(usize, usize)> {
        self.entries
            .iter()
            .filter(|(&(_, _, l), e)| l == 0 && e.mark == Some(Mark::Directed))
            .map(|(&(s, t, _), _)| (s, t))
            .collect()
    }

    /// True when the directed lag-0 edges contain no cycle.
    pub fn lag0_acyclic(&self) -> bool {
        directed_cycle_edges(self.n_vars(), &self.directed_lag0()).is_empty()
    }
}

/// Edges of `edges` that lie on a directed cycle.
pub fn directed_cycle_edges(n: usize, edges: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
    let mut out = vec![Vec::new(); n];
    for &(a, b) in edges {
        out[a].push(b);
    }
    let reaches = |from: usize, to: usize| {
        let mut seen = vec![false; n];
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            if u == to {
                return true;
            }
            if std::mem::replace(&mut seen[u], true) {
                continue;
            }
            stack.extend(out[u].iter().copied());
        }
        false
    };
    edges
        .iter()
        .copied()
        .filter(|&(a, b)| reaches(b, a))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphLink {
    pub source: usize,
    pub target: usize,
    pub lag: usize,
    pub strength: f64,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mark: Option<Mark>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Exported graph. Link endpoints are variable ids; unoriented and conflicting
/// lag-0 links appear once with `source < target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub method: String,
    pub variables: Vec<VariableMeta>,
    pub tau_max: usize,
    pub lag_unit_s: f64,
    pub links: Vec<GraphLink>,
}

impl CausalGraph {
    pub fn from_adjacency(
        adj: &LaggedAdjacency,
        variables: &[VariableMeta],
        lag_unit_s: f64,
        method: &str,
        provenance: Option<&BTreeMap<(usize, usize, usize), Provenance>>,
    ) -> Self {
        assert_eq!(variables.len(), adj.n_vars());
        let mut links = Vec::new();
        for (&(s, t, l), e) in &adj.entries {
            let paired = l == 0 && matches!(e.mark, Some(Mark::Unoriented | Mark::Conflict));
            let id_s = adj.variables[s];
            let id_t = adj.variables[t];
            if paired && adj.contains(t, s, 0) && id_s > id_t {
                continue;
            }
            links.push(GraphLink {
                source: id_s,
                target: id_t,
                lag: l,
                strength: e.strength,
                p_value: e.p_value,
                mark: e.mark,
                provenance: provenance.and_then(|p| p.get(&(s, t, l)).copied()),
            });
        }
        links.sort_by(|a, b| (a.source, a.target, a.lag).cmp(&(b.source, b.target, b.lag)));
        Self {
            method: method.to_string(),
            variables: variables.to_vec(),
            tau_max: adj.tau_max,
            lag_unit_s,
            links,
        }
    }

    pub fn variable_ids(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.index).collect()
    }

    /// Lag-resolved directed edges `(source, target, lag)`; an unoriented or
    /// conflicting lag-0 link contributes both directions.
    pub fn directed_edges(&self) -> BTreeSet<(usize, usize, usize)> {
        let mut out = BTreeSet::new();
        for l in &self.links {
            out.insert((l.source, l.target, l.lag));
            if l.lag == 0 && matches!(l.mark, Some(Mark::Unoriented | Mark::Conflict)) {
                out.insert((l.target, l.source, 0));
            }
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&io::read_to_string(path)?)?)
    }

    /// Graphviz rendering: edge label is the lag, width and colour are
    /// bucketed by |strength|.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph causal {\n  rankdir=LR;\n  node [shape=ellipse];\n");
        for v in &self.variables {
            let _ = writeln!(s, "  v{} [label=\"{} ({})\"];", v.index, v.name, v.index);
        }
        for l in &self.links {
            let (width, colour) = strength_bucket(l.strength.abs());
            let style = match l.mark {
                Some(Mark::Unoriented) => ", dir=none",
                Some(Mark::Conflict) => ", dir=both, style=dashed",
                _ => "",
            };
            let _ = writeln!(
                s,
                "  v{} -> v{} [label=\"{}\", penwidth={}, color=\"{}\"{}];",
                l.source, l.target, l.lag, width, colour, style
            );
        }
        s.push_str("}\n");
        s
    }

    pub fn write_dot(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_dot().as_bytes())
    }
}

pub fn strength_bucket(abs_strength: f64) -> (u32, &'static str) {
    if abs_strength < 0.1 {
        (1, "gray60")
    } else if abs_strength < 0.3 {
        (2, "steelblue")
    } else if abs_strength < 0.5 {
        (3, "darkorange")
    } else {
        (4, "firebrick")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Role;

    fn entry(strength: f64, mark: Option<Mark>) -> LinkEntry {
        LinkEntry {
            strength,
            p_value: 0.001,
            mark,
        }
    }

    #[test]
    fn export_collapses_paired_lag0_links() {
        let vars = vec![
            VariableMeta::new(3, "a", "", Role::Process),
            VariableMeta::new(5, "b", "", Role::Process),
            VariableMeta::new(8, "c", "", Role::Process),
        ];
        let mut adj = LaggedAdjacency::new(vec![3, 5, 8], 2);
        adj.insert(0, 1, 0, entry(0.4, Some(Mark::Unoriented)));
        adj.insert(1, 0, 0, entry(0.4, Some(Mark::Unoriented)));
        adj.insert(2, 1, 0, entry(-0.2, Some(Mark::Directed)));
        adj.insert(0, 2, 2, entry(0.7, None));
        let g = CausalGraph::from_adjacency(&adj, &vars, 10.0, "robust_parcorr", None);
        let triples: Vec<_> = g.links.iter().map(|l| (l.source, l.target, l.lag)).collect();
        assert_eq!(triples, vec![(3, 5, 0), (3, 8, 2), (8, 5, 0)]);
        assert_eq!(
            g.directed_edges(),
            [(3, 5, 0), (5, 3, 0), (3, 8, 2), (8, 5, 0)].into_iter().collect()
        );
        let dot = g.to_dot();
        assert!(dot.contains("v3 -> v8 [label=\"2\", penwidth=4, color=\"firebrick\"]"));
        assert!(dot.contains("dir=none"));
    }

    #[test]
    fn cycle_edges() {
        let e = [(0, 1), (1, 2), (2, 0), (2, 3)];
        let c = directed_cycle_edges(4, &e);
        assert_eq!(c, [(0, 1), (1, 2), (2, 0)].into_iter().collect());
        assert!(directed_cycle_edges(3, &[(0, 1), (1, 2), (0, 2)]).is_empty());
    }

    #[test]
    fn json_round_trip() {
        let vars = vec![
            VariableMeta::new(1, "a", "", Role::Process),
            VariableMeta::new(2, "b", "", Role::Energy),
        ];
        let mut adj = LaggedAdjacency::new(vec![1, 2], 1);
        adj.insert(0, 1, 1, entry(0.25, None));
        let g = CausalGraph::from_adjacency(&adj, &vars, 10.0, "gpdc", None);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.json");
        g.write_json(&p).unwrap();
        assert_eq!(CausalGraph::read_json(&p).unwrap(), g);
    }
}
