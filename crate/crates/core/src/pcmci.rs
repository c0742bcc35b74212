//! PCMCI+ over a (possibly stitched) multivariate sequence.
//!
//! Phases: lagged condition selection (PC with the strongest-p conditions),
//! contemporaneous skeleton with separating sets, lag-0 orientation, then
//! MCI tests of every surviving link. Variables are handled in ascending id
//! order internally, so column order of the input does not matter.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci::{run_ci_test, CIConfig, CIQuery, CITestResult, TestKind};
use crate::dataset::{TimeSeriesDataset, VariableMeta};
use crate::error::{Error, Result};
use crate::graph::{directed_cycle_edges, CausalGraph, LaggedAdjacency, LinkEntry, Mark};
use crate::rng::{hash_words, stable_mix};
use crate::sampler::RepresentativeSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdrMethod {
    /// No multiple-testing correction.
    #[default]
    None,
    /// Benjamini-Hochberg over every candidate link (untested links count with p = 1).
    Bh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscoveryConfig {
    pub tau_max: usize,
    pub pc_alpha: f64,
    pub mci_alpha: f64,
    pub ci_test: TestKind,
    pub max_conds_dim: Option<usize>,
    pub fdr: FdrMethod,
    pub ci: CIConfig,
    pub seed: u64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            tau_max: 5,
            pc_alpha: 0.05,
            mci_alpha: 0.05,
            ci_test: TestKind::RobustParCorr,
            max_conds_dim: Some(3),
            fdr: FdrMethod::None,
            ci: CIConfig::default(),
            seed: 0,
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_max == 0 {
            return Err(Error::Config("tau_max must be at least 1".into()));
        }
        for (name, a) in [("pc_alpha", self.pc_alpha), ("mci_alpha", self.mci_alpha)] {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!("{name} = {a} outside (0, 1)")));
            }
        }
        self.ci.validate()
    }

    pub fn with_test(&self, kind: TestKind) -> Self {
        Self {
            ci_test: kind,
            ..self.clone()
        }
    }
}

/// Row `t` may be used by a query reaching back `max_lag` steps iff
/// `t >= max_lag` and no cycle starts inside `(t - max_lag, t]`.
pub fn boundary_mask(n_rows: usize, boundary_rows: &[usize], max_lag: usize) -> Vec<bool> {
    let mut mask: Vec<bool> = (0..n_rows).map(|t| t >= max_lag).collect();
    for &b in boundary_rows {
        for t in b..(b + max_lag).min(n_rows) {
            mask[t] = false;
        }
    }
    mask
}

/// `(variable position, lag)`; lag `τ` means the value at `t - τ`.
pub type Node = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParentLink {
    pub source: usize,
    pub lag: usize,
    pub strength: f64,
    pub p_value: f64,
}

/// Lagged parents per target position, strongest first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParentsMap {
    pub parents: Vec<Vec<ParentLink>>,
}

impl ParentsMap {
    pub fn nodes(&self, target: usize) -> Vec<Node> {
        self.parents[target].iter().map(|p| (p.source, p.lag)).collect()
    }

    pub fn contains(&self, target: usize, source: usize, lag: usize) -> bool {
        self.parents[target].iter().any(|p| p.source == source && p.lag == lag)
    }
}

/// Lag-0 skeleton plus the separating sets of removed pairs (keyed `i < j`).
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub adjacency: LaggedAdjacency,
    pub sepsets: BTreeMap<(usize, usize), Vec<usize>>,
}

/// One issued CI query, recorded when logging is switched on.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub x: Node,
    pub y: Node,
    pub z: Vec<Node>,
    pub max_lag: usize,
    pub rows: Vec<usize>,
}

pub struct Engine {
    columns: Vec<Vec<f64>>,
    variables: Vec<VariableMeta>,
    ids: Vec<usize>,
    lag_unit_s: f64,
    valid_rows: Vec<Vec<usize>>,
    cfg: DiscoveryConfig,
    log: Option<Mutex<Vec<QueryRecord>>>,
}

impl Engine {
    pub fn new(seq: &RepresentativeSequence, cfg: &DiscoveryConfig) -> Result<Self> {
        cfg.validate()?;
        let ds: &TimeSeriesDataset = &seq.data;
        let n_rows = ds.n_rows();
        if seq.boundary_rows.iter().any(|&b| b >= n_rows || b == 0) {
            return Err(Error::InvalidDataset("boundary row outside the sequence".into()));
        }
        let mut order: Vec<usize> = (0..ds.n_vars()).collect();
        order.sort_by_key(|&p| ds.variables()[p].index);
        let columns = order.iter().map(|&p| ds.column(p).to_vec()).collect();
        let variables: Vec<VariableMeta> = order.iter().map(|&p| ds.variables()[p].clone()).collect();
        let valid_rows = (0..=2 * cfg.tau_max)
            .map(|lag| {
                boundary_mask(n_rows, &seq.boundary_rows, lag)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v)
                    .map(|(t, _)| t)
                    .collect()
            })
            .collect();
        Ok(Self {
            columns,
            ids: variables.iter().map(|v| v.index).collect(),
            variables,
            lag_unit_s: ds.sample_interval_s(),
            valid_rows,
            cfg: cfg.clone(),
            log: None,
        })
    }

    pub fn with_query_log(mut self) -> Self {
        self.log = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn query_log(&self) -> Vec<QueryRecord> {
        self.log
            .as_ref()
            .map(|m| m.lock().expect("query log poisoned").clone())
            .unwrap_or_default()
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn variables(&self) -> &[VariableMeta] {
        &self.variables
    }

    pub fn config(&self) -> &DiscoveryConfig {
        &self.cfg
    }

    fn node_word(&self, n: Node) -> u64 {
        ((self.ids[n.0] as u64) << 16) | n.1 as u64
    }

    fn query_seed(&self, x: Node, y: Node, z: &[Node]) -> u64 {
        let (a, b) = (self.node_word(x), self.node_word(y));
        let mut words = vec![a.min(b), a.max(b)];
        words.extend(z.iter().map(|&n| self.node_word(n)));
        stable_mix(self.cfg.seed, hash_words(&words))
    }

    fn build_query(&self, x: Node, y: Node, z: &[Node], rows: &[usize]) -> Result<CIQuery> {
        let col = |n: Node| -> Vec<f64> { rows.iter().map(|&t| self.columns[n.0][t - n.1]).collect() };
        let zc: Vec<Vec<f64>> = z.iter().map(|&n| col(n)).collect();
        let zr: Vec<&[f64]> = zc.iter().map(|c| c.as_slice()).collect();
        CIQuery::listwise(&col(x), &col(y), &zr)
    }

    /// Tests `x ⊥ y | z` on the rows valid for the largest lag involved.
    pub fn test(&self, x: Node, y: Node, z: &[Node]) -> Result<CITestResult> {
        let mut z: Vec<Node> = z.iter().copied().filter(|&n| n != x && n != y).collect();
        z.sort_unstable();
        z.dedup();
        let max_lag = z.iter().chain([&x, &y]).map(|n| n.1).max().unwrap_or(0);
        let rows = &self.valid_rows[max_lag];
        if let Some(log) = &self.log {
            log.lock().expect("query log poisoned").push(QueryRecord {
                x,
                y,
                z: z.clone(),
                max_lag,
                rows: rows.clone(),
            });
        }
        let q = self.build_query(x, y, &z, rows)?;
        let seed = self.query_seed(x, y, &z);
        match run_ci_test(self.cfg.ci_test, &q, &self.cfg.ci, seed) {
            Err(Error::DegenerateConditioning) => {
                let pruned = CIQuery::new(q.x, q.y, prune_collinear(q.z))?;
                run_ci_test(self.cfg.ci_test, &pruned, &self.cfg.ci, seed)
            }
            r => r,
        }
    }

    // -----------------------------------------------------------------------
    // lagged condition selection

    fn select_for_target(&self, j: usize) -> Result<Vec<ParentLink>> {
        let tau_max = self.cfg.tau_max;
        let mut cands: Vec<ParentLink> = (0..self.n_vars())
            .flat_map(|i| {
                (1..=tau_max).map(move |lag| ParentLink {
                    source: i,
                    lag,
                    strength: 0.0,
                    p_value: 0.0,
                })
            })
            .collect();
        let mut p = 0;
        loop {
            if cands.len() <= p || self.cfg.max_conds_dim.is_some_and(|m| p > m) {
                break;
            }
            let mut next = Vec::with_capacity(cands.len());
            for (k, c) in cands.iter().enumerate() {
                let conds: Vec<Node> = cands
                    .iter()
                    .enumerate()
                    .filter(|&(o, _)| o != k)
                    .take(p)
                    .map(|(_, o)| (o.source, o.lag))
                    .collect();
                let r = self.test((c.source, c.lag), (j, 0), &conds)?;
                if r.p_value <= self.cfg.pc_alpha {
                    next.push(ParentLink {
                        source: c.source,
                        lag: c.lag,
                        strength: r.statistic,
                        p_value: r.p_value,
                    });
                }
            }
            sort_by_strength(&mut next);
            cands = next;
            p += 1;
        }
        Ok(cands)
    }

    pub fn pc_condition_selection(&self) -> Result<ParentsMap> {
        let parents = (0..self.n_vars())
            .into_par_iter()
            .map(|j| self.select_for_target(j))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParentsMap { parents })
    }

    // -----------------------------------------------------------------------
    // contemporaneous skeleton

    fn lagged_conditions(&self, parents: &ParentsMap, i: usize, j: usize) -> Vec<Node> {
        let mut z: BTreeSet<Node> = parents.nodes(i).into_iter().collect();
        z.extend(parents.nodes(j));
        z.into_iter().collect()
    }

    /// Lag-0 pairs are tested given their lagged parents plus size-`p`
    /// subsets of either endpoint's contemporaneous adjacents. Lagged links
    /// that survived condition selection are re-tested from `p = 1` given
    /// their MCI conditions plus size-`p` subsets of the target's adjacents,
    /// which removes lagged links explained by a contemporaneous path.
    pub fn build_contemporaneous_skeleton(&self, parents: &ParentsMap) -> Result<Skeleton> {
        let n = self.n_vars();
        let mut adj: Vec<BTreeSet<usize>> = (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect();
        let mut sepsets = BTreeMap::new();
        let mut last: BTreeMap<(usize, usize), CITestResult> = BTreeMap::new();
        let mut lagged: BTreeSet<(usize, usize, usize)> = parents
            .parents
            .iter()
            .enumerate()
            .flat_map(|(j, ps)| ps.iter().map(move |pl| (pl.source, j, pl.lag)))
            .collect();
        let max_p = self.cfg.max_conds_dim.unwrap_or(usize::MAX);
        let mut p = 0;
        while p <= max_p {
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| adj[i].contains(&j) && (adj[i].len() > p || adj[j].len() > p))
                .collect();
            let links: Vec<(usize, usize, usize)> = lagged
                .iter()
                .filter(|&&(_, j, _)| p > 0 && adj[j].len() >= p)
                .copied()
                .collect();
            if pairs.is_empty() && links.is_empty() {
                break;
            }
            let frozen = adj.clone();
            let outcomes = pairs
                .par_iter()
                .map(|&(i, j)| {
                    let lagged = self.lagged_conditions(parents, i, j);
                    let mut tried = BTreeSet::new();
                    let mut weakest: Option<CITestResult> = None;
                    for (a, b) in [(i, j), (j, i)] {
                        let pool: Vec<usize> = frozen[a].iter().copied().filter(|&k| k != b).collect();
                        for s in combinations(&pool, p) {
                            if !tried.insert(s.clone()) {
                                continue;
                            }
                            let mut z = lagged.clone();
                            z.extend(s.iter().map(|&k| (k, 0)));
                            let r = self.test((i, 0), (j, 0), &z)?;
                            if r.p_value > self.cfg.pc_alpha {
                                return Ok(((i, j), Some(s), r));
                            }
                            if weakest.as_ref().is_none_or(|w| r.p_value > w.p_value) {
                                weakest = Some(r);
                            }
                        }
                    }
                    Ok(((i, j), None, weakest.expect("at least one subset")))
                })
                .collect::<Result<Vec<_>>>()?;
            let removed_links = links
                .par_iter()
                .map(|&(i, j, lag)| {
                    let base = self.mci_conditions(parents, (i, lag), j);
                    let pool: Vec<usize> = frozen[j].iter().copied().collect();
                    for s in combinations(&pool, p) {
                        let mut z = base.clone();
                        z.extend(s.iter().map(|&k| (k, 0)));
                        if self.test((i, lag), (j, 0), &z)?.p_value > self.cfg.pc_alpha {
                            return Ok(Some((i, j, lag)));
                        }
                    }
                    Ok(None)
                })
                .collect::<Result<Vec<_>>>()?;
            for link in removed_links.into_iter().flatten() {
                lagged.remove(&link);
            }
            for ((i, j), sep, r) in outcomes {
                match sep {
                    Some(s) => {
                        adj[i].remove(&j);
                        adj[j].remove(&i);
                        last.remove(&(i, j));
                        sepsets.insert((i, j), s);
                    }
                    None => {
                        last.insert((i, j), r);
                    }
                }
            }
            p += 1;
        }
        let mut adjacency = LaggedAdjacency::new(self.ids.clone(), self.cfg.tau_max);
        for (j, ps) in parents.parents.iter().enumerate() {
            for pl in ps.iter().filter(|pl| lagged.contains(&(pl.source, j, pl.lag))) {
                adjacency.insert(
                    pl.source,
                    j,
                    pl.lag,
                    LinkEntry {
                        strength: pl.strength,
                        p_value: pl.p_value,
                        mark: None,
                    },
                );
            }
        }
        for ((i, j), r) in last {
            let e = LinkEntry {
                strength: r.statistic,
                p_value: r.p_value,
                mark: Some(Mark::Unoriented),
            };
            adjacency.insert(i, j, 0, e);
            adjacency.insert(j, i, 0, e);
        }
        Ok(Skeleton { adjacency, sepsets })
    }

    // -----------------------------------------------------------------------
    // MCI

    fn mci_conditions(&self, parents: &ParentsMap, x: Node, j: usize) -> Vec<Node> {
        let (i, tau) = x;
        let mut z: BTreeSet<Node> = parents.nodes(j).into_iter().filter(|&n| n != x).collect();
        z.extend(parents.nodes(i).into_iter().map(|(k, l)| (k, l + tau)));
        z.into_iter().collect()
    }

    pub fn mci_tests(&self, parents: &ParentsMap, oriented: &LaggedAdjacency) -> Result<LaggedAdjacency> {
        let mut links: Vec<(Node, usize)> = oriented
            .entries
            .keys()
            .filter(|k| k.2 > 0)
            .map(|&(s, t, lag)| ((s, lag), t))
            .collect();
        let lag0: Vec<(usize, usize)> = oriented
            .entries
            .keys()
            .filter(|k| k.2 == 0)
            .map(|&(s, t, _)| (s.min(t), s.max(t)))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        links.extend(lag0.iter().map(|&(i, j)| ((i, 0), j)));
        let results = links
            .par_iter()
            .map(|&(x, j)| self.test(x, (j, 0), &self.mci_conditions(parents, x, j)))
            .collect::<Result<Vec<_>>>()?;

        let n = self.n_vars();
        let n_candidates = n * n * self.cfg.tau_max + n * (n - 1) / 2;
        let p_values: Vec<f64> = results.iter().map(|r| r.p_value).collect();
        let adjusted = match self.cfg.fdr {
            FdrMethod::None => p_values,
            FdrMethod::Bh => benjamini_hochberg(&p_values, n_candidates),
        };

        let mut out = LaggedAdjacency::new(self.ids.clone(), self.cfg.tau_max);
        for ((&(x, j), r), &p) in links.iter().zip(&results).zip(&adjusted) {
            if p > self.cfg.mci_alpha {
                continue;
            }
            let (i, lag) = x;
            if lag > 0 {
                out.insert(
                    i,
                    j,
                    lag,
                    LinkEntry {
                        strength: r.statistic,
                        p_value: p,
                        mark: None,
                    },
                );
                continue;
            }
            for (s, t) in [(i, j), (j, i)] {
                if let Some(e) = oriented.get(s, t, 0) {
                    out.insert(
                        s,
                        t,
                        0,
                        LinkEntry {
                            strength: r.statistic,
                            p_value: p,
                            mark: e.mark,
                        },
                    );
                }
            }
        }
        Ok(out)
    }

    pub fn run(&self) -> Result<PcmciOutput> {
        let parents = self.pc_condition_selection()?;
        let skeleton = self.build_contemporaneous_skeleton(&parents)?;
        let oriented = orient_contemporaneous(&skeleton);
        let adjacency = self.mci_tests(&parents, &oriented)?;
        let graph = CausalGraph::from_adjacency(
            &adjacency,
            &self.variables,
            self.lag_unit_s,
            self.cfg.ci_test.name(),
            None,
        );
        Ok(PcmciOutput {
            graph,
            adjacency,
            parents,
            skeleton,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PcmciOutput {
    pub graph: CausalGraph,
    pub adjacency: LaggedAdjacency,
    pub parents: ParentsMap,
    pub skeleton: Skeleton,
}

pub fn run_pcmci_plus(seq: &RepresentativeSequence, cfg: &DiscoveryConfig) -> Result<(CausalGraph, LaggedAdjacency)> {
    let out = Engine::new(seq, cfg)?.run()?;
    Ok((out.graph, out.adjacency))
}

fn sort_by_strength(links: &mut [ParentLink]) {
    links.sort_by(|a, b| {
        b.strength
            .abs()
            .total_cmp(&a.strength.abs())
            .then((a.source, a.lag).cmp(&(b.source, b.lag)))
    });
}

/// All `k`-subsets of `pool` in lexicographic order.
pub fn combinations(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(pool: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..pool.len() {
            if pool.len() - i < k - cur.len() {
                break;
            }
            cur.push(pool[i]);
            rec(pool, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(pool, k, 0, &mut cur, &mut out);
    out
}

/// Benjamini-Hochberg adjusted p-values; `m >= p.len()` counts untested
/// hypotheses as p = 1.
pub fn benjamini_hochberg(p: &[f64], m: usize) -> Vec<f64> {
    let m = m.max(p.len());
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut adj = vec![0.0; p.len()];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        adj[i] = running.min(1.0);
    }
    adj
}

/// Greedy Gram-Schmidt: keeps a column only if it adds a direction not
/// spanned by the intercept and the columns kept so far.
fn prune_collinear(z: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = z.first().map_or(0, |c| c.len());
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (n as f64).sqrt(); n]];
    let mut kept = Vec::new();
    for col in z {
        let norm0: f64 = col.iter().map(|v| v * v).sum();
        let mut r = col.clone();
        for b in &basis {
            let d: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
            r.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm: f64 = r.iter().map(|v| v * v).sum();
        if norm > 1e-8 * norm0.max(1e-300) {
            let s = norm.sqrt();
            basis.push(r.iter().map(|v| v / s).collect());
            kept.push(col);
        }
    }
    kept
}

// ---------------------------------------------------------------------------
// orientation

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EdgeState {
    Undirected,
    Directed(usize, usize),
    Conflict,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn orient(edges: &mut BTreeMap<(usize, usize), EdgeState>, from: usize, to: usize) {
    let e = edges.get_mut(&key(from, to)).expect("orienting an absent edge");
    *e = match *e {
        EdgeState::Undirected => EdgeState::Directed(from, to),
        EdgeState::Directed(a, b) if (a, b) == (to, from) => EdgeState::Conflict,
        other => other,
    };
}

/// Orients lag-0 skeleton edges: unshielded colliders from the separating
/// sets, then chain propagation and cycle avoidance to a fixpoint. Edges that
/// receive both directions, or end up on a directed cycle, are marked
/// conflict. Lagged entries pass through unchanged.
pub fn orient_contemporaneous(skeleton: &Skeleton) -> LaggedAdjacency {
    let adj = &skeleton.adjacency;
    let n = adj.n_vars();
    let mut edges: BTreeMap<(usize, usize), EdgeState> = adj
        .entries
        .keys()
        .filter(|k| k.2 == 0)
        .map(|&(s, t, _)| (key(s, t), EdgeState::Undirected))
        .collect();
    let adjacent = |edges: &BTreeMap<(usize, usize), EdgeState>, a: usize, b: usize| edges.contains_key(&key(a, b));
    let neighbours = |edges: &BTreeMap<(usize, usize), EdgeState>, k: usize| -> Vec<usize> {
        (0..n).filter(|&o| o != k && edges.contains_key(&key(o, k))).collect()
    };

    // unshielded colliders
    let mut proposals = Vec::new();
    for k in 0..n {
        let nb = neighbours(&edges, k);
        for (x, &i) in nb.iter().enumerate() {
            for &j in &nb[x + 1..] {
                if adjacent(&edges, i, j) {
                    continue;
                }
                let in_sepset = skeleton.sepsets.get(&key(i, j)).is_some_and(|s| s.contains(&k));
                if !in_sepset {
                    proposals.push((i, k));
                    proposals.push((j, k));
                }
            }
        }
    }
    for (a, b) in proposals {
        orient(&mut edges, a, b);
    }

    // chain propagation and cycle avoidance
    loop {
        let mut proposals = Vec::new();
        let directed: Vec<(usize, usize)> = edges
            .values()
            .filter_map(|e| match e {
                EdgeState::Directed(a, b) => Some((*a, *b)),
                _ => None,
            })
            .collect();
        for (&(a, b), e) in &edges {
            if *e != EdgeState::Undirected {
                continue;
            }
            for (k, j) in [(a, b), (b, a)] {
                // i -> k, k - j, i and j non-adjacent: k -> j
                if directed.iter().any(|&(i, t)| t == k && i != j && !adjacent(&edges, i, j)) {
                    proposals.push((k, j));
                }
                // directed path k ~> j: k -> j
                if reaches(n, &directed, k, j) {
                    proposals.push((k, j));
                }
            }
        }
        if proposals.is_empty() {
            break;
        }
        let before = edges.clone();
        for (a, b) in proposals {
            orient(&mut edges, a, b);
        }
        if edges == before {
            break;
        }
    }

    let directed: Vec<(usize, usize)> = edges
        .values()
        .filter_map(|e| match e {
            EdgeState::Directed(a, b) => Some((*a, *b)),
            _ => None,
        })
        .collect();
    for (a, b) in directed_cycle_edges(n, &directed) {
        edges.insert(key(a, b), EdgeState::Conflict);
    }

    let mut out = LaggedAdjacency::new(adj.variables.clone(), adj.tau_max);
    for (&(s, t, l), &e) in &adj.entries {
        if l > 0 {
            out.insert(s, t, l, e);
            continue;
        }
        let state = edges[&key(s, t)];
        let mark = match state {
            EdgeState::Undirected => Mark::Unoriented,
            EdgeState::Conflict => Mark::Conflict,
            EdgeState::Directed(a, b) => {
                if (a, b) != (s, t) {
                    continue;
                }
                Mark::Directed
            }
        };
        out.insert(s, t, 0, LinkEntry { mark: Some(mark), ..e });
    }
    out
}

fn reaches(n: usize, directed: &[(usize, usize)], from: usize, to: usize) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![from];
    while let Some(u) = stack.pop() {
        if std::mem::replace(&mut seen[u], true) {
            continue;
        }
        for &(a, b) in directed {
            if a == u {
                if b == to {
                    return true;
                }
                stack.push(b);
            }
        }
    }
    false
}
