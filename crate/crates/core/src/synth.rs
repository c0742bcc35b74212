//! Synthetic lagged structural causal models with known ground truth, and
//! scoring of discovered graphs against it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci::TestKind;
use crate::dataset::{Role, TimeSeriesDataset, VariableMeta};
use crate::error::{Error, Result};
use crate::graph::{CausalGraph, LaggedAdjacency};
use crate::hybrid::hybrid;
use crate::io;
use crate::pcmci::{run_pcmci_plus, DiscoveryConfig};
use crate::rng::{rng_from, stable_mix};
use crate::sampler::RepresentativeSequence;

pub const BURN_IN: usize = 200;
pub const MAX_SPECTRAL_RADIUS: f64 = 0.98;
pub const BLOW_UP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Function {
    #[default]
    Linear,
    Quadratic,
    Tanh,
}

impl Function {
    fn apply(self, u: f64) -> f64 {
        match self {
            Function::Linear => u,
            Function::Quadratic => u * u,
            Function::Tanh => u.tanh(),
        }
    }
}

/// `source` and `target` are variable positions `0..n_vars`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SCMEdge {
    pub source: usize,
    pub target: usize,
    pub lag: usize,
    pub coefficient: f64,
    #[serde(default)]
    pub function: Function,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    Uniform,
    /// Gaussian scaled by `1 + |sum of parent contributions|`.
    Heteroskedastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub distribution: NoiseDistribution,
    pub scale: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            distribution: NoiseDistribution::Gaussian,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SCMSpec {
    pub n_vars: usize,
    pub edges: Vec<SCMEdge>,
    /// One entry per variable; empty means unit Gaussian everywhere.
    #[serde(default)]
    pub noise: Vec<NoiseSpec>,
    /// Lag-1 self coefficient per variable; empty means zero.
    #[serde(default)]
    pub autocorr: Vec<f64>,
    #[serde(rename = "T")]
    pub t: usize,
    pub seed: u64,
}

/// Lag-resolved true links over variable ids (`position + 1`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthGraph {
    pub variables: Vec<usize>,
    pub tau_max: usize,
    /// `(source id, target id, lag)`, including lag-1 autocorrelation self-links.
    pub edges: BTreeSet<(usize, usize, usize)>,
}

impl SCMSpec {
    fn noise_of(&self, j: usize) -> NoiseSpec {
        self.noise.get(j).copied().unwrap_or_default()
    }

    fn autocorr_of(&self, j: usize) -> f64 {
        self.autocorr.get(j).copied().unwrap_or(0.0)
    }

    pub fn max_lag(&self) -> usize {
        let ar = usize::from(self.autocorr.iter().any(|&a| a != 0.0));
        self.edges.iter().map(|e| e.lag).max().unwrap_or(0).max(ar)
    }

    /// Lag-0 evaluation order; fails when the lag-0 edges contain a cycle.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.n_vars;
        let mut indeg = vec![0usize; n];
        let mut out = vec![Vec::new(); n];
        for e in self.edges.iter().filter(|e| e.lag == 0) {
            indeg[e.target] += 1;
            out[e.source].push(e.target);
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&j| indeg[j] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(j) = ready.pop_first() {
            order.push(j);
            for &k in &out[j] {
                indeg[k] -= 1;
                if indeg[k] == 0 {
                    ready.insert(k);
                }
            }
        }
        if order.len() != n {
            return Err(Error::UnstableSpec("lag-0 edges contain a cycle".into()));
        }
        Ok(order)
    }

    /// Spectral radius of the companion matrix of the linear part (linear
    /// edges, tanh edges at their slope at zero, and autocorrelation).
    pub fn spectral_radius(&self) -> Result<f64> {
        let n = self.n_vars;
        let l = self.max_lag().max(1);
        let mut a = vec![DMatrix::<f64>::zeros(n, n); l + 1];
        for e in &self.edges {
            if e.function != Function::Quadratic {
                a[e.lag][(e.target, e.source)] += e.coefficient;
            }
        }
        for j in 0..n {
            a[1][(j, j)] += self.autocorr_of(j);
        }
        let inv = (DMatrix::identity(n, n) - &a[0])
            .try_inverse()
            .ok_or_else(|| Error::UnstableSpec("I - A0 is singular".into()))?;
        let mut c = DMatrix::<f64>::zeros(n * l, n * l);
        for tau in 1..=l {
            let block = &inv * &a[tau];
            c.view_mut((0, (tau - 1) * n), (n, n)).copy_from(&block);
        }
        for k in 1..l {
            c.view_mut((k * n, (k - 1) * n), (n, n))
                .copy_from(&DMatrix::identity(n, n));
        }
        Ok(c.complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vars == 0 {
            return Err(Error::UnstableSpec("n_vars must be positive".into()));
        }
        if !self.noise.is_empty() && self.noise.len() != self.n_vars {
            return Err(Error::UnstableSpec("noise needs one entry per variable".into()));
        }
        if !self.autocorr.is_empty() && self.autocorr.len() != self.n_vars {
            return Err(Error::UnstableSpec("autocorr needs one entry per variable".into()));
        }
        if self.autocorr.iter().any(|a| !(a.abs() < 1.0)) {
            return Err(Error::UnstableSpec("autocorrelation must lie in (-1, 1)".into()));
        }
        if self.noise.iter().any(|n| !(n.scale >= 0.0) || !n.scale.is_finite()) {
            return Err(Error::UnstableSpec("noise scale must be finite and non-negative".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.source >= self.n_vars || e.target >= self.n_vars {
                return Err(Error::UnstableSpec(format!(
                    "edge {} -> {} outside 0..{}",
                    e.source, e.target, self.n_vars
                )));
            }
            if e.source == e.target {
                return Err(Error::UnstableSpec("self edges go through autocorr".into()));
            }
            if !e.coefficient.is_finite() {
                return Err(Error::UnstableSpec("edge coefficient is not finite".into()));
            }
            if !seen.insert((e.source, e.target, e.lag)) {
                return Err(Error::UnstableSpec(format!(
                    "duplicate edge {} -> {} at lag {}",
                    e.source, e.target, e.lag
                )));
            }
        }
        self.topological_order()?;
        let rho = self.spectral_radius()?;
        if rho >= MAX_SPECTRAL_RADIUS {
            return Err(Error::UnstableSpec(format!(
                "spectral radius {rho:.4} >= {MAX_SPECTRAL_RADIUS}"
            )));
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> GroundTruthGraph {
        let mut edges: BTreeSet<_> = self
            .edges
            .iter()
            .map(|e| (e.source + 1, e.target + 1, e.lag))
            .collect();
        for j in 0..self.n_vars {
            if self.autocorr_of(j) != 0.0 {
                edges.insert((j + 1, j + 1, 1));
            }
        }
        GroundTruthGraph {
            variables: (1..=self.n_vars).collect(),
            tau_max: self.max_lag(),
            edges,
        }
    }
}

pub fn synthetic_variables(n: usize) -> Vec<VariableMeta> {
    (1..=n)
        .map(|i| VariableMeta::new(i, &format!("x{i}"), "", Role::Process))
        .collect()
}

/// Simulates `spec.t` rows after a burn-in of [`BURN_IN`] rows. Variables get
/// ids `1..=n_vars` and a 1 s sample interval.
pub fn generate(spec: &SCMSpec) -> Result<(TimeSeriesDataset, GroundTruthGraph)> {
    spec.validate()?;
    let n = spec.n_vars;
    let order = spec.topological_order()?;
    let lmax = spec.max_lag();
    let total = spec.t + BURN_IN + lmax;
    let mut by_target: Vec<Vec<SCMEdge>> = vec![Vec::new(); n];
    for e in &spec.edges {
        by_target[e.target].push(*e);
    }
    let mut rng = rng_from(spec.seed);
    let unif = Uniform::new_inclusive(-3f64.sqrt(), 3f64.sqrt()).expect("valid range");
    let mut x = vec![vec![0.0; total]; n];
    for t in lmax..total {
        let draws: Vec<f64> = (0..n)
            .map(|j| match spec.noise_of(j).distribution {
                NoiseDistribution::Uniform => unif.sample(&mut rng),
                _ => StandardNormal.sample(&mut rng),
            })
            .collect();
        for &j in &order {
            let mut drive = 0.0;
            for e in &by_target[j] {
                drive += e.function.apply(e.coefficient * x[e.source][t - e.lag]);
            }
            let ns = spec.noise_of(j);
            let scale = match ns.distribution {
                NoiseDistribution::Heteroskedastic => ns.scale * (1.0 + drive.abs()),
                _ => ns.scale,
            };
            let ar = if t > 0 { spec.autocorr_of(j) * x[j][t - 1] } else { 0.0 };
            let v = ar + drive + scale * draws[j];
            if !(v.abs() <= BLOW_UP) {
                return Err(Error::UnstableSpec(format!(
                    "variable {j} reached {v:e} at step {t}"
                )));
            }
            x[j][t] = v;
        }
    }
    let columns = x.into_iter().map(|c| c[BURN_IN + lmax..].to_vec()).collect();
    let ds = TimeSeriesDataset::from_columns(columns, synthetic_variables(n), 1.0)?;
    Ok((ds, spec.ground_truth()))
}

// ---------------------------------------------------------------------------
// scoring

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub include_self_links: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            include_self_links: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Lag0 {
    /// Directed from the smaller id to the larger.
    Forward,
    Backward,
    /// Unoriented or conflicting: both directions asserted.
    Both,
}

/// Lag-resolved link set in the form scoring works on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkSet {
    lagged: BTreeSet<(usize, usize, usize)>,
    lag0: BTreeMap<(usize, usize), Lag0>,
}

impl LinkSet {
    /// From directed `(source, target, lag)` triples; a lag-0 pair present in
    /// both directions counts as one unoriented adjacency.
    pub fn from_directed(edges: &BTreeSet<(usize, usize, usize)>, opts: ScoreOptions) -> Self {
        let mut lagged = BTreeSet::new();
        let mut lag0 = BTreeMap::new();
        for &(s, t, l) in edges {
            if s == t && (l == 0 || !opts.include_self_links) {
                continue;
            }
            if l > 0 {
                lagged.insert((s, t, l));
                continue;
            }
            let dir = if s < t { Lag0::Forward } else { Lag0::Backward };
            lag0.entry((s.min(t), s.max(t)))
                .and_modify(|d| {
                    if *d != dir {
                        *d = Lag0::Both
                    }
                })
                .or_insert(dir);
        }
        Self { lagged, lag0 }
    }

    pub fn from_graph(g: &CausalGraph, opts: ScoreOptions) -> Self {
        Self::from_directed(&g.directed_edges(), opts)
    }

    pub fn from_truth(g: &GroundTruthGraph, opts: ScoreOptions) -> Self {
        Self::from_directed(&g.edges, opts)
    }

    pub fn len(&self) -> usize {
        self.lagged.len() + self.lag0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub shd: usize,
    pub fdr: f64,
    pub tpr: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Structural Hamming distance: adjacency insertions and deletions plus one
/// per lag-0 pair whose orientation differs. Symmetric in its arguments.
pub fn shd(a: &LinkSet, b: &LinkSet) -> usize {
    let lagged = a.lagged.symmetric_difference(&b.lagged).count();
    let mut lag0 = 0;
    for (k, da) in &a.lag0 {
        match b.lag0.get(k) {
            None => lag0 += 1,
            Some(db) if db != da => lag0 += 1,
            _ => {}
        }
    }
    lag0 += b.lag0.keys().filter(|k| !a.lag0.contains_key(k)).count();
    lagged + lag0
}

/// TP/FP/FN count lagged links exactly. A lag-0 pair is a true positive when
/// the estimate asserts the true direction (a directed match, or unoriented);
/// a reversed lag-0 edge is one false positive and one false negative.
pub fn score_sets(est: &LinkSet, truth: &LinkSet) -> Score {
    let mut tp = est.lagged.intersection(&truth.lagged).count();
    let mut fp = est.lagged.difference(&truth.lagged).count();
    let mut fn_ = truth.lagged.difference(&est.lagged).count();
    for (k, de) in &est.lag0 {
        match truth.lag0.get(k) {
            None => fp += 1,
            Some(dt) if *de == Lag0::Both || de == dt || *dt == Lag0::Both => tp += 1,
            Some(_) => {
                fp += 1;
                fn_ += 1;
            }
        }
    }
    fn_ += truth.lag0.keys().filter(|k| !est.lag0.contains_key(k)).count();
    let fdr = if tp + fp == 0 { 0.0 } else { fp as f64 / (tp + fp) as f64 };
    let tpr = if truth.is_empty() { 1.0 } else { tp as f64 / truth.len() as f64 };
    Score {
        shd: shd(est, truth),
        fdr,
        tpr,
        tp,
        fp,
        fn_,
    }
}

pub fn score(est: &CausalGraph, truth: &GroundTruthGraph, opts: ScoreOptions) -> Result<Score> {
    if est.variable_ids() != truth.variables {
        return Err(Error::UniverseMismatch(format!(
            "estimate variables {:?} vs truth {:?}",
            est.variable_ids(),
            truth.variables
        )));
    }
    let reach = if opts.include_self_links {
        truth.tau_max
    } else {
        truth.edges.iter().filter(|e| e.0 != e.1).map(|e| e.2).max().unwrap_or(0)
    };
    if reach > est.tau_max {
        return Err(Error::UniverseMismatch(format!(
            "truth reaches lag {reach}, estimate tau_max {}",
            est.tau_max
        )));
    }
    Ok(score_sets(
        &LinkSet::from_graph(est, opts),
        &LinkSet::from_truth(truth, opts),
    ))
}

// ---------------------------------------------------------------------------
// benchmark

pub const HYBRID: &str = "hybrid";

pub fn method_names() -> Vec<&'static str> {
    TestKind::ALL
        .iter()
        .map(|k| k.name())
        .chain(std::iter::once(HYBRID))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub spec_index: usize,
    pub spec_seed: u64,
    pub method: String,
    pub shd: usize,
    pub fdr: f64,
    pub tpr: f64,
    pub n_links: usize,
    pub lag0_acyclic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_shd: f64,
    pub mean_fdr: f64,
    pub mean_tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub cells: Vec<BenchCell>,
    pub summary: Vec<MethodSummary>,
}

impl BenchmarkReport {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|m| m.method == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,mean_shd,mean_fdr,mean_tpr\n");
        for m in &self.summary {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                m.method, m.mean_shd, m.mean_fdr, m.mean_tpr
            ));
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        io::write_atomic(&dir.join("benchmark.csv"), self.to_csv().as_bytes())?;
        io::write_json(&dir.join("benchmark_cells.json"), &self.cells)
    }
}

/// Standardized, single-segment sequence for discovery.
pub fn sequence_of(ds: TimeSeriesDataset) -> Result<RepresentativeSequence> {
    Ok(RepresentativeSequence::contiguous(ds).standardized()?.0)
}

/// Runs the four single-test variants and the hybrid on every spec. The
/// discovery seed of a spec is `stable_mix(cfg.seed, spec.seed)`.
pub fn run_benchmark(
    suite: &[SCMSpec],
    cfg: &DiscoveryConfig,
    opts: ScoreOptions,
) -> Result<BenchmarkReport> {
    if suite.is_empty() {
        return Err(Error::Config("benchmark suite is empty".into()));
    }
    cfg.validate()?;
    let data = suite
        .iter()
        .map(|s| {
            let (ds, truth) = generate(s)?;
            Ok((sequence_of(ds)?, truth))
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, TestKind)> = (0..suite.len())
        .flat_map(|i| TestKind::ALL.into_iter().map(move |k| (i, k)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(i, kind)| {
            let mut c = cfg.with_test(kind);
            c.seed = stable_mix(cfg.seed, suite[i].seed);
            run_pcmci_plus(&data[i].0, &c)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    let per_spec = TestKind::ALL.len();
    for (i, spec) in suite.iter().enumerate() {
        let truth = &data[i].1;
        let block = &runs[i * per_spec..(i + 1) * per_spec];
        let mut graphs: Vec<(String, CausalGraph, LaggedAdjacency)> = block
            .iter()
            .zip(TestKind::ALL)
            .map(|((g, a), k)| (k.name().to_string(), g.clone(), a.clone()))
            .collect();
        let h = hybrid(&block[0].1, &block[1].1, &block[2].1, &block[3].1)?;
        let hg = CausalGraph::from_adjacency(
            &h.matrix,
            &block[3].0.variables,
            block[3].0.lag_unit_s,
            HYBRID,
            Some(&h.provenance),
        );
        graphs.push((HYBRID.to_string(), hg, h.matrix));
        for (method, g, a) in graphs {
            let s = score(&g, truth, opts)?;
            cells.push(BenchCell {
                spec_index: i,
                spec_seed: spec.seed,
                method,
                shd: s.shd,
                fdr: s.fdr,
                tpr: s.tpr,
                n_links: g.links.len(),
                lag0_acyclic: a.lag0_acyclic(),
            });
        }
    }
    let summary = method_names()
        .into_iter()
        .map(|m| {
            let mine: Vec<&BenchCell> = cells.iter().filter(|c| c.method == m).collect();
            let mean = |f: &dyn Fn(&BenchCell) -> f64| mine.iter().map(|c| f(c)).sum::<f64>() / mine.len() as f64;
            MethodSummary {
                method: m.to_string(),
                mean_shd: mean(&|c| c.shd as f64),
                mean_fdr: mean(&|c| c.fdr),
                mean_tpr: mean(&|c| c.tpr),
            }
        })
        .collect();
    Ok(BenchmarkReport { cells, summary })
}

pub fn read_suite(path: &Path) -> Result<Vec<SCMSpec>> {
    serde_json::from_str(&io::read_to_string(path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// suites

/// Linear suite: `n` variables with autocorrelation 0.5, three lagged edges and
/// one contemporaneous edge on distinct random pairs, coefficients of
/// magnitude 0.4..0.6 with random sign.
pub fn linear_suite(count: usize, n: usize, t: usize, seed: u64) -> Vec<SCMSpec> {
    (0..count)
        .map(|k| random_spec(n, t, stable_mix(seed, k as u64), &[Function::Linear; 4], 0.4..0.6))
        .collect()
}

/// Nonlinear suite: like the linear one but the four edges are (in random
/// order) linear, quadratic, tanh and tanh.
pub fn nonlinear_suite(count: usize, n: usize, t: usize, seed: u64) -> Vec<SCMSpec> {
    use Function::*;
    (0..count)
        .map(|k| random_spec(n, t, stable_mix(seed, k as u64), &[Linear, Quadratic, Tanh, Tanh], 0.5..0.8))
        .collect()
}

fn random_spec(
    n: usize,
    t: usize,
    seed: u64,
    functions: &[Function; 4],
    magnitude: std::ops::Range<f64>,
) -> SCMSpec {
    use rand::seq::SliceRandom;
    use rand::Rng as _;
    assert!(n >= 3, "need at least three variables");
    let mut rng = rng_from(seed);
    let mut fs = *functions;
    fs.shuffle(&mut rng);
    loop {
        let mut pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        pairs.shuffle(&mut rng);
        let mut used = BTreeSet::new();
        let mut edges = Vec::new();
        for (i, j) in pairs {
            if edges.len() == 4 {
                break;
            }
            if !used.insert((i.min(j), i.max(j))) {
                continue;
            }
            let lag = if edges.is_empty() { 0 } else { rng.random_range(1..=2) };
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let function = fs[edges.len()];
            edges.push(SCMEdge {
                source: i,
                target: j,
                lag,
                coefficient: sign * rng.random_range(magnitude.clone()),
                function,
            });
        }
        let spec = SCMSpec {
            n_vars: n,
            edges,
            noise: vec![NoiseSpec::default(); n],
            autocorr: vec![0.5; n],
            t,
            seed: rng.random(),
        };
        if spec.validate().is_ok() {
            return spec;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Mark;
    use proptest::prelude::*;

    fn edge(source: usize, target: usize, lag: usize, coefficient: f64) -> SCMEdge {
        SCMEdge {
            source,
            target,
            lag,
            coefficient,
            function: Function::Linear,
        }
    }

    fn spec(n: usize, edges: Vec<SCMEdge>, autocorr: Vec<f64>, t: usize, seed: u64) -> SCMSpec {
        SCMSpec {
            n_vars: n,
            edges,
            noise: Vec::new(),
            autocorr,
            t,
            seed,
        }
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn independent_ar_series_are_uncorrelated() {
        let s = spec(3, vec![], vec![0.5, 0.3, -0.2], 2000, 11);
        let (ds, truth) = generate(&s).unwrap();
        assert_eq!(ds.n_rows(), 2000);
        for i in 0..3 {
            for j in i + 1..3 {
                assert!(corr(ds.column(i), ds.column(j)).abs() < 0.1);
            }
        }
        assert_eq!(truth.edges.len(), 3);
        assert!(truth.edges.iter().all(|e| e.0 == e.1 && e.2 == 1));
    }

    /// X_t = a X_{t-1} + e, Y_t = 0.8 X_{t-1} + e' with unit noises:
    /// Var X = 1/(1-a^2), Cov(X_{t-1}, Y_t) = 0.8 Var X,
    /// Var Y = 0.64 Var X + 1.
    #[test]
    fn lagged_correlation_matches_analytic_value() {
        let a: f64 = 0.5;
        let vx = 1.0 / (1.0 - a * a);
        let expected = 0.8 * vx / (vx * (0.64 * vx + 1.0)).sqrt();
        let s = spec(2, vec![edge(0, 1, 1, 0.8)], vec![a, 0.0], 2000, 5);
        let (ds, _) = generate(&s).unwrap();
        let x = &ds.column(0)[..1999];
        let y = &ds.column(1)[1..];
        assert!((corr(x, y) - expected).abs() < 0.08, "{} vs {}", corr(x, y), expected);
    }

    #[test]
    fn same_seed_same_data() {
        let s = linear_suite(1, 5, 300, 3).remove(0);
        assert_eq!(generate(&s).unwrap().0, generate(&s).unwrap().0);
    }

    #[test]
    fn unstable_specs_rejected() {
        let explosive = spec(1, vec![], vec![0.99], 100, 1);
        assert!(matches!(generate(&explosive), Err(Error::UnstableSpec(_))));
        let cyclic = spec(2, vec![edge(0, 1, 0, 0.3), edge(1, 0, 0, 0.3)], vec![], 100, 1);
        assert!(matches!(generate(&cyclic), Err(Error::UnstableSpec(_))));
        // Individually stable coefficients whose feedback loop is not.
        let feedback = spec(2, vec![edge(0, 1, 1, 1.2), edge(1, 0, 1, 0.9)], vec![0.0, 0.0], 100, 1);
        assert!(feedback.spectral_radius().unwrap() > 1.0);
        assert!(generate(&feedback).is_err());
    }

    /// Companion radius of a scalar AR(2) equals the largest root modulus of
    /// z^2 - a1 z - a2.
    #[test]
    fn spectral_radius_matches_ar2_roots() {
        let s = spec(1, vec![], vec![0.5], 10, 0);
        assert!((s.spectral_radius().unwrap() - 0.5).abs() < 1e-12);
        // Y_t = X_{t-1} and X_t = 0.5 X_{t-1} + 0.3 Y_{t-1}, i.e. an AR(2) in X.
        let relay = spec(2, vec![edge(0, 1, 1, 1.0), edge(1, 0, 1, 0.3)], vec![0.5, 0.0], 10, 0);
        let disc: f64 = 0.25 + 4.0 * 0.3;
        let root = (0.5 + disc.sqrt()) / 2.0;
        assert!((relay.spectral_radius().unwrap() - root).abs() < 1e-9);
    }

    #[test]
    fn contemporaneous_edges_follow_topological_order() {
        let s = spec(3, vec![edge(2, 0, 0, 1.0), edge(0, 1, 0, 1.0)], vec![], 200, 9);
        assert_eq!(s.topological_order().unwrap(), vec![2, 0, 1]);
        let (ds, _) = generate(&s).unwrap();
        // x1 = x3 + e, x2 = x1 + e: corr(x3, x2) = 1/sqrt(3).
        assert!((corr(ds.column(2), ds.column(1)) - (1.0f64 / 3.0).sqrt()).abs() < 0.1);
    }

    #[test]
    fn heteroskedastic_noise_scales_with_drive() {
        let mut s = spec(2, vec![edge(0, 1, 0, 1.0)], vec![], 4000, 2);
        s.noise = vec![
            NoiseSpec::default(),
            NoiseSpec {
                distribution: NoiseDistribution::Heteroskedastic,
                scale: 1.0,
            },
        ];
        let (ds, _) = generate(&s).unwrap();
        let (x, y) = (ds.column(0), ds.column(1));
        let resid = |lo: f64, hi: f64| {
            let r: Vec<f64> = x
                .iter()
                .zip(y)
                .filter(|(a, _)| a.abs() >= lo && a.abs() < hi)
                .map(|(a, b)| (b - a).powi(2))
                .collect();
            r.iter().sum::<f64>() / r.len() as f64
        };
        assert!(resid(1.5, 10.0) > 3.0 * resid(0.0, 0.5));
    }

    fn graph_of(ids: &[usize], links: &[(usize, usize, usize, Option<Mark>)]) -> CausalGraph {
        CausalGraph {
            method: "t".into(),
            variables: synthetic_variables(ids.len()),
            tau_max: 3,
            lag_unit_s: 1.0,
            links: links
                .iter()
                .map(|&(source, target, lag, mark)| crate::graph::GraphLink {
                    source,
                    target,
                    lag,
                    strength: 0.5,
                    p_value: 0.01,
                    mark,
                    provenance: None,
                })
                .collect(),
        }
    }

    fn truth_of(edges: &[(usize, usize, usize)]) -> GroundTruthGraph {
        GroundTruthGraph {
            variables: vec![1, 2, 3, 4, 5],
            tau_max: 3,
            edges: edges.iter().copied().collect(),
        }
    }

    #[test]
    fn score_examples() {
        let t = truth_of(&[(1, 2, 1), (2, 3, 2), (3, 4, 1), (4, 5, 0), (1, 1, 1)]);
        let d = Some(Mark::Directed);
        let exact = graph_of(&[1, 2, 3, 4, 5], &[(1, 2, 1, None), (2, 3, 2, None), (3, 4, 1, None), (4, 5, 0, d)]);
        let s = score(&exact, &t, ScoreOptions::default()).unwrap();
        assert_eq!((s.shd, s.fdr, s.tpr), (0, 0.0, 1.0));

        let mut extra = exact.clone();
        extra.links.push(graph_of(&[1], &[(5, 1, 2, None)]).links[0].clone());
        let s = score(&extra, &t, ScoreOptions::default()).unwrap();
        assert_eq!(s.shd, 1);
        assert!((s.fdr - 0.2).abs() < 1e-12);
        assert_eq!(s.tpr, 1.0);

        let empty = graph_of(&[1, 2, 3, 4, 5], &[]);
        let s = score(&empty, &t, ScoreOptions::default()).unwrap();
        assert_eq!((s.shd, s.fdr, s.tpr), (4, 0.0, 0.0));

        // Self-link in the truth counts only when asked for.
        let s = score(&exact, &t, ScoreOptions { include_self_links: true }).unwrap();
        assert_eq!((s.shd, s.fn_), (1, 1));
    }

    #[test]
    fn lag0_orientation_errors() {
        let t = truth_of(&[(4, 5, 0)]);
        let reversed = graph_of(&[1, 2, 3, 4, 5], &[(5, 4, 0, Some(Mark::Directed))]);
        let s = score(&reversed, &t, ScoreOptions::default()).unwrap();
        assert_eq!((s.shd, s.tp, s.fp, s.fn_), (1, 0, 1, 1));
        let unoriented = graph_of(&[1, 2, 3, 4, 5], &[(4, 5, 0, Some(Mark::Unoriented))]);
        let s = score(&unoriented, &t, ScoreOptions::default()).unwrap();
        assert_eq!((s.shd, s.tp, s.fp), (1, 1, 0));
    }

    #[test]
    fn universe_checked() {
        let g = graph_of(&[1, 2], &[]);
        assert!(matches!(
            score(&g, &truth_of(&[]), ScoreOptions::default()),
            Err(Error::UniverseMismatch(_))
        ));
    }

    #[test]
    fn suites_are_valid_and_deterministic() {
        let a = linear_suite(5, 5, 500, 1);
        assert_eq!(a, linear_suite(5, 5, 500, 1));
        for s in a.iter().chain(&nonlinear_suite(5, 4, 500, 2)) {
            s.validate().unwrap();
            assert_eq!(s.edges.len(), 4);
            assert_eq!(s.edges.iter().filter(|e| e.lag == 0).count(), 1);
            let (ds, _) = generate(s).unwrap();
            assert!(ds.column(0).iter().all(|v| v.abs() < BLOW_UP));
        }
    }

    #[test]
    fn suite_json_round_trip() {
        let suite = nonlinear_suite(2, 4, 100, 3);
        let json = serde_json::to_string(&suite).unwrap();
        assert!(json.contains("\"T\":100"));
        let back: Vec<SCMSpec> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, suite);
    }

    fn link_set() -> impl Strategy<Value = BTreeSet<(usize, usize, usize)>> {
        proptest::collection::btree_set((1usize..=4, 1usize..=4, 0usize..=2), 0..12)
            .prop_map(|s| s.into_iter().filter(|e| e.0 != e.1).collect())
    }

    proptest! {
        #[test]
        fn shd_is_a_symmetric_distance(a in link_set(), b in link_set()) {
            let o = ScoreOptions::default();
            let (la, lb) = (LinkSet::from_directed(&a, o), LinkSet::from_directed(&b, o));
            prop_assert_eq!(shd(&la, &la), 0);
            prop_assert_eq!(shd(&la, &lb), shd(&lb, &la));
            let s = score_sets(&la, &lb);
            prop_assert!((0.0..=1.0).contains(&s.fdr) && (0.0..=1.0).contains(&s.tpr));
        }
    }
}
