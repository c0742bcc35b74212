//! Representative subset selection for a cluster of cycles.
//!
//! Flow per cluster: drop cycle-level outliers (IQR fences), draw a fraction of
//! the cycles without replacement, compare the draw against the whole cluster
//! with per-feature EMD and a multivariate MMD, re-draw on failure, then
//! concatenate the chosen cycles into one sequence with its junction rows.

use std::cmp::Ordering;

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::cycles::{CycleStats, MeltingCycle};
use crate::dataset::{self, StandardizationReport, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::rng::{rng_from, stable_mix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    Median,
    #[serde(untagged)]
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub fraction: f64,
    pub emd_threshold: f64,
    pub mmd_threshold: f64,
    pub max_retries: usize,
    pub iqr_multiplier: f64,
    pub bandwidth: Bandwidth,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            fraction: 0.05,
            emd_threshold: 0.10,
            mmd_threshold: 0.05,
            max_retries: 20,
            iqr_multiplier: 1.5,
            bandwidth: Bandwidth::Median,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!(
                "fraction {} outside (0, 1]",
                self.fraction
            )));
        }
        if !(self.emd_threshold > 0.0 && self.mmd_threshold > 0.0) {
            return Err(Error::Config("EMD/MMD thresholds must be positive".into()));
        }
        if self.max_retries == 0 {
            return Err(Error::Config("max_retries must be positive".into()));
        }
        if !(self.iqr_multiplier > 0.0) {
            return Err(Error::Config("iqr_multiplier must be positive".into()));
        }
        if let Bandwidth::Fixed(b) = self.bandwidth {
            if !(b > 0.0) {
                return Err(Error::Config("bandwidth must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleFeature {
    ProductionTime,
    Weight,
    Energy,
    SpecificEnergy,
}

impl CycleFeature {
    /// Features screened for outliers.
    pub const OUTLIER: [CycleFeature; 3] = [
        CycleFeature::ProductionTime,
        CycleFeature::Energy,
        CycleFeature::SpecificEnergy,
    ];
    /// Features compared between a draw and its cluster.
    pub const VALIDATION: [CycleFeature; 4] = [
        CycleFeature::ProductionTime,
        CycleFeature::Weight,
        CycleFeature::Energy,
        CycleFeature::SpecificEnergy,
    ];

    pub fn of(self, s: &CycleStats) -> f64 {
        match self {
            CycleFeature::ProductionTime => s.production_time_s,
            CycleFeature::Weight => s.weight_tonne,
            CycleFeature::Energy => s.energy_kwh,
            CycleFeature::SpecificEnergy => s.specific_energy_kwh_per_tonne,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedCycle {
    pub cycle: MeltingCycle,
    pub feature: CycleFeature,
    pub value: f64,
    pub fence: (f64, f64),
}

/// Linear-interpolation quantile of sorted data (the "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Removes a cycle when any screened statistic falls outside
/// `[Q1 - m*IQR, Q3 + m*IQR]`. Both outputs are ordered by cycle id.
pub fn remove_outlier_cycles(
    cycles: &[MeltingCycle],
    config: &SamplerConfig,
) -> Result<(Vec<MeltingCycle>, Vec<RemovedCycle>)> {
    if cycles.len() < 4 {
        return Err(Error::TooFewCycles {
            needed: 4,
            got: cycles.len(),
        });
    }
    let m = config.iqr_multiplier;
    let fences: Vec<(f64, f64)> = CycleFeature::OUTLIER
        .iter()
        .map(|f| {
            let s = sorted(cycles.iter().map(|c| f.of(&c.stats)));
            let q1 = quantile_sorted(&s, 0.25);
            let q3 = quantile_sorted(&s, 0.75);
            let iqr = q3 - q1;
            (q1 - m * iqr, q3 + m * iqr)
        })
        .collect();
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for c in cycles {
        let violation = CycleFeature::OUTLIER
            .iter()
            .zip(&fences)
            .find(|(f, (lo, hi))| {
                let v = f.of(&c.stats);
                v < *lo || v > *hi
            });
        match violation {
            Some((&feature, &fence)) => removed.push(RemovedCycle {
                cycle: c.clone(),
                feature,
                value: feature.of(&c.stats),
                fence,
            }),
            None => kept.push(c.clone()),
        }
    }
    kept.sort_by_key(|c| c.id);
    removed.sort_by_key(|r| r.cycle.id);
    Ok((kept, removed))
}

/// 1-Wasserstein distance between two empirical distributions, as the
/// integral of `|F_a - F_b|`.
pub fn emd_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let sa = sorted(a.iter().copied());
    let sb = sorted(b.iter().copied());
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = sa[0].min(sb[0]);
    let mut total = 0.0;
    while i < sa.len() || j < sb.len() {
        let next = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let fa = i as f64 / na;
        let fb = j as f64 / nb;
        total += (fa - fb).abs() * (next - prev);
        prev = next;
        while i < sa.len() && sa[i] == next {
            i += 1;
        }
        while j < sb.len() && sb[j] == next {
            j += 1;
        }
    }
    Ok(total)
}

fn sq_euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise Euclidean distance over the pooled sample, or 1.0 when that is 0.
pub fn median_bandwidth(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let pooled: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    median_pairwise(&pooled)
}

fn median_pairwise(points: &[&Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(sq_euclid(points[i], points[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let len = d.len();
    let (lower, upper, _) = d.select_nth_unstable_by(len / 2, f64::total_cmp);
    let upper = *upper;
    let med = if len % 2 == 1 {
        upper
    } else {
        let lower = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

fn mean_kernel(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64) -> f64 {
    let mut s = 0.0;
    for x in a {
        for y in b {
            s += (-gamma * sq_euclid(x, y)).exp();
        }
    }
    s / (a.len() * b.len()) as f64
}

/// Biased (V-statistic) squared MMD with a Gaussian kernel
/// `exp(-|x - y|^2 / (2 h^2))`.
pub fn mmd_squared(a: &[Vec<f64>], b: &[Vec<f64>], bandwidth: Bandwidth) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let dim = a[0].len();
    if a.iter().chain(b).any(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch(
            "MMD samples have different dimensions".into(),
        ));
    }
    let h = match bandwidth {
        Bandwidth::Median => median_bandwidth(a, b),
        Bandwidth::Fixed(h) => h,
    };
    let gamma = 1.0 / (2.0 * h * h);
    let v = mean_kernel(a, a, gamma) + mean_kernel(b, b, gamma) - 2.0 * mean_kernel(a, b, gamma);
    Ok(v.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub features: Vec<CycleFeature>,
    pub emd: Vec<f64>,
    pub mmd: f64,
    pub emd_threshold: f64,
    pub mmd_threshold: f64,
    pub pass: bool,
    pub retries_used: usize,
    pub cluster_size: usize,
    pub selected: usize,
}

impl ValidationReport {
    /// Worst metric relative to its threshold; a draw passes iff this is <= 1.
    fn score(&self) -> f64 {
        self.emd
            .iter()
            .map(|e| e / self.emd_threshold)
            .fold(self.mmd / self.mmd_threshold, f64::max)
    }
}

/// Cycle statistics z-scored with the cluster's own mean and standard deviation.
fn feature_matrix(cluster: &[MeltingCycle]) -> Vec<Vec<f64>> {
    let feats = CycleFeature::VALIDATION;
    let n = cluster.len() as f64;
    let scale: Vec<(f64, f64)> = feats
        .iter()
        .map(|f| {
            let mean = cluster.iter().map(|c| f.of(&c.stats)).sum::<f64>() / n;
            let var = cluster
                .iter()
                .map(|c| (f.of(&c.stats) - mean).powi(2))
                .sum::<f64>()
                / n;
            let sd = var.sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect();
    cluster
        .iter()
        .map(|c| {
            feats
                .iter()
                .zip(&scale)
                .map(|(f, (m, s))| (f.of(&c.stats) - m) / s)
                .collect()
        })
        .collect()
}

/// Cluster-side quantities reused by every draw.
struct ClusterReference {
    full: Vec<Vec<f64>>,
    columns: Vec<Vec<f64>>,
    gamma: f64,
    k_full: f64,
}

impl ClusterReference {
    fn new(full: Vec<Vec<f64>>, bandwidth: Bandwidth) -> Self {
        // The pooled sample of a draw and its cluster has the same support as
        // the cluster itself, so the median heuristic is taken over the cluster.
        let h = match bandwidth {
            Bandwidth::Median => median_pairwise(&full.iter().collect::<Vec<_>>()),
            Bandwidth::Fixed(h) => h,
        };
        let gamma = 1.0 / (2.0 * h * h);
        let k_full = mean_kernel(&full, &full, gamma);
        let columns = (0..CycleFeature::VALIDATION.len())
            .map(|k| full.iter().map(|r| r[k]).collect())
            .collect();
        Self {
            full,
            columns,
            gamma,
            k_full,
        }
    }
}

fn validate_draw(
    reference: &ClusterReference,
    chosen: &[usize],
    config: &SamplerConfig,
) -> Result<ValidationReport> {
    let full = &reference.full;
    let subset: Vec<Vec<f64>> = chosen.iter().map(|&i| full[i].clone()).collect();
    let emd = reference
        .columns
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let a: Vec<f64> = subset.iter().map(|r| r[k]).collect();
            emd_1d(&a, b)
        })
        .collect::<Result<Vec<_>>>()?;
    let g = reference.gamma;
    let mmd = (mean_kernel(&subset, &subset, g) + reference.k_full
        - 2.0 * mean_kernel(&subset, full, g))
    .max(0.0);
    let pass = emd.iter().all(|&e| e <= config.emd_threshold) && mmd <= config.mmd_threshold;
    Ok(ValidationReport {
        features: CycleFeature::VALIDATION.to_vec(),
        emd,
        mmd,
        emd_threshold: config.emd_threshold,
        mmd_threshold: config.mmd_threshold,
        pass,
        retries_used: 0,
        cluster_size: full.len(),
        selected: chosen.len(),
    })
}

/// Draws `ceil(fraction * n)` cycles without replacement and validates the
/// draw against the cluster. Draw `i` is seeded with `stable_mix(seed, i)`.
/// Returns the first passing draw, or the best-scoring one with `pass = false`
/// once the retries are exhausted. The selection is ordered by cycle id.
pub fn sample_and_validate(
    cluster_cycles: &[MeltingCycle],
    config: &SamplerConfig,
) -> Result<(Vec<MeltingCycle>, ValidationReport)> {
    config.validate()?;
    if cluster_cycles.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut cluster = cluster_cycles.to_vec();
    cluster.sort_by_key(|c| c.id);
    let n = cluster.len();
    let m = ((config.fraction * n as f64).ceil() as usize).clamp(1, n);
    let reference = ClusterReference::new(feature_matrix(&cluster), config.bandwidth);

    let mut best: Option<(Vec<usize>, ValidationReport)> = None;
    for attempt in 0..=config.max_retries {
        let mut rng = rng_from(stable_mix(config.seed, attempt as u64));
        let mut chosen = sample_indices(&mut rng, n, m).into_vec();
        chosen.sort_unstable();
        let mut report = validate_draw(&reference, &chosen, config)?;
        report.retries_used = attempt;
        if report.pass {
            best = Some((chosen, report));
            break;
        }
        let better = best
            .as_ref()
            .map_or(true, |(_, b)| report.score().total_cmp(&b.score()) == Ordering::Less);
        if better {
            best = Some((chosen, report));
        }
        if m == n {
            break;
        }
    }
    let (chosen, mut report) = best.expect("at least one draw is made");
    if !report.pass {
        report.retries_used = config.max_retries;
    }
    let selected = chosen.into_iter().map(|i| cluster[i].clone()).collect();
    Ok((selected, report))
}

/// Selected cycles stitched end to end.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativeSequence {
    pub data: TimeSeriesDataset,
    /// First row of every cycle after the first.
    pub boundary_rows: Vec<usize>,
    /// `(cluster, cycle id)` per stitched cycle, in order.
    pub provenance: Vec<(Option<usize>, usize)>,
}

impl RepresentativeSequence {
    /// Sequence without junctions (a single contiguous series).
    pub fn contiguous(data: TimeSeriesDataset) -> Self {
        Self {
            data,
            boundary_rows: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn standardized(&self) -> Result<(Self, StandardizationReport)> {
        let (data, report) = dataset::standardize(&self.data)?;
        Ok((
            Self {
                data,
                boundary_rows: self.boundary_rows.clone(),
                provenance: self.provenance.clone(),
            },
            report,
        ))
    }
}

/// Appends the rows of each cycle in the given order.
pub fn concatenate(selected: &[MeltingCycle], ds: &TimeSeriesDataset) -> Result<RepresentativeSequence> {
    let first = selected.first().ok_or(Error::EmptySample)?;
    if selected.iter().any(|c| c.end_row > ds.n_rows() || c.is_empty()) {
        return Err(Error::InvalidDataset(
            "cycle row range outside the dataset".into(),
        ));
    }
    let mut data = ds.slice_rows(first.start_row, first.end_row);
    let mut boundary_rows = Vec::new();
    for c in &selected[1..] {
        boundary_rows.push(data.n_rows());
        data.append_rows(&ds.slice_rows(c.start_row, c.end_row))?;
    }
    Ok(RepresentativeSequence {
        data,
        boundary_rows,
        provenance: selected.iter().map(|c| (c.cluster, c.id)).collect(),
    })
}
