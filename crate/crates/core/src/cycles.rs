//! Melting-cycle segmentation, per-cycle statistics and cluster labels.
//!
//! A cycle starts when the temperature rises through `start_temp_c` from below
//! and ends at the first sample below `end_temp_c` once the melt has been at or
//! above `end_temp_c`. An excursion that never reaches `end_temp_c` ends when it
//! falls back to `start_temp_c`. The ending sample is not part of the cycle.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::rng::{rng_from, stable_mix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationRules {
    pub start_temp_c: f64,
    pub end_temp_c: f64,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub refractory_s: f64,
}

impl Default for SegmentationRules {
    fn default() -> Self {
        Self {
            start_temp_c: 200.0,
            end_temp_c: 300.0,
            min_duration_s: 1800.0,
            max_duration_s: 10800.0,
            refractory_s: 300.0,
        }
    }
}

impl SegmentationRules {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.start_temp_c,
            self.end_temp_c,
            self.min_duration_s,
            self.max_duration_s,
            self.refractory_s,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("segmentation rules must be finite".into()));
        }
        if self.min_duration_s <= 0.0 || self.max_duration_s <= 0.0 {
            return Err(Error::Config("durations must be positive".into()));
        }
        if self.min_duration_s >= self.max_duration_s {
            return Err(Error::Config(format!(
                "min_duration_s ({}) must be below max_duration_s ({})",
                self.min_duration_s, self.max_duration_s
            )));
        }
        if self.refractory_s < 0.0 {
            return Err(Error::Config("refractory_s must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CycleStats {
    pub production_time_s: f64,
    pub weight_tonne: f64,
    pub energy_kwh: f64,
    pub specific_energy_kwh_per_tonne: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeltingCycle {
    pub id: usize,
    pub start_row: usize,
    pub end_row: usize,
    pub stats: CycleStats,
    pub cluster: Option<usize>,
}

impl MeltingCycle {
    pub fn len(&self) -> usize {
        self.end_row - self.start_row
    }

    pub fn is_empty(&self) -> bool {
        self.end_row == self.start_row
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub cycles: Vec<MeltingCycle>,
    /// Excursions dropped for violating the duration bounds or running off the end of the data.
    pub discarded: usize,
}

/// Splits the series into cycles using the temperature variable with schema index `temp_var`.
pub fn segment_cycles(
    ds: &TimeSeriesDataset,
    rules: &SegmentationRules,
    temp_var: usize,
) -> Result<Segmentation> {
    rules.validate()?;
    let pos = ds
        .position_of(temp_var)
        .ok_or(Error::UnknownVariable(temp_var))?;
    if ds.observed_count(pos) == 0 {
        return Err(Error::AllMasked(temp_var));
    }
    let temp = ds.column(pos);
    let obs = ds.observed(pos);

    let mut cycles = Vec::new();
    let mut discarded = 0;
    let mut seen_below = false;
    let mut last_end_time: Option<f64> = None;
    // (start_row, armed)
    let mut open: Option<(usize, bool)> = None;

    for t in 0..ds.n_rows() {
        if !obs[t] {
            continue;
        }
        let v = temp[t];
        match open {
            None => {
                if v <= rules.start_temp_c {
                    seen_below = true;
                } else if seen_below {
                    let rested = last_end_time
                        .map_or(true, |e| ds.time_of(t) - e >= rules.refractory_s);
                    if rested {
                        open = Some((t, v >= rules.end_temp_c));
                    }
                    seen_below = false;
                }
            }
            Some((start, armed)) => {
                let armed = armed || v >= rules.end_temp_c;
                let ends = if armed {
                    v < rules.end_temp_c
                } else {
                    v <= rules.start_temp_c
                };
                if !ends {
                    open = Some((start, armed));
                    continue;
                }
                open = None;
                last_end_time = Some(ds.time_of(t));
                seen_below = v <= rules.start_temp_c;
                let duration = ds.time_of(t) - ds.time_of(start);
                if duration < rules.min_duration_s || duration > rules.max_duration_s {
                    discarded += 1;
                } else {
                    cycles.push(MeltingCycle {
                        id: cycles.len(),
                        start_row: start,
                        end_row: t,
                        stats: CycleStats::default(),
                        cluster: None,
                    });
                }
            }
        }
    }
    if open.is_some() {
        discarded += 1;
    }
    Ok(Segmentation { cycles, discarded })
}

/// Schema indices of the variables cycle statistics are read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatVariables {
    pub weight: usize,
    pub energy: usize,
}

fn tonnes_per_unit(unit: &str) -> f64 {
    match unit.trim().to_ascii_lowercase().as_str() {
        "kg" => 1e-3,
        "g" => 1e-6,
        _ => 1.0,
    }
}

/// Consumption from a cumulative counter: max minus first reading, with a
/// drop below half the previous reading treated as a counter reset (the new
/// segment then counts from zero).
pub fn counter_consumption(readings: &[f64]) -> Option<f64> {
    let first = *readings.first()?;
    let mut total = 0.0;
    let mut base = first;
    let mut seg_max = first;
    let mut prev = first;
    for &v in &readings[1..] {
        if v < 0.5 * prev {
            total += seg_max - base;
            base = 0.0;
            seg_max = v;
        } else {
            seg_max = seg_max.max(v);
        }
        prev = v;
    }
    total += seg_max - base;
    Some(total.max(0.0))
}

/// Computes cycle statistics from raw (unstandardized) values.
pub fn compute_cycle_stats(
    ds: &TimeSeriesDataset,
    cycle: &MeltingCycle,
    vars: StatVariables,
) -> Result<CycleStats> {
    let wpos = ds
        .position_of(vars.weight)
        .ok_or(Error::UnknownVariable(vars.weight))?;
    let epos = ds
        .position_of(vars.energy)
        .ok_or(Error::UnknownVariable(vars.energy))?;
    let range = cycle.start_row..cycle.end_row;
    let observed = |pos: usize| -> Vec<f64> {
        range
            .clone()
            .filter(|&t| ds.observed(pos)[t])
            .map(|t| ds.column(pos)[t])
            .collect()
    };
    let production_time_s = cycle.len() as f64 * ds.sample_interval_s();
    let weights = observed(wpos);
    let weight_tonne = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        * tonnes_per_unit(&ds.variables()[wpos].unit);
    if !(weight_tonne > 0.0) {
        return Err(Error::UndefinedSpecificEnergy(if weight_tonne.is_finite() {
            weight_tonne
        } else {
            0.0
        }));
    }
    let energy_kwh = counter_consumption(&observed(epos)).unwrap_or(0.0);
    Ok(CycleStats {
        production_time_s,
        weight_tonne,
        energy_kwh,
        specific_energy_kwh_per_tonne: energy_kwh / weight_tonne,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPartition {
    pub assignments: BTreeMap<usize, usize>,
    pub k: usize,
}

impl ClusterPartition {
    pub fn from_assignments(assignments: BTreeMap<usize, usize>) -> Self {
        let k = assignments.values().collect::<BTreeSet<_>>().len();
        Self { assignments, k }
    }

    pub fn labels(&self) -> BTreeSet<usize> {
        self.assignments.values().copied().collect()
    }

    pub fn members(&self, label: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .filter(|(_, &l)| l == label)
            .map(|(&id, _)| id)
            .collect()
    }

    pub fn apply(&self, cycles: &mut [MeltingCycle]) {
        for c in cycles {
            c.cluster = self.assignments.get(&c.id).copied();
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct LabelRow {
    cycle_id: usize,
    cluster: usize,
}

/// Reads a `cycle_id,cluster` file. Labels are kept as written; `k` counts
/// the distinct labels.
pub fn ingest_cluster_labels(path: &Path, cycles: &[MeltingCycle]) -> Result<ClusterPartition> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let known: BTreeSet<usize> = cycles.iter().map(|c| c.id).collect();
    let mut assignments = BTreeMap::new();
    for row in reader.deserialize::<LabelRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        if !known.contains(&row.cycle_id) {
            return Err(Error::UnknownCycleId(row.cycle_id));
        }
        assignments.insert(row.cycle_id, row.cluster);
    }
    if let Some(missing) = known.iter().find(|id| !assignments.contains_key(id)) {
        return Err(Error::MissingCycleId(*missing));
    }
    Ok(ClusterPartition::from_assignments(assignments))
}

pub fn export_cluster_labels(path: &Path, partition: &ClusterPartition) -> Result<()> {
    let mut out = String::from("cycle_id,cluster\n");
    for (id, label) in &partition.assignments {
        out.push_str(&format!("{id},{label}\n"));
    }
    crate::io::write_atomic(path, out.as_bytes())
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(io) = e.kind() {
        return Error::io(path, std::io::Error::new(io.kind(), io.to_string()));
    }
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CycleRow {
    cycle_id: usize,
    start_row: usize,
    end_row: usize,
    production_time_s: f64,
    weight_tonne: f64,
    energy_kwh: f64,
    specific_energy_kwh_per_tonne: f64,
    cluster: Option<usize>,
}

pub fn write_cycle_index(path: &Path, cycles: &[MeltingCycle]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in cycles {
        w.serialize(CycleRow {
            cycle_id: c.id,
            start_row: c.start_row,
            end_row: c.end_row,
            production_time_s: c.stats.production_time_s,
            weight_tonne: c.stats.weight_tonne,
            energy_kwh: c.stats.energy_kwh,
            specific_energy_kwh_per_tonne: c.stats.specific_energy_kwh_per_tonne,
            cluster: c.cluster,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    let mut bytes = w.into_inner().map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if cycles.is_empty() {
        bytes = b"cycle_id,start_row,end_row,production_time_s,weight_tonne,energy_kwh,specific_energy_kwh_per_tonne,cluster\n".to_vec();
    }
    crate::io::write_atomic(path, &bytes)
}

pub fn read_cycle_index(path: &Path) -> Result<Vec<MeltingCycle>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for row in reader.deserialize::<CycleRow>() {
        let r = row.map_err(|e| csv_error(path, e))?;
        if r.end_row <= r.start_row {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                message: format!("cycle {} has an empty row range", r.cycle_id),
            });
        }
        out.push(MeltingCycle {
            id: r.cycle_id,
            start_row: r.start_row,
            end_row: r.end_row,
            stats: CycleStats {
                production_time_s: r.production_time_s,
                weight_tonne: r.weight_tonne,
                energy_kwh: r.energy_kwh,
                specific_energy_kwh_per_tonne: r.specific_energy_kwh_per_tonne,
            },
            cluster: r.cluster,
        });
    }
    Ok(out)
}

/// Linear resampling of a cycle's observed temperature trajectory to `len` points
/// over normalized cycle time.
pub fn temperature_profile(
    ds: &TimeSeriesDataset,
    cycle: &MeltingCycle,
    temp_pos: usize,
    len: usize,
) -> Option<Vec<f64>> {
    let pts: Vec<(f64, f64)> = (cycle.start_row..cycle.end_row)
        .filter(|&t| ds.observed(temp_pos)[t])
        .map(|t| (t as f64, ds.column(temp_pos)[t]))
        .collect();
    if pts.len() < 2 || len == 0 {
        return None;
    }
    let (t0, t1) = (pts[0].0, pts[pts.len() - 1].0);
    let mut out = Vec::with_capacity(len);
    let mut k = 0;
    for s in 0..len {
        let frac = if len == 1 { 0.0 } else { s as f64 / (len - 1) as f64 };
        let t = t0 + frac * (t1 - t0);
        while k + 2 < pts.len() && pts[k + 1].0 < t {
            k += 1;
        }
        let (a, b) = (pts[k], pts[k + 1]);
        let w = ((t - a.0) / (b.0 - a.0)).clamp(0.0, 1.0);
        out.push(a.1 + w * (b.1 - a.1));
    }
    Some(out)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means with k-means++ initialisation. Returns a label per point.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Vec<usize> {
    let n = points.len();
    let mut rng = rng_from(stable_mix(seed, 0x6b6d));
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }

    let nearest = |p: &[f64], centers: &[Vec<f64>]| -> usize {
        let mut best = (f64::INFINITY, 0);
        for (c, center) in centers.iter().enumerate() {
            let d = sq_dist(p, center);
            if d < best.0 {
                best = (d, c);
            }
        }
        best.1
    };
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..max_iter {
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}

/// Stand-in clustering: k-means over temperature profiles resampled to `profile_len` points.
pub fn baseline_cluster(
    cycles: &[MeltingCycle],
    ds: &TimeSeriesDataset,
    temp_var: usize,
    k: usize,
    profile_len: usize,
    seed: u64,
) -> Result<ClusterPartition> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k > cycles.len() {
        return Err(Error::TooFewCycles {
            needed: k,
            got: cycles.len(),
        });
    }
    let pos = ds
        .position_of(temp_var)
        .ok_or(Error::UnknownVariable(temp_var))?;
    let profiles = cycles
        .iter()
        .map(|c| {
            temperature_profile(ds, c, pos, profile_len.max(2)).ok_or_else(|| {
                Error::InvalidDataset(format!(
                    "cycle {} has fewer than two observed temperatures",
                    c.id
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = kmeans(&profiles, k, seed, 100);
    let assignments = cycles.iter().map(|c| c.id).zip(labels).collect();
    Ok(ClusterPartition { assignments, k })
}
