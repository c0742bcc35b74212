//! Synthetic furnace trace with labelled melting cycles, used for end-to-end
//! runs of the pipeline. Cycles of different clusters are interleaved and
//! separated by idle gaps; within a cycle the process signals follow a small
//! cluster-specific lagged causal system.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{furnace_schema, write_csv, TimeSeriesDataset};
use crate::error::Result;
use crate::io;
use crate::rng::{rng_from, stable_mix};

const GAP_ROWS: usize = 40;
const INTERVAL_S: f64 = 10.0;
const EPOCH: i64 = 1_700_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FurnaceFixture {
    pub data: TimeSeriesDataset,
    /// Cluster label per cycle id (cycles numbered in time order).
    pub labels: BTreeMap<usize, usize>,
    /// `[start, end)` rows of every cycle.
    pub cycle_rows: Vec<(usize, usize)>,
}

/// Process channels simulated inside a cycle.
#[derive(Clone, Copy)]
enum Ch {
    Temp = 0,
    Freq,
    Volt,
    Curr,
    Iso,
    Power,
    WaterTemp,
    WaterFlow,
}

const N_CH: usize = 8;

/// `(source, target, lag, coefficient)` active in `cluster`.
fn cluster_edges(cluster: usize) -> Vec<(Ch, Ch, usize, f64)> {
    use Ch::*;
    let mut e = vec![(Volt, Curr, 1, 0.5), (Curr, Power, 0, 0.7)];
    if cluster < 6 {
        e.push((Volt, WaterTemp, 3, 0.6));
    }
    if cluster % 2 == 0 {
        e.push((Freq, Volt, 1, 0.4));
    }
    if cluster < 4 {
        e.push((Temp, WaterFlow, 2, 0.5));
    }
    if cluster == 6 {
        e.push((Power, Temp, 1, 0.4));
    }
    e
}

fn simulate_channels(cluster: usize, len: usize, rng: &mut crate::rng::Rng) -> Vec<[f64; N_CH]> {
    const BURN: usize = 50;
    let edges = cluster_edges(cluster);
    let mut x = vec![[0.0; N_CH]; len + BURN];
    for t in 3..len + BURN {
        let mut row = [0.0; N_CH];
        for (c, v) in row.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(rng);
            *v = 0.4 * x[t - 1][c] + e;
        }
        // lag-0 edges are added after all lagged terms; sources of lag-0
        // edges are never lag-0 targets.
        for &(s, d, lag, w) in edges.iter().filter(|e| e.2 > 0) {
            row[d as usize] += w * x[t - lag][s as usize];
        }
        for &(s, d, _, w) in edges.iter().filter(|e| e.2 == 0) {
            row[d as usize] += w * row[s as usize];
        }
        x[t] = row;
    }
    x.split_off(BURN)
}

/// Builds the trace: `clusters * cycles_per_cluster` cycles in shuffled
/// cluster order, 12 schema variables and a timestamp column.
pub fn furnace_fixture(clusters: usize, cycles_per_cluster: usize, seed: u64) -> Result<FurnaceFixture> {
    let mut rng = rng_from(stable_mix(seed, 0x6678));
    let mut order: Vec<usize> = (0..clusters)
        .flat_map(|c| std::iter::repeat(c).take(cycles_per_cluster))
        .collect();
    order.shuffle(&mut rng);

    let schema = furnace_schema();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    let mut labels = BTreeMap::new();
    let mut cycle_rows = Vec::new();
    let mut counter = 1000.0;

    let push_gap = |cols: &mut Vec<Vec<f64>>, counter: &mut f64, rng: &mut crate::rng::Rng| {
        for _ in 0..GAP_ROWS {
            let idle_power = 40.0 + 5.0 * rng.random::<f64>();
            *counter += idle_power * INTERVAL_S / 3600.0;
            let row = [
                0.0,
                0.0,
                100.0 + 5.0 * rng.random::<f64>(),
                0.0,
                0.0,
                0.0,
                900.0 + 10.0 * rng.random::<f64>(),
                *counter,
                0.0,
                idle_power,
                25.0 + rng.random::<f64>(),
                50.0 + rng.random::<f64>(),
            ];
            for (c, v) in row.into_iter().enumerate() {
                cols[c].push(v);
            }
        }
    };

    push_gap(&mut cols, &mut counter, &mut rng);
    for (id, &cluster) in order.iter().enumerate() {
        let len = 200 + rng.random_range(0..60);
        let start = cols[0].len();
        let ch = simulate_channels(cluster, len, &mut rng);
        let c = cluster as f64;
        let charge = 9000.0 + 300.0 * c + 200.0 * rng.random::<f64>();
        let plateau = 1400.0 + 10.0 * c;
        let start_counter = counter;
        for (s, x) in ch.iter().enumerate() {
            let f = s as f64 / len as f64;
            let profile = if f < 0.3 {
                210.0 + (plateau - 210.0) * f / 0.3
            } else if f < 0.8 {
                plateau
            } else {
                plateau - (plateau - 310.0) * (f - 0.8) / 0.2
            };
            let temp = if s == 0 { 210.0 } else { (profile + 15.0 * x[Ch::Temp as usize]).max(305.0) };
            let weight = if f < 0.4 { 2000.0 + (charge - 2000.0) * f / 0.4 } else { charge };
            let power = 3000.0 + 100.0 * c + 150.0 * x[Ch::Power as usize];
            counter += power * INTERVAL_S / 3600.0;
            let iso = if rng.random::<f64>() < 0.01 {
                f64::NAN
            } else {
                800.0 + 20.0 * x[Ch::Iso as usize]
            };
            let row = [
                weight,
                1.0,
                temp,
                500.0 + 10.0 * x[Ch::Freq as usize],
                1000.0 + 20.0 * c + 30.0 * x[Ch::Volt as usize],
                3000.0 + 60.0 * x[Ch::Curr as usize],
                iso,
                counter,
                (counter - start_counter) / (weight / 1000.0),
                power,
                30.0 + 2.0 * x[Ch::WaterTemp as usize],
                120.0 + 5.0 * x[Ch::WaterFlow as usize],
            ];
            for (k, v) in row.into_iter().enumerate() {
                cols[k].push(v);
            }
        }
        labels.insert(id, cluster);
        cycle_rows.push((start, start + len));
        push_gap(&mut cols, &mut counter, &mut rng);
    }
    let n = cols[0].len();
    let ts = (0..n).map(|t| EPOCH + (t as f64 * INTERVAL_S) as i64).collect();
    let data = TimeSeriesDataset::from_columns(cols, schema, INTERVAL_S)?.with_timestamps(ts)?;
    Ok(FurnaceFixture {
        data,
        labels,
        cycle_rows,
    })
}

/// Pipeline configuration matching [`write_furnace_fixture`]'s file names.
pub const FIXTURE_CONFIG: &str = r#"seed = 7

[paths]
input = "trace.csv"
labels = "labels.csv"
output = "out"

[sampler]
fraction = 0.3
emd_threshold = 0.6
mmd_threshold = 0.25

[discovery]
tau_max = 3
max_conds_dim = 2

[discovery.ci]
cmi_k = 10
cmi_permutations = 30
gpdc_permutations = 30

[variables]
discover = [4, 5, 6, 10, 11]
"#;

/// Writes `trace.csv`, `labels.csv` and `pipeline.toml` into `dir`.
pub fn write_furnace_fixture(dir: &Path, clusters: usize, cycles_per_cluster: usize, seed: u64) -> Result<FurnaceFixture> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    let fx = furnace_fixture(clusters, cycles_per_cluster, seed)?;
    write_csv(&dir.join("trace.csv"), &fx.data)?;
    let mut labels = String::from("cycle_id,cluster\n");
    for (id, c) in &fx.labels {
        labels.push_str(&format!("{id},{c}\n"));
    }
    io::write_atomic(&dir.join("labels.csv"), labels.as_bytes())?;
    io::write_atomic(&dir.join("pipeline.toml"), FIXTURE_CONFIG.as_bytes())?;
    Ok(fx)
}
