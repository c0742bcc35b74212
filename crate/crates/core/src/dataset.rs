//! Multivariate time series with a missing-value mask and per-variable metadata.
//!
//! Missing cells are masked, never imputed. Variables keep the 1-based index
//! they were declared with in the schema; dropping a variable never renumbers
//! the others.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_INTERVAL_S: f64 = 10.0;
pub const DEFAULT_MAX_MISSING_FRACTION: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Process,
    Energy,
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableMeta {
    pub index: usize,
    pub name: String,
    #[serde(default)]
    pub unit: String,
    pub role: Role,
}

impl VariableMeta {
    pub fn new(index: usize, name: &str, unit: &str, role: Role) -> Self {
        Self {
            index,
            name: name.to_string(),
            unit: unit.to_string(),
            role,
        }
    }
}

/// The twelve furnace signals with the numbering used throughout the analysis
/// reports (pair ids such as `(5, 11)` refer to these indices).
pub fn furnace_schema() -> Vec<VariableMeta> {
    use Role::*;
    vec![
        VariableMeta::new(1, "weight", "kg", Process),
        VariableMeta::new(2, "state", "bit", Auxiliary),
        VariableMeta::new(3, "temperature", "degC", Process),
        VariableMeta::new(4, "frequency", "Hz", Process),
        VariableMeta::new(5, "voltage", "V", Process),
        VariableMeta::new(6, "current", "A", Process),
        VariableMeta::new(7, "isolation_resistance", "kOhm", Auxiliary),
        VariableMeta::new(8, "energy_act", "kWh", Energy),
        VariableMeta::new(9, "energy_specific", "kWh/tonne", Energy),
        VariableMeta::new(10, "power", "kW", Energy),
        VariableMeta::new(11, "cooling_water_temperature", "degC", Auxiliary),
        VariableMeta::new(12, "cooling_water_quantity", "L/min", Auxiliary),
    ]
}

fn validate_schema(variables: &[VariableMeta]) -> Result<()> {
    let mut seen = HashSet::new();
    for v in variables {
        if v.name.trim().is_empty() {
            return Err(Error::InvalidDataset(format!(
                "variable {} has an empty name",
                v.index
            )));
        }
        if v.index == 0 || !seen.insert(v.index) {
            return Err(Error::InvalidDataset(format!(
                "variable index {} is zero or duplicated",
                v.index
            )));
        }
    }
    Ok(())
}

/// Checks that schema indices run 1..=N without gaps.
pub fn check_contiguous(variables: &[VariableMeta]) -> Result<()> {
    validate_schema(variables)?;
    let mut idx: Vec<usize> = variables.iter().map(|v| v.index).collect();
    idx.sort_unstable();
    if idx.iter().enumerate().any(|(k, &i)| i != k + 1) {
        return Err(Error::InvalidDataset(
            "schema indices are not contiguous from 1".into(),
        ));
    }
    Ok(())
}

/// T x N samples stored column-major. Missing cells hold NaN and a `false` mask bit.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    columns: Vec<Vec<f64>>,
    mask: Vec<Vec<bool>>,
    variables: Vec<VariableMeta>,
    sample_interval_s: f64,
    timestamps: Option<Vec<i64>>,
}

impl TimeSeriesDataset {
    pub fn new(
        columns: Vec<Vec<f64>>,
        mask: Vec<Vec<bool>>,
        variables: Vec<VariableMeta>,
        sample_interval_s: f64,
    ) -> Result<Self> {
        if !(sample_interval_s > 0.0) {
            return Err(Error::InvalidDataset(format!(
                "sample interval must be positive, got {sample_interval_s}"
            )));
        }
        if columns.len() != variables.len() || mask.len() != variables.len() {
            return Err(Error::InvalidDataset(format!(
                "{} columns, {} mask columns, {} variables",
                columns.len(),
                mask.len(),
                variables.len()
            )));
        }
        validate_schema(&variables)?;
        let t = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != t) || mask.iter().any(|m| m.len() != t) {
            return Err(Error::InvalidDataset("ragged columns".into()));
        }
        let mut columns = columns;
        for (col, m) in columns.iter_mut().zip(&mask) {
            for (v, &obs) in col.iter_mut().zip(m) {
                if !obs {
                    *v = f64::NAN;
                }
            }
        }
        Ok(Self {
            columns,
            mask,
            variables,
            sample_interval_s,
            timestamps: None,
        })
    }

    /// Builds a dataset treating non-finite cells as missing.
    pub fn from_columns(
        columns: Vec<Vec<f64>>,
        variables: Vec<VariableMeta>,
        sample_interval_s: f64,
    ) -> Result<Self> {
        let mask = columns
            .iter()
            .map(|c| c.iter().map(|v| v.is_finite()).collect())
            .collect();
        Self::new(columns, mask, variables, sample_interval_s)
    }

    pub fn with_timestamps(mut self, timestamps: Vec<i64>) -> Result<Self> {
        if timestamps.len() != self.n_rows() {
            return Err(Error::InvalidDataset(
                "timestamp column length differs from data".into(),
            ));
        }
        if let Some(row) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotonicTimestamps { row: row + 1 });
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &[VariableMeta] {
        &self.variables
    }

    pub fn sample_interval_s(&self) -> f64 {
        self.sample_interval_s
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    /// Time of row `t` in seconds: the timestamp when present, else `t * interval`.
    pub fn time_of(&self, t: usize) -> f64 {
        match &self.timestamps {
            Some(ts) => ts[t] as f64,
            None => t as f64 * self.sample_interval_s,
        }
    }

    pub fn column(&self, pos: usize) -> &[f64] {
        &self.columns[pos]
    }

    pub fn observed(&self, pos: usize) -> &[bool] {
        &self.mask[pos]
    }

    pub fn value(&self, row: usize, pos: usize) -> Option<f64> {
        self.mask[pos][row].then(|| self.columns[pos][row])
    }

    /// Column position of the variable with schema index `index`.
    pub fn position_of(&self, index: usize) -> Option<usize> {
        self.variables.iter().position(|v| v.index == index)
    }

    pub fn position_by_name(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn observed_count(&self, pos: usize) -> usize {
        self.mask[pos].iter().filter(|&&m| m).count()
    }

    pub fn missing_fraction(&self, pos: usize) -> f64 {
        let t = self.n_rows();
        if t == 0 {
            return 0.0;
        }
        1.0 - self.observed_count(pos) as f64 / t as f64
    }

    /// Rows `[start, end)` as a new dataset.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            columns: self.columns.iter().map(|c| c[start..end].to_vec()).collect(),
            mask: self.mask.iter().map(|m| m[start..end].to_vec()).collect(),
            variables: self.variables.clone(),
            sample_interval_s: self.sample_interval_s,
            timestamps: self.timestamps.as_ref().map(|t| t[start..end].to_vec()),
        }
    }

    /// Keeps the given column positions, in the given order.
    pub fn select_positions(&self, positions: &[usize]) -> Self {
        Self {
            columns: positions.iter().map(|&p| self.columns[p].clone()).collect(),
            mask: positions.iter().map(|&p| self.mask[p].clone()).collect(),
            variables: positions.iter().map(|&p| self.variables[p].clone()).collect(),
            sample_interval_s: self.sample_interval_s,
            timestamps: self.timestamps.clone(),
        }
    }

    /// Appends the rows of `other`, which must share the variable list.
    /// Timestamps are dropped because concatenated segments are not contiguous in time.
    pub fn append_rows(&mut self, other: &Self) -> Result<()> {
        if self.variables != other.variables {
            return Err(Error::DimensionMismatch(
                "appended dataset has a different variable list".into(),
            ));
        }
        for (c, o) in self.columns.iter_mut().zip(&other.columns) {
            c.extend_from_slice(o);
        }
        for (m, o) in self.mask.iter_mut().zip(&other.mask) {
            m.extend_from_slice(o);
        }
        self.timestamps = None;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    MissingFraction { fraction: f64, threshold: f64 },
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedVariable {
    pub index: usize,
    pub name: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub index: usize,
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardizationReport {
    pub scales: Vec<ColumnScale>,
    pub variables_dropped: Vec<DroppedVariable>,
}

impl StandardizationReport {
    pub fn merge(mut self, other: StandardizationReport) -> Self {
        self.scales.extend(other.scales);
        self.variables_dropped.extend(other.variables_dropped);
        self
    }
}

/// Removes variables whose missing fraction exceeds `max_missing_fraction`.
pub fn drop_sparse_variables(
    ds: &TimeSeriesDataset,
    max_missing_fraction: f64,
) -> Result<(TimeSeriesDataset, StandardizationReport)> {
    if !(0.0..=1.0).contains(&max_missing_fraction) {
        return Err(Error::Config(format!(
            "max_missing_fraction {max_missing_fraction} outside [0, 1]"
        )));
    }
    let mut keep = Vec::new();
    let mut report = StandardizationReport::default();
    for (pos, var) in ds.variables.iter().enumerate() {
        let fraction = ds.missing_fraction(pos);
        if fraction > max_missing_fraction {
            report.variables_dropped.push(DroppedVariable {
                index: var.index,
                name: var.name.clone(),
                reason: DropReason::MissingFraction {
                    fraction,
                    threshold: max_missing_fraction,
                },
            });
        } else {
            keep.push(pos);
        }
    }
    if keep.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((ds.select_positions(&keep), report))
}

/// Z-scores every variable over its observed cells (population standard
/// deviation). Zero-variance variables are dropped.
pub fn standardize(ds: &TimeSeriesDataset) -> Result<(TimeSeriesDataset, StandardizationReport)> {
    let mut report = StandardizationReport::default();
    let mut keep = Vec::new();
    let mut scaled_cols = Vec::new();
    for (pos, var) in ds.variables.iter().enumerate() {
        let obs: Vec<f64> = ds.columns[pos]
            .iter()
            .zip(&ds.mask[pos])
            .filter_map(|(&v, &m)| m.then_some(v))
            .collect();
        if obs.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "variable {} ({}) has fewer than two observed values",
                var.index, var.name
            )));
        }
        let n = obs.len() as f64;
        let mean = obs.iter().sum::<f64>() / n;
        let var_pop = obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var_pop.sqrt();
        if !(std > 1e-12 * mean.abs().max(1.0)) {
            report.variables_dropped.push(DroppedVariable {
                index: var.index,
                name: var.name.clone(),
                reason: DropReason::ZeroVariance,
            });
            continue;
        }
        report.scales.push(ColumnScale {
            index: var.index,
            name: var.name.clone(),
            mean,
            std,
        });
        keep.push(pos);
        scaled_cols.push(
            ds.columns[pos]
                .iter()
                .map(|&v| (v - mean) / std)
                .collect::<Vec<_>>(),
        );
    }
    if keep.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut out = ds.select_positions(&keep);
    out.columns = scaled_cols;
    Ok((out, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Column(usize),
    /// Per-row mean of observed cells over several sensor columns.
    Mean,
}

/// Loads a CSV with the default 10 s sample interval.
pub fn load_csv(path: &Path, schema: &[VariableMeta]) -> Result<TimeSeriesDataset> {
    load_csv_with_interval(path, schema, DEFAULT_SAMPLE_INTERVAL_S)
}

/// Reads a CSV whose header names the schema variables. Empty or non-numeric
/// cells are masked. An optional `timestamp` column (integer seconds or
/// ISO-8601) must be strictly increasing. A schema variable named `<base>_mean`
/// that is absent from the header is built as the per-row mean of the header
/// columns named `<base>_<anything>`.
pub fn load_csv_with_interval(
    path: &Path,
    schema: &[VariableMeta],
    sample_interval_s: f64,
) -> Result<TimeSeriesDataset> {
    validate_schema(schema)?;
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let ts_col = header.iter().position(|h| h == "timestamp");

    let mut sources = Vec::with_capacity(schema.len());
    let mut mean_groups: Vec<Vec<usize>> = Vec::with_capacity(schema.len());
    for var in schema {
        if let Some(c) = header.iter().position(|h| *h == var.name) {
            sources.push(Source::Column(c));
            mean_groups.push(Vec::new());
            continue;
        }
        let group: Vec<usize> = var
            .name
            .strip_suffix("_mean")
            .map(|base| {
                let prefix = format!("{base}_");
                header
                    .iter()
                    .enumerate()
                    .filter(|(_, h)| h.starts_with(&prefix))
                    .map(|(c, _)| c)
                    .collect()
            })
            .unwrap_or_default();
        if group.is_empty() {
            return Err(Error::SchemaMismatch(format!(
                "column '{}' not found in header",
                var.name
            )));
        }
        sources.push(Source::Mean);
        mean_groups.push(group);
    }

    let parse = |s: &str| -> Option<f64> { s.parse::<f64>().ok().filter(|v| v.is_finite()) };

    let mut columns = vec![Vec::new(); schema.len()];
    let mut mask = vec![Vec::new(); schema.len()];
    let mut timestamps = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        if let Some(tc) = ts_col {
            let raw = record.get(tc).unwrap_or("");
            let ts = parse_timestamp(raw).ok_or_else(|| Error::Csv {
                path: path.to_path_buf(),
                message: format!("unparseable timestamp '{raw}'"),
            })?;
            timestamps.push(ts);
        }
        for (k, src) in sources.iter().enumerate() {
            let cell = match src {
                Source::Column(c) => record.get(*c).and_then(parse),
                Source::Mean => {
                    let vals: Vec<f64> = mean_groups[k]
                        .iter()
                        .filter_map(|&c| record.get(c).and_then(parse))
                        .collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                }
            };
            columns[k].push(cell.unwrap_or(f64::NAN));
            mask[k].push(cell.is_some());
        }
    }
    let ds = TimeSeriesDataset::new(columns, mask, schema.to_vec(), sample_interval_s)?;
    if ts_col.is_some() {
        ds.with_timestamps(timestamps)
    } else {
        Ok(ds)
    }
}

fn parse_timestamp(raw: &str) -> Option<i64> {
    if let Ok(v) = raw.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

/// Writes the dataset in the layout `load_csv` reads. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_csv(path: &Path, ds: &TimeSeriesDataset) -> Result<()> {
    let mut out = String::new();
    write_csv_to(&mut out, ds).expect("writing to a String cannot fail");
    crate::io::write_atomic(path, out.as_bytes())
}

fn write_csv_to(out: &mut impl fmt::Write, ds: &TimeSeriesDataset) -> fmt::Result {
    let mut header: Vec<&str> = Vec::new();
    if ds.timestamps.is_some() {
        header.push("timestamp");
    }
    header.extend(ds.variables.iter().map(|v| v.name.as_str()));
    writeln!(out, "{}", header.join(","))?;
    for t in 0..ds.n_rows() {
        let mut first = true;
        if let Some(ts) = &ds.timestamps {
            write!(out, "{}", ts[t])?;
            first = false;
        }
        for pos in 0..ds.n_vars() {
            if !first {
                out.write_char(',')?;
            }
            first = false;
            if ds.mask[pos][t] {
                write!(out, "{}", ds.columns[pos][t])?;
            }
        }
        out.write_char('\n')?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tiny_schema() -> Vec<VariableMeta> {
        vec![
            VariableMeta::new(1, "a", "", Role::Process),
            VariableMeta::new(2, "b", "", Role::Energy),
        ]
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn one_empty_cell_gives_one_false_mask_entry() {
        let f = write_tmp("a,b\n1,2\n3,\n5,6\n");
        let ds = load_csv(f.path(), &tiny_schema()).unwrap();
        assert_eq!(ds.n_rows(), 3);
        let missing: usize = (0..2)
            .map(|p| ds.observed(p).iter().filter(|m| !**m).count())
            .sum();
        assert_eq!(missing, 1);
        assert!(!ds.observed(1)[1]);
        assert_eq!(ds.value(2, 1), Some(6.0));
    }

    #[test]
    fn header_missing_variable_is_schema_mismatch() {
        let f = write_tmp("a\n1\n2\n");
        let err = load_csv(f.path(), &tiny_schema()).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv(Path::new("/nonexistent/x.csv"), &tiny_schema()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn furnace_header_loads_twelve_variables() {
        let schema = furnace_schema();
        let names: Vec<&str> = schema.iter().map(|v| v.name.as_str()).collect();
        let mut content = names.join(",");
        content.push('\n');
        content.push_str(&vec!["1.5"; 12].join(","));
        content.push('\n');
        let f = write_tmp(&content);
        let ds = load_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.n_vars(), 12);
        let idx: Vec<usize> = ds.variables().iter().map(|v| v.index).collect();
        assert_eq!(idx, (1..=12).collect::<Vec<_>>());
        check_contiguous(ds.variables()).unwrap();
    }

    #[test]
    fn timestamps_must_increase() {
        let f = write_tmp("timestamp,a,b\n0,1,2\n10,1,2\n10,1,2\n");
        let err = load_csv(f.path(), &tiny_schema()).unwrap_err();
        assert!(matches!(err, Error::NonMonotonicTimestamps { row: 2 }));

        let f = write_tmp("timestamp,a,b\n2024-01-01T00:00:00Z,1,2\n2024-01-01T00:00:10Z,1,2\n");
        let ds = load_csv(f.path(), &tiny_schema()).unwrap();
        assert_eq!(ds.time_of(1) - ds.time_of(0), 10.0);
    }

    #[test]
    fn mean_aggregation_over_sensor_columns() {
        let schema = vec![VariableMeta::new(1, "cw_mean", "", Role::Auxiliary)];
        let f = write_tmp("cw_1,cw_2,cw_3\n1,2,3\n,4,\n,,\n");
        let ds = load_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.value(0, 0), Some(2.0));
        assert_eq!(ds.value(1, 0), Some(4.0));
        assert_eq!(ds.value(2, 0), None);
    }

    fn sparse_ds() -> TimeSeriesDataset {
        // column 0 fully observed, column 1 has 995 of 1000 missing
        let a: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..1000)
            .map(|i| if i < 5 { 1.0 } else { f64::NAN })
            .collect();
        TimeSeriesDataset::from_columns(vec![a, b], tiny_schema(), 10.0).unwrap()
    }

    #[test]
    fn drops_variable_above_threshold() {
        let (ds, report) = drop_sparse_variables(&sparse_ds(), DEFAULT_MAX_MISSING_FRACTION).unwrap();
        assert_eq!(ds.n_vars(), 1);
        assert_eq!(ds.variables()[0].index, 1);
        assert_eq!(report.variables_dropped.len(), 1);
        assert_eq!(report.variables_dropped[0].index, 2);
        assert!(matches!(
            report.variables_dropped[0].reason,
            DropReason::MissingFraction { .. }
        ));
    }

    #[test]
    fn fully_observed_is_unchanged() {
        let ds = TimeSeriesDataset::from_columns(
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            tiny_schema(),
            10.0,
        )
        .unwrap();
        let (out, report) = drop_sparse_variables(&ds, 0.99).unwrap();
        assert_eq!(out, ds);
        assert!(report.variables_dropped.is_empty());
    }

    #[test]
    fn zero_threshold_with_gaps_everywhere_is_empty() {
        let ds = TimeSeriesDataset::from_columns(
            vec![vec![1.0, f64::NAN], vec![f64::NAN, 4.0]],
            tiny_schema(),
            10.0,
        )
        .unwrap();
        assert!(matches!(
            drop_sparse_variables(&ds, 0.0),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn standardize_basics() {
        let ds = TimeSeriesDataset::from_columns(
            vec![vec![0.0, 2.0], vec![5.0, 5.0]],
            tiny_schema(),
            10.0,
        )
        .unwrap();
        let (out, report) = standardize(&ds).unwrap();
        assert_eq!(out.n_vars(), 1);
        assert_eq!(out.column(0), &[-1.0, 1.0]);
        assert_eq!(report.variables_dropped[0].reason, DropReason::ZeroVariance);
        assert_eq!(report.variables_dropped[0].index, 2);
    }

    #[test]
    fn standardize_twice_is_identity() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 4.0 + 7.0).collect();
        let mut b: Vec<f64> = (0..50).map(|i| (i as f64).sqrt()).collect();
        b[3] = f64::NAN;
        let ds = TimeSeriesDataset::from_columns(vec![a, b], tiny_schema(), 10.0).unwrap();
        let (once, _) = standardize(&ds).unwrap();
        let (twice, _) = standardize(&once).unwrap();
        for p in 0..2 {
            assert_eq!(once.observed(p), ds.observed(p));
            assert_eq!(twice.observed(p), ds.observed(p));
            for (x, y) in once.column(p).iter().zip(twice.column(p)) {
                if x.is_finite() {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn write_then_load_round_trips() {
        let a = vec![0.1, 1.0 / 3.0, -2.5e-17, f64::NAN];
        let b = vec![std::f64::consts::PI, 1e300, 7.0, 8.0];
        let ds = TimeSeriesDataset::from_columns(vec![a, b], tiny_schema(), 10.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_csv(&p, &ds).unwrap();
        let back = load_csv(&p, &tiny_schema()).unwrap();
        for pos in 0..2 {
            assert_eq!(back.observed(pos), ds.observed(pos));
            for (x, y) in back.column(pos).iter().zip(ds.column(pos)) {
                assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
        }
    }
}
