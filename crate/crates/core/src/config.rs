//! Pipeline configuration (TOML). Every section is optional; the effective
//! configuration, with all defaults filled in, is written next to the outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cycles::{SegmentationRules, StatVariables};
use crate::dataset::{furnace_schema, Role, VariableMeta};
use crate::error::{Error, Result};
use crate::pcmci::DiscoveryConfig;
use crate::rng::stable_mix;
use crate::sampler::SamplerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Sensor trace CSV.
    pub input: PathBuf,
    /// `cycle_id,cluster` file; baseline clustering is used when absent.
    pub labels: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            input: PathBuf::from("trace.csv"),
            labels: None,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataOptions {
    /// Sampling interval used when the CSV has no timestamp column.
    pub interval_s: f64,
    pub max_missing_fraction: f64,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self {
            interval_s: 10.0,
            max_missing_fraction: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    pub k: usize,
    pub profile_len: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self { k: 7, profile_len: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariableConfig {
    pub temperature: usize,
    pub weight: usize,
    pub energy: usize,
    /// Variable ids passed to discovery; all surviving variables when absent.
    pub discover: Option<Vec<usize>>,
    /// Role overrides keyed by variable id.
    pub roles: BTreeMap<String, Role>,
    /// Full schema; the twelve furnace signals when absent.
    pub schema: Option<Vec<VariableMeta>>,
}

impl Default for VariableConfig {
    fn default() -> Self {
        Self {
            temperature: 3,
            weight: 1,
            energy: 8,
            discover: None,
            roles: BTreeMap::new(),
            schema: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub min_common: usize,
    /// Graph file stem compared across clusters.
    pub method: String,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            min_common: 2,
            method: crate::synth::HYBRID.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub data: DataOptions,
    pub segmentation: SegmentationRules,
    pub clustering: ClusteringConfig,
    pub sampler: SamplerConfig,
    pub discovery: DiscoveryConfig,
    pub variables: VariableConfig,
    pub compare: CompareConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.base_dir = Some(base.to_path_buf());
        Ok(cfg)
    }
}

/// A validated configuration with derived seeds and resolved paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub config: PipelineConfig,
    pub input: PathBuf,
    pub labels: Option<PathBuf>,
    pub output: PathBuf,
    pub schema: Vec<VariableMeta>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.segmentation.validate()?;
        self.sampler.validate()?;
        self.discovery.validate()?;
        if !(self.data.interval_s > 0.0 && self.data.interval_s.is_finite()) {
            return Err(Error::Config("data.interval_s must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.data.max_missing_fraction) {
            return Err(Error::Config("data.max_missing_fraction outside [0, 1]".into()));
        }
        if self.clustering.k == 0 || self.clustering.profile_len < 2 {
            return Err(Error::Config("clustering needs k >= 1 and profile_len >= 2".into()));
        }
        if self.compare.min_common < 2 {
            return Err(Error::Config("compare.min_common must be at least 2".into()));
        }
        if self.compare.method.is_empty() || self.compare.method.contains(['/', '\\', '.']) {
            return Err(Error::Config(format!("invalid compare.method {:?}", self.compare.method)));
        }
        let schema = self.schema()?;
        let ids: Vec<usize> = schema.iter().map(|v| v.index).collect();
        for (what, id) in [
            ("temperature", self.variables.temperature),
            ("weight", self.variables.weight),
            ("energy", self.variables.energy),
        ] {
            if !ids.contains(&id) {
                return Err(Error::Config(format!("variables.{what} = {id} is not in the schema")));
            }
        }
        if let Some(d) = &self.variables.discover {
            if d.is_empty() {
                return Err(Error::Config("variables.discover is empty".into()));
            }
            if let Some(id) = d.iter().find(|id| !ids.contains(id)) {
                return Err(Error::Config(format!("variables.discover: {id} is not in the schema")));
            }
        }
        Ok(())
    }

    /// Schema with role overrides applied.
    pub fn schema(&self) -> Result<Vec<VariableMeta>> {
        let mut schema = self.variables.schema.clone().unwrap_or_else(furnace_schema);
        for (key, role) in &self.variables.roles {
            let id: usize = key
                .parse()
                .map_err(|_| Error::Config(format!("variables.roles: {key:?} is not a variable id")))?;
            let v = schema
                .iter_mut()
                .find(|v| v.index == id)
                .ok_or_else(|| Error::Config(format!("variables.roles: {id} is not in the schema")))?;
            v.role = *role;
        }
        Ok(schema)
    }

    pub fn stat_variables(&self) -> StatVariables {
        StatVariables {
            weight: self.variables.weight,
            energy: self.variables.energy,
        }
    }

    /// Validates, derives the stage seeds from the global seed and resolves
    /// paths against the config file's directory.
    pub fn resolve(mut self) -> Result<Resolved> {
        self.validate()?;
        self.sampler.seed = stable_mix(self.seed, 0x73616d70);
        self.discovery.seed = stable_mix(self.seed, 0x64697363);
        let base = self.base_dir.clone().unwrap_or_default();
        let join = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        Ok(Resolved {
            input: join(&self.paths.input),
            labels: self.paths.labels.as_deref().map(join),
            output: join(&self.paths.output),
            schema: self.schema()?,
            config: self,
        })
    }
}
