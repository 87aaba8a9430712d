use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::addressing::MemoryMap;
use crate::dram::DramConfig;
use crate::mars::MarsConfig;
use crate::traffic::{workload_preset, MergeTreeSpec, StreamSpec, Workload};

pub const DEFAULT_WINDOWS: [usize; 5] = [128, 512, 2048, 8192, 16384];

/// Where in the pipeline locality is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tap {
    /// Each source's own output, pooled over sources.
    Source,
    /// The merged stream leaving the arbitration tree.
    Merge,
    /// The stream leaving the MARS stage.
    Mars,
}

impl Tap {
    pub fn as_str(self) -> &'static str {
        match self {
            Tap::Source => "source",
            Tap::Merge => "merge",
            Tap::Mars => "mars",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    /// One of WL1..WL5. Optional when `streams` is given.
    #[serde(default)]
    pub preset: Option<String>,
    /// Pages per source.
    #[serde(default = "default_scale")]
    pub scale: u64,
    /// Replaces the preset's streams.
    #[serde(default)]
    pub streams: Option<Vec<StreamSpec>>,
}

fn default_scale() -> u64 {
    crate::traffic::DEFAULT_SCALE
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MemoryMapConfig {
    Preset { preset: String },
    Explicit(MemoryMap),
}

impl Default for MemoryMapConfig {
    fn default() -> Self {
        MemoryMapConfig::Preset { preset: "page-per-channel".into() }
    }
}

impl MemoryMapConfig {
    pub fn resolve(&self) -> Result<MemoryMap, HarnessError> {
        match self {
            MemoryMapConfig::Preset { preset } => MemoryMap::preset(preset)
                .ok_or_else(|| HarnessError::invalid("memory_map.preset", format!("unknown preset {preset:?}"))),
            MemoryMapConfig::Explicit(m) => Ok(m.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub workload: WorkloadConfig,
    /// Replaces the preset's arbitration tree.
    #[serde(default)]
    pub merge_tree: Option<MergeTreeSpec>,
    #[serde(default)]
    pub mars: MarsConfig,
    #[serde(default)]
    pub dram: DramConfig,
    #[serde(default)]
    pub memory_map: MemoryMapConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_taps")]
    pub taps: Vec<Tap>,
    #[serde(default = "default_windows")]
    pub windows: Vec<usize>,
    /// Relative paths resolve against `MARSIM_OUTPUT_ROOT` when it is set.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub write_traces: bool,
    #[serde(default = "yes")]
    pub simulate_dram: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}
fn default_taps() -> Vec<Tap> {
    vec![Tap::Source, Tap::Merge, Tap::Mars]
}
fn default_windows() -> Vec<usize> {
    DEFAULT_WINDOWS.to_vec()
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn yes() -> bool {
    true
}

pub const OUTPUT_ROOT_ENV: &str = "MARSIM_OUTPUT_ROOT";

impl ExperimentConfig {
    /// Preset config with every other field at its default.
    pub fn preset(name: &str) -> Self {
        ExperimentConfig {
            name: name.to_lowercase(),
            workload: WorkloadConfig { preset: Some(name.to_string()), scale: default_scale(), streams: None },
            merge_tree: None,
            mars: MarsConfig::default(),
            dram: DramConfig::default(),
            memory_map: MemoryMapConfig::default(),
            seeds: default_seeds(),
            taps: default_taps(),
            windows: default_windows(),
            output_dir: default_output_dir(),
            write_traces: false,
            simulate_dram: true,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Parse(msg) => HarnessError::Parse(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn workload(&self) -> Result<Workload, HarnessError> {
        let w = &self.workload;
        let mut workload = match &w.preset {
            Some(p) => workload_preset(p, w.scale).map_err(|e| HarnessError::invalid("workload.preset", e))?,
            None => Workload { name: self.name.clone(), streams: Vec::new(), tree: MergeTreeSpec::new(vec![8, 8]) },
        };
        if let Some(streams) = &w.streams {
            workload.streams = streams.clone();
        }
        if let Some(tree) = &self.merge_tree {
            workload.tree = tree.clone();
        }
        Ok(workload)
    }

    /// Check every sub-config; errors name the offending field.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(HarnessError::invalid("name", "must be non-empty with no path separators"));
        }
        let workload = self.workload()?;
        if workload.streams.is_empty() {
            return Err(HarnessError::invalid("workload", "needs a preset or at least one stream"));
        }
        for (i, s) in workload.streams.iter().enumerate() {
            s.validate().map_err(|e| HarnessError::invalid(&format!("workload.streams[{i}]"), e))?;
        }
        workload.tree.validate().map_err(|e| HarnessError::invalid("merge_tree", e))?;
        self.mars.validate().map_err(|e| HarnessError::invalid("mars", e))?;
        self.dram.validate().map_err(|e| HarnessError::invalid("dram", e))?;
        let map = self.memory_map.resolve()?;
        map.validate_against(&self.dram.geometry()).map_err(|e| HarnessError::invalid("memory_map", e))?;
        // Source ids are global leaf indices, so every stream is sized for the whole tree.
        let limit_pages = workload.streams.iter().map(|s| s.page_limit(workload.tree.leaves)).max().unwrap_or(0);
        let page_bits = map.addr_bits.saturating_sub(self.mars.page_offset_bits);
        if page_bits < 64 && limit_pages > 1u64 << page_bits {
            return Err(HarnessError::invalid(
                "workload",
                format!("touches pages up to {limit_pages}, beyond the {}-bit address space", map.addr_bits),
            ));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::invalid("seeds", "at least one seed is required"));
        }
        if self.windows.contains(&0) {
            return Err(HarnessError::invalid("windows", "window sizes must be >= 1"));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form. `output_dir` is excluded so a
    /// relocated run keeps its key.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}
