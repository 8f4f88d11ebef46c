//! Run configuration: defaults, named presets, TOML files and overrides.
//!
//! Layers apply in order: built-in defaults, preset, file keys, then
//! explicit overrides (command-line flags or request fields).

use std::path::Path;

use anyhow::{bail, Context};
use mural_core::active::SessionConfig;
use mural_core::init::InitThreshold;
use mural_core::optimize::SearchSpace;
use mural_core::signal_io::standardize;
use mural_core::{DetectorConfig, Ridge, TimeSeries};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalize {
    None,
    /// Zero mean and unit variance per channel of each series.
    PerSequence,
    /// Statistics pooled over every series of a run. Commands take one
    /// series, so this coincides with `PerSequence`.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub weight_max: f64,
    pub grid_size: usize,
    pub evaluations: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let s = SearchSpace::default();
        Self {
            weight_max: s.weight_max,
            grid_size: s.grid_size,
            evaluations: s.evaluations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Decomposition depth K.
    pub levels: usize,
    /// Discrepancy window w.
    pub window: usize,
    /// Matching tolerance and query half-width.
    pub eta: usize,
    pub warmup: usize,
    pub cadence: usize,
    pub budget: usize,
    pub queries_per_round: usize,
    pub init: InitThreshold,
    pub normalize: Normalize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            levels: 4,
            window: 20,
            eta: 20,
            warmup: 10,
            cadence: 2,
            budget: 30,
            queries_per_round: 2,
            init: InitThreshold::Elbow,
            normalize: Normalize::PerSequence,
            seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Babyecg,
    Ucihar,
    Honeybee,
    Uschad,
}

impl Preset {
    /// (K, w, eta)
    pub fn values(self) -> (usize, usize, usize) {
        match self {
            Preset::Babyecg => (5, 15, 15),
            Preset::Ucihar => (2, 12, 8),
            Preset::Honeybee => (5, 30, 15),
            Preset::Uschad => (6, 100, 100),
        }
    }

    pub fn apply(self, config: &mut Config) {
        let (k, w, eta) = self.values();
        config.levels = k;
        config.window = w;
        config.eta = eta;
    }
}

impl Config {
    pub fn preset(preset: Preset) -> Self {
        let mut c = Self::default();
        preset.apply(&mut c);
        c
    }

    /// Overlays a key-value table onto this configuration. A `preset` key is
    /// applied first, the remaining keys after it.
    pub fn overlay(&self, table: &toml::Table) -> anyhow::Result<Self> {
        let mut base = self.clone();
        let mut table = table.clone();
        if let Some(p) = table.remove("preset") {
            let preset: Preset = p.try_into().context("unknown preset")?;
            preset.apply(&mut base);
        }
        let toml::Value::Table(mut merged) = toml::Value::try_from(&base)? else {
            unreachable!("a struct serializes to a table")
        };
        for (k, v) in table {
            match (merged.get_mut(&k), v) {
                (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => dst.extend(src),
                (_, v) => {
                    merged.insert(k, v);
                }
            }
        }
        let config: Self = toml::Value::Table(merged).try_into()?;
        config.validate()?;
        Ok(config)
    }

    pub fn overlay_json(&self, value: &serde_json::Value) -> anyhow::Result<Self> {
        let table: toml::Table = serde_json::from_value(value.clone()).context("config must be an object")?;
        self.overlay(&table)
    }

    pub fn load(&self, path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let table: toml::Table = toml::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))?;
        self.overlay(&table).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.levels == 0 {
            bail!("levels must be at least 1");
        }
        if self.window < 2 {
            bail!("window must be at least 2");
        }
        self.session_config().validate()?;
        Ok(())
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            levels: self.levels,
            window: self.window,
            ridge: Ridge::default(),
            init: self.init,
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            eta: self.eta,
            budget: self.budget,
            warmup: self.warmup,
            cadence: self.cadence,
            queries_per_round: self.queries_per_round,
            search: SearchSpace {
                weight_max: self.optimizer.weight_max,
                threshold_range: None,
                grid_size: self.optimizer.grid_size,
                evaluations: self.optimizer.evaluations,
            },
            seed: self.seed,
        }
    }

    pub fn prepare(&self, x: &TimeSeries) -> TimeSeries {
        match self.normalize {
            Normalize::None => x.clone(),
            Normalize::PerSequence | Normalize::Global => standardize(x),
        }
    }
}
