//! Versioned run configuration shared by every subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{AggregationSpec, DynamicsParams};
use crate::dynamics::{DESK_MATRICES, DESK_NOISE, GRID_MATRICES, NOISE_LEVELS, FULL_LENGTH};
use crate::error::{Error, Result};
use crate::inference::{default_std_grid, desk_std_grid, FilterConfig, VarianceScope, DEFAULT_PARTICLES};
use crate::metrics::{CrqaConfig, GrangerConfig, MetricId};
use crate::selection::{DirectionTable, SelectionScheme};

pub const SCHEMA_VERSION: u32 = 1;

/// Particle count of the desk-scale preset.
pub const DESK_PARTICLES: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Full,
    Custom,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" | "paper" => Ok(Scale::Full),
            "custom" => Ok(Scale::Custom),
            _ => Err(Error::Config(format!("unknown scale {s:?} (desk, full, custom)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSettings {
    pub particles: usize,
    #[serde(default)]
    pub variance_scope: VarianceScope,
    #[serde(default)]
    pub reset_at_segments: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    /// Indices into the 81-matrix grid.
    pub matrices: Vec<usize>,
    /// Indices into the five noise amplitudes.
    pub noise_levels: Vec<usize>,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSettings {
    /// Direction per standalone metric. When absent the simulation study
    /// calibrates it from its own results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standalone_directions: Option<DirectionTable>,
    /// Schemes used by the human study.
    pub human_schemes: Vec<SelectionScheme>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanSettings {
    pub bin_ms: f64,
    pub grid_x: u32,
    pub grid_y: u32,
    pub screen_width: f64,
    pub screen_height: f64,
}

impl Default for HumanSettings {
    fn default() -> Self {
        Self {
            bin_ms: 272.0,
            grid_x: 10,
            grid_y: 5,
            screen_width: 1920.0,
            screen_height: 1080.0,
        }
    }
}

/// Everything that determines a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scale: Scale,
    pub seed: u64,
    pub dynamics: DynamicsParams,
    pub filter: FilterSettings,
    /// Jitter standard deviations searched per dataset.
    pub stds: Vec<f64>,
    pub simulation: SimulationSettings,
    pub selection: SelectionSettings,
    pub aggregations: Vec<AggregationSpec>,
    pub crqa: CrqaConfig,
    pub granger: GrangerConfig,
    pub human: HumanSettings,
}

impl RunConfig {
    pub fn preset(scale: Scale) -> Self {
        let (particles, stds, matrices, noise_levels) = match scale {
            Scale::Full => (
                DEFAULT_PARTICLES,
                default_std_grid(),
                (0..GRID_MATRICES).collect(),
                (0..NOISE_LEVELS.len()).collect(),
            ),
            Scale::Desk | Scale::Custom => (DESK_PARTICLES, desk_std_grid(), DESK_MATRICES.to_vec(), DESK_NOISE.to_vec()),
        };
        Self {
            schema_version: SCHEMA_VERSION,
            scale,
            seed: 0,
            dynamics: DynamicsParams::SIMULATION,
            filter: FilterSettings {
                particles,
                variance_scope: VarianceScope::WholeSeries,
                reset_at_segments: false,
            },
            stds,
            simulation: SimulationSettings {
                matrices,
                noise_levels,
                length: FULL_LENGTH,
            },
            selection: SelectionSettings {
                standalone_directions: None,
                human_schemes: MetricId::CRQA.iter().map(|&m| SelectionScheme::between(m)).collect(),
            },
            aggregations: AggregationSpec::ALL.to_vec(),
            crqa: CrqaConfig::default(),
            granger: GrangerConfig::default(),
            human: HumanSettings::default(),
        }
    }

    pub fn desk() -> Self {
        Self::preset(Scale::Desk)
    }

    pub fn full() -> Self {
        Self::preset(Scale::Full)
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.dynamics.validate()?;
        self.filter_template().validate()?;
        if self.stds.is_empty() {
            return Err(Error::Config("the std grid is empty".into()));
        }
        if let Some(s) = self.stds.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::Config(format!("grid std must be finite and > 0, got {s}")));
        }
        let sim = &self.simulation;
        if sim.matrices.is_empty() || sim.noise_levels.is_empty() {
            return Err(Error::Config("simulation grid is empty".into()));
        }
        if let Some(m) = sim.matrices.iter().find(|&&m| m >= GRID_MATRICES) {
            return Err(Error::Config(format!("matrix index {m} out of 0..{GRID_MATRICES}")));
        }
        if let Some(a) = sim.noise_levels.iter().find(|&&a| a >= NOISE_LEVELS.len()) {
            return Err(Error::Config(format!("noise index {a} out of 0..{}", NOISE_LEVELS.len())));
        }
        if sim.length < 8 {
            return Err(Error::Config(format!("simulated length must be >= 8, got {}", sim.length)));
        }
        if self.aggregations.is_empty() {
            return Err(Error::Config("no aggregations requested".into()));
        }
        for a in &self.aggregations {
            if let AggregationSpec::Quartile(q) = a {
                AggregationSpec::quartile(*q)?;
            }
        }
        self.crqa.validate()?;
        if self.granger.max_lag < 1 {
            return Err(Error::Config("Granger maximum lag must be >= 1".into()));
        }
        for s in &self.selection.human_schemes {
            s.validate()?;
            if s.style == crate::selection::SelectionStyle::IdealOracle {
                return Err(Error::Config("the human study has no ground truth for the oracle".into()));
            }
        }
        if let Some(t) = &self.selection.standalone_directions {
            if let Some(m) = t.keys().find(|m| m.kind() != crate::metrics::MetricKind::Standalone) {
                return Err(Error::Config(format!("{m} is not a standalone metric")));
            }
        }
        let h = &self.human;
        if !(h.bin_ms > 0.0 && h.screen_width > 0.0 && h.screen_height > 0.0) || h.grid_x == 0 || h.grid_y == 0 {
            return Err(Error::Config("human settings need positive bin width, screen size and grid".into()));
        }
        Ok(())
    }

    /// Filter settings with the std and seed left for the grid search to fill.
    pub fn filter_template(&self) -> FilterConfig {
        FilterConfig {
            particles: self.filter.particles,
            jitter_std: self.stds.first().copied().unwrap_or(0.001),
            params: self.dynamics,
            variances: None,
            variance_scope: self.filter.variance_scope,
            reset_at_segments: self.filter.reset_at_segments,
            seed: self.seed,
        }
    }

    /// Compact single-line JSON of the full resolved config.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Where outputs go and how many workers to use; never part of a report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuntimeOptions {
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for cfg in [RunConfig::desk(), RunConfig::full()] {
            cfg.validate().unwrap();
            let back = RunConfig::from_json(&cfg.echo(), "echo").unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.echo(), cfg.echo());
        }
        let desk = RunConfig::desk();
        assert_eq!(desk.stds.len(), 11);
        assert_eq!(desk.simulation.matrices.len() * desk.simulation.noise_levels.len(), 27);
        assert_eq!(RunConfig::full().stds.len(), 51);
        assert_eq!(RunConfig::full().simulation.matrices.len() * 5, 405);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = RunConfig::desk();
        c.schema_version = 7;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = RunConfig::desk();
        c.stds.push(-1.0);
        assert!(c.validate().is_err());
        let mut c = RunConfig::desk();
        c.simulation.matrices.push(81);
        assert!(c.validate().is_err());
        let mut c = RunConfig::desk();
        c.selection.human_schemes.push(SelectionScheme::ideal_oracle());
        assert!(c.validate().is_err());
        assert!(RunConfig::from_json("{\"schema_version\": 1}", "x").is_err());
        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::desk().echo()).unwrap();
        v["unexpected"] = serde_json::json!(1);
        assert!(RunConfig::from_json(&v.to_string(), "x").is_err());
    }
}
