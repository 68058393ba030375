//! Experiment configuration (`swlp-config-v1`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use swlp_core::schrodinger::ControlSide;
use swlp_core::TimeGrid;

use crate::error::HarnessError;

pub const CONFIG_SCHEMA: &str = "swlp-config-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Instance {
    Scalar,
    Heat,
    Schrodinger,
    CustomJson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

/// Which verification suites `verify` runs. Suites that do not apply to the instance are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Suites {
    pub oracles: bool,
    pub identities: bool,
    pub weak: bool,
    pub picard: bool,
    pub energy: bool,
    pub multiplier: bool,
    pub duality: bool,
    pub transform: bool,
}

impl Default for Suites {
    fn default() -> Self {
        Self {
            oracles: true,
            identities: true,
            weak: true,
            picard: true,
            energy: true,
            multiplier: true,
            duality: true,
            transform: true,
        }
    }
}

impl Suites {
    pub fn none() -> Self {
        Self {
            oracles: false,
            identities: false,
            weak: false,
            picard: false,
            energy: false,
            multiplier: false,
            duality: false,
            transform: false,
        }
    }
}

/// Instance parameters; unset fields take the preset defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Scalar generator value (scalar instance).
    pub generator: Option<f64>,
    /// Drift coefficient `a` (heat: constant value; Schrödinger: amplitude of `a sin² x`).
    pub a: Option<f64>,
    /// Noise coefficient `b` (scalar: σ).
    pub b: Option<f64>,
    pub cells: Option<usize>,
    pub length: Option<f64>,
    pub modes: Option<usize>,
    pub control_side: Option<ControlSide>,
    /// `swlp-sys-v1` document for the custom-json instance. Relative paths (here and in
    /// `output_dir`) are resolved against the config file's directory.
    pub system: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub instance: Instance,
    pub grid: GridConfig,
    pub paths: usize,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_levels")]
    pub refinement_levels: usize,
    pub output_dir: PathBuf,
    /// Paths written to `trajectory.csv`.
    #[serde(default = "default_export_paths")]
    pub export_paths: usize,
    #[serde(default)]
    pub suites: Suites,
    #[serde(default)]
    pub model: ModelParams,
}

fn default_trials() -> usize {
    20
}

fn default_levels() -> usize {
    1
}

fn default_export_paths() -> usize {
    16
}

impl ExperimentConfig {
    /// Preset configuration for an instance.
    pub fn preset(instance: Instance, output_dir: impl Into<PathBuf>) -> Self {
        let steps = match instance {
            Instance::Heat => 256,
            _ => 64,
        };
        Self {
            schema: CONFIG_SCHEMA.to_string(),
            instance,
            grid: GridConfig { horizon: 1.0, steps },
            paths: 1000,
            seed: 20240917,
            trials: default_trials(),
            refinement_levels: default_levels(),
            output_dir: output_dir.into(),
            export_paths: default_export_paths(),
            suites: Suites::default(),
            model: ModelParams::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        if cfg.output_dir.is_relative() {
            cfg.output_dir = dir.join(&cfg.output_dir);
        }
        if let Some(sys) = cfg.model.system.as_mut().filter(|s| s.is_relative()) {
            *sys = dir.join(&*sys);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.schema != CONFIG_SCHEMA {
            return bad(&format!("expected schema {CONFIG_SCHEMA}, found {}", self.schema));
        }
        if self.paths == 0 || self.trials == 0 || self.refinement_levels == 0 || self.grid.steps == 0 {
            return bad("paths, trials, refinement_levels and grid.steps must be positive");
        }
        if !(self.grid.horizon > 0.0 && self.grid.horizon.is_finite()) {
            return bad("grid.horizon must be positive");
        }
        if self.instance == Instance::CustomJson && self.model.system.is_none() {
            return bad("custom-json instance needs model.system");
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid, HarnessError> {
        Ok(TimeGrid::new(self.grid.horizon, self.grid.steps)?)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Creates the output directory and checks that it accepts files.
    pub fn prepare_output(&self) -> Result<(), HarnessError> {
        let dir = &self.output_dir;
        fs::create_dir_all(dir).map_err(|e| HarnessError::Config(format!("output_dir {}: {e}", dir.display())))?;
        let probe = dir.join(".swlp-write-probe");
        fs::write(&probe, b"").map_err(|e| HarnessError::Config(format!("output_dir {} is not writable: {e}", dir.display())))?;
        let _ = fs::remove_file(probe);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for inst in [Instance::Scalar, Instance::Heat, Instance::Schrodinger] {
            let cfg = ExperimentConfig::preset(inst, "out");
            cfg.validate().unwrap();
            assert_eq!(cfg.time_grid().unwrap().steps(), cfg.grid.steps);
        }
    }

    #[test]
    fn counts_must_be_positive() {
        let mut cfg = ExperimentConfig::preset(Instance::Scalar, "out");
        cfg.paths = 0;
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
        let mut cfg = ExperimentConfig::preset(Instance::Scalar, "out");
        cfg.refinement_levels = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::preset(Instance::Scalar, "out");
        cfg.grid.horizon = f64::NAN;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn schema_and_custom_system_checked() {
        let mut cfg = ExperimentConfig::preset(Instance::Heat, "out");
        cfg.schema = "swlp-config-v0".into();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::preset(Instance::CustomJson, "out");
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"schema":"swlp-config-v1","instance":"scalar","grid":{"horizon":1,"steps":4},
            "paths":2,"seed":1,"output_dir":"o","colour":"red"}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
        let text = r#"{"schema":"swlp-config-v1","instance":"scalar","grid":{"horizon":1,"steps":4},
            "paths":2,"seed":1,"output_dir":"o","suites":{"weak":false}}"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert!(!cfg.suites.weak && cfg.suites.picard);
        assert_eq!((cfg.trials, cfg.refinement_levels, cfg.export_paths), (20, 1, 16));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::preset(Instance::CustomJson, "results");
        cfg.model.system = Some("sys.json".into());
        let path = dir.path().join("c.json");
        fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
        let loaded = ExperimentConfig::load(&path).unwrap();
        assert_eq!(loaded.output_dir, dir.path().join("results"));
        assert_eq!(loaded.model.system, Some(dir.path().join("sys.json")));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::preset(Instance::Scalar, "out");
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn output_must_be_a_directory() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("taken");
        fs::write(&file, b"x").unwrap();
        let cfg = ExperimentConfig::preset(Instance::Scalar, file.join("sub"));
        assert!(matches!(cfg.prepare_output(), Err(HarnessError::Config(_))));
        let ok = ExperimentConfig::preset(Instance::Scalar, dir.path().join("new/deep"));
        ok.prepare_output().unwrap();
        assert!(fs::read_dir(dir.path().join("new/deep")).unwrap().next().is_none());
    }
}
