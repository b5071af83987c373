//! The JSON study configuration.

use std::path::{Path, PathBuf};

use podgpr_core::bayes::McmcConfig;
use podgpr_core::fom::{beam_tip_probes, FomConfig, Mesh, Probe};
use podgpr_core::fom::material::DEFAULT_DENSITY;
use podgpr_core::pod::PodCriterion;
use podgpr_core::rom::{GlobalConfig, RomVariant, TdConfig};
use podgpr_core::sampling::ParameterSpace;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Structured beam mesh, or a JSON mesh file when `file` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSpec {
    pub elements: [usize; 3],
    /// Edge lengths (m).
    pub lengths: [f64; 3],
    pub file: Option<PathBuf>,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self { elements: [10, 2, 2], lengths: [1e-2, 1e-3, 1e-3], file: None }
    }
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh> {
        Ok(match &self.file {
            Some(path) => Mesh::from_json_file(path)?,
            None => {
                let [nx, ny, nz] = self.elements;
                let [lx, ly, lz] = self.lengths;
                Mesh::beam(nx, ny, nz, lx, ly, lz)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorrisSettings {
    pub trajectories: usize,
    pub levels: usize,
    /// Differences in physical units instead of unit-cube coordinates.
    pub physical: bool,
}

impl Default for MorrisSettings {
    fn default() -> Self {
        Self { trajectories: 20, levels: 6, physical: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SobolSettings {
    pub n_samples: usize,
    /// Also analyse the last probe's component at every time step and integrate in time.
    pub time_resolved: bool,
}

impl Default for SobolSettings {
    fn default() -> Self {
        Self { n_samples: 1024, time_resolved: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSettings {
    pub chain: McmcConfig,
    /// Observation noise variance σ_ε².
    pub noise_variance: f64,
    /// Parameters generating the synthetic observation.
    pub target: Vec<f64>,
    /// Prior box; the study parameter space when absent.
    pub prior: Option<ParameterSpace>,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            chain: McmcConfig { initial: Some(vec![8.0, 2.0, 2.0, 4.0, 4.0, 2.0, 50.0, 2.0, 0.004]), ..McmcConfig::default() },
            noise_variance: 1e-6,
            target: vec![6.2, 1.2, 2.8, 5.8, 5.8, 2.8, 27.0, 1.2, 0.0058],
            prior: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub space: ParameterSpace,
    pub mesh: MeshSpec,
    pub fom: FomConfig,
    /// Density (kg/m³).
    pub density: f64,
    pub n_samples: usize,
    /// Fraction of the successful samples used for training; the rest is the test set.
    pub train_ratio: f64,
    pub pod: PodCriterion,
    /// POD tolerances listed in the basis-size table.
    pub pod_table: Vec<f64>,
    pub variant: RomVariant,
    pub global: GlobalConfig,
    pub td: TdConfig,
    pub probes: Vec<Probe>,
    pub morris: MorrisSettings,
    pub sobol: SobolSettings,
    pub mcmc: McmcSettings,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("study"),
            seed: 2024,
            space: ParameterSpace::beam(),
            mesh: MeshSpec::default(),
            fom: FomConfig::default(),
            density: DEFAULT_DENSITY,
            n_samples: 50,
            train_ratio: 0.8,
            pod: PodCriterion::Energy(5e-4),
            pod_table: vec![1e-2, 5e-3, 1e-3, 5e-4, 1e-4, 5e-5, 1e-5],
            variant: RomVariant::Global,
            global: GlobalConfig::default(),
            td: TdConfig::default(),
            probes: beam_tip_probes(),
            morris: MorrisSettings::default(),
            sobol: SobolSettings::default(),
            mcmc: McmcSettings::default(),
        }
    }
}

impl StudyConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(CliError::Config(format!("train ratio {} must lie in (0, 1)", self.train_ratio)));
        }
        if self.n_samples < 2 {
            return Err(CliError::Config("at least two samples are needed for a train/test split".into()));
        }
        if self.probes.is_empty() {
            return Err(CliError::Config("no probes configured".into()));
        }
        if self.space.dim() != 9 {
            return Err(CliError::Config(format!("the beam model has 9 inputs, the space has {}", self.space.dim())));
        }
        if self.mcmc.target.len() != self.space.dim() {
            return Err(CliError::Config("MCMC target has the wrong length".into()));
        }
        self.fom.n_steps()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the whole configuration.
    pub fn hash(&self) -> String {
        podgpr_core::seeds::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
