//! Experiment configuration: one JSON document with a section per
//! subsystem. Missing keys take their defaults, unknown keys are rejected,
//! and every validation error names the offending key.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arm::ArmGeometry;
use crate::error::{Error, Result};
use crate::model::Normalization;
use crate::neural::TrainConfig;
use crate::planner::CemConfig;
use crate::task::EpisodeConfig;
use crate::transforms::SamplerParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: usize,
    /// cm per input unit for cursor and goal
    pub pos_scale: f64,
    /// cm per output unit for the predicted displacement
    pub delta_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            pos_scale: 10.0,
            delta_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Random-walk trajectories per training corpus.
    pub corpus_size: usize,
    /// Multiplier on `corpus_size`.
    pub corpus_scale: usize,
    /// Test blocks per model; signs alternate +, -, +, ...
    pub blocks: usize,
    pub reaches: usize,
    /// Magnitude of the test rotation, degrees.
    pub test_rotation: f64,
    pub heldout_walks: usize,
    pub heldout_steps: usize,
    pub baseline_episodes: usize,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
    /// Time after movement onset at which the initial angular error is read.
    pub angle_time: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            corpus_size: 2000,
            corpus_scale: 1,
            blocks: 20,
            reaches: 5,
            test_rotation: 60.0,
            heldout_walks: 20,
            heldout_steps: 28,
            baseline_episodes: 200,
            bootstrap_resamples: 1000,
            ci_level: 0.95,
            angle_time: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub root_seed: u64,
    pub geometry: ArmGeometry,
    pub episode: EpisodeConfig,
    pub transforms: SamplerParams,
    pub network: NetworkConfig,
    pub training: TrainConfig,
    pub cem: CemConfig,
    pub experiment: ExperimentSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            root_seed: 0,
            geometry: ArmGeometry::default(),
            episode: EpisodeConfig::default(),
            transforms: SamplerParams::default(),
            network: NetworkConfig::default(),
            training: TrainConfig::default(),
            cem: CemConfig::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reduced scale for a single CPU: hidden 64, 500 trajectories,
    /// population 64.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.network.hidden = 64;
        c.experiment.corpus_size = 500;
        c.cem.population = 64;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.episode.validate()?;
        self.transforms.validate()?;
        self.training.validate()?;
        self.cem.validate()?;
        if self.network.hidden == 0 {
            return Err(Error::config("network.hidden", "must be positive"));
        }
        for (key, v) in [("network.pos_scale", self.network.pos_scale), ("network.delta_scale", self.network.delta_scale)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, "must be positive"));
            }
        }
        let x = &self.experiment;
        if x.corpus_size == 0 {
            return Err(Error::config("experiment.corpus_size", "must be positive"));
        }
        if x.corpus_scale == 0 {
            return Err(Error::config("experiment.corpus_scale", "must be positive"));
        }
        if x.reaches == 0 {
            return Err(Error::config("experiment.reaches", "must be positive"));
        }
        if !(x.test_rotation.is_finite()) {
            return Err(Error::config("experiment.test_rotation", "must be finite"));
        }
        if !(x.ci_level > 0.0 && x.ci_level < 1.0) {
            return Err(Error::config("experiment.ci_level", "must lie in (0, 1)"));
        }
        if !(x.angle_time.is_finite() && x.angle_time > 0.0) {
            return Err(Error::config("experiment.angle_time", "must be positive"));
        }
        Ok(())
    }

    pub fn effective_corpus_size(&self) -> usize {
        self.experiment.corpus_size * self.experiment.corpus_scale
    }

    pub fn normalization(&self) -> Normalization {
        Normalization {
            pos_scale: self.network.pos_scale,
            action_scale: self.geometry.acc_limit,
            delta_scale: self.network.delta_scale,
        }
    }

    /// Step at which the initial angular error is measured (rounded up).
    pub fn angle_step(&self) -> usize {
        (self.experiment.angle_time / self.geometry.dt - 1e-9).ceil() as usize
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash_bytes(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&bytes).into()
    }

    /// First eight bytes of [`hash_bytes`](Self::hash_bytes), little endian.
    pub fn hash(&self) -> u64 {
        let h = self.hash_bytes();
        u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }
}

/// Parse a configuration document; an empty document yields the defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    if text.trim().is_empty() {
        return Ok(ExperimentConfig::default());
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Error::config(if key == "." { "<root>".to_string() } else { key }, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    parse_config(&text)
}
