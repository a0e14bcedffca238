//! Persistence: binary corpus and checkpoint files, CSV tables, and run
//! directories with atomic writes.

pub mod bytes;
pub mod checkpoint;
pub mod corpus;
pub mod output;
pub mod tables;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// Version stamped into every artifact this crate writes.
pub const FORMAT_VERSION: u16 = 1;

/// Identifies the configuration and seed an artifact came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub format_version: u16,
    /// Hex form of [`ExperimentConfig::hash`].
    #[serde(with = "hex_u64")]
    pub config_hash: u64,
    pub root_seed: u64,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config_hash: cfg.hash(),
            root_seed: cfg.root_seed,
        }
    }

    /// Comment lines that open every CSV artifact.
    pub fn csv_header(&self, kind: &str) -> String {
        format!(
            "# adaptive-reach {kind}\n# format_version={} config_hash={:016x} root_seed={}\n",
            self.format_version, self.config_hash, self.root_seed
        )
    }
}

mod hex_u64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}
