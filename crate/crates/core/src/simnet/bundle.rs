//! Weight persistence: a JSON manifest (names, shapes, config, seed, format
//! version, normalization stats) next to a little-endian IEEE-754 binary
//! blob holding every parameter in manifest order. The split keeps the
//! metadata inspectable while the round trip stays bit-exact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::network::{NetworkConfig, Params};
use super::{SimnetError, TargetChannel};
use crate::postprocess::NormStats;

/// A trained network plus everything needed to reproduce its inputs:
/// standardization stats and window geometry.
#[derive(Debug, Clone)]
pub struct WeightBundle {
    pub version: u32,
    pub channel: TargetChannel,
    pub config: NetworkConfig,
    /// RNG seed used at initialization.
    pub seed: u64,
    pub stats: NormStats,
    pub window_s: f64,
    pub overlap: f64,
    pub sample_rate: f64,
    pub params: Params,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    channel: TargetChannel,
    config: NetworkConfig,
    seed: u64,
    stats: NormStats,
    window_s: f64,
    overlap: f64,
    sample_rate: f64,
    params: Vec<ManifestParam>,
}

#[derive(Serialize, Deserialize)]
struct ManifestParam {
    name: String,
    shape: Vec<usize>,
}

fn blob_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

impl WeightBundle {
    /// Writes `<path>` (JSON manifest) and the sibling `.bin` blob.
    pub fn save(&self, manifest_path: impl AsRef<Path>) -> Result<(), SimnetError> {
        let manifest_path = manifest_path.as_ref();
        let manifest = Manifest {
            version: self.version,
            channel: self.channel,
            config: self.config.clone(),
            seed: self.seed,
            stats: self.stats.clone(),
            window_s: self.window_s,
            overlap: self.overlap,
            sample_rate: self.sample_rate,
            params: self
                .config
                .param_entries()
                .into_iter()
                .map(|(name, shape)| ManifestParam { name, shape })
                .collect(),
        };
        std::fs::write(
            manifest_path,
            serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail"),
        )?;
        let flat = self.params.flatten();
        let mut bytes = Vec::with_capacity(flat.len() * 8);
        for v in flat {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(blob_path(manifest_path), bytes)?;
        Ok(())
    }

    pub fn load(manifest_path: impl AsRef<Path>) -> Result<WeightBundle, SimnetError> {
        let manifest_path = manifest_path.as_ref();
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)
            .map_err(|e| SimnetError::BadBundle(e.to_string()))?;
        if manifest.version != 1 {
            return Err(SimnetError::BadBundle(format!(
                "unsupported weights version {}, expected 1",
                manifest.version
            )));
        }
        manifest.config.validate()?;
        let expected = manifest.config.param_entries();
        if manifest.params.len() != expected.len()
            || manifest
                .params
                .iter()
                .zip(&expected)
                .any(|(m, (name, shape))| &m.name != name || &m.shape != shape)
        {
            return Err(SimnetError::BadBundle(
                "parameter table does not match the declared config".into(),
            ));
        }

        let bytes = std::fs::read(blob_path(manifest_path))?;
        if bytes.len() % 8 != 0 {
            return Err(SimnetError::BadBundle(format!(
                "blob length {} is not a multiple of 8",
                bytes.len()
            )));
        }
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        if let Some(bad) = flat.iter().find(|v| !v.is_finite()) {
            return Err(SimnetError::BadBundle(format!("non-finite parameter value {bad}")));
        }
        let params = Params::from_flat(&manifest.config, &flat)?;
        Ok(WeightBundle {
            version: manifest.version,
            channel: manifest.channel,
            config: manifest.config,
            seed: manifest.seed,
            stats: manifest.stats,
            window_s: manifest.window_s,
            overlap: manifest.overlap,
            sample_rate: manifest.sample_rate,
            params,
        })
    }
}
