//! Checkpoint files.
//!
//! ```text
//! "MSCK"            4 bytes
//! version           u32 (= 1)
//! header_len        u32
//! header            header_len bytes of UTF-8 JSON (see CheckpointHeader)
//! params            param_count f64, little-endian
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::aga::AgaState;
use crate::diff::GradVector;
use crate::error::{Error, Result};
use crate::net::{NetConfig, VelocityModel};
use crate::tasks::Reader;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: NetConfig,
    pub config: TrainConfig,
    pub config_digest: String,
    /// Completed epochs.
    pub epoch: usize,
    pub aga: AgaState,
    pub param_count: usize,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: VelocityModel,
}

impl Checkpoint {
    pub fn new(config: &TrainConfig, model: VelocityModel, epoch: usize, aga: AgaState) -> Self {
        Self {
            header: CheckpointHeader {
                architecture: model.config().clone(),
                config: config.clone(),
                config_digest: config.digest(),
                epoch,
                aga,
                param_count: model.param_count(),
            },
            model,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let header_len = u32::try_from(header.len())
            .map_err(|_| Error::InvalidArgument("checkpoint header too large".into()))?;
        let params = self.model.params().as_slice();
        let mut out = Vec::with_capacity(12 + header.len() + 8 * params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        for v in params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(buf, path);
        r.magic(CHECKPOINT_MAGIC, "MSCK")?;
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                path: path.to_path_buf(),
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let len = r.u32("header length")? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(len, "header")?)?;
        let params = r.f64s(header.param_count, "parameters")?;
        r.finish()?;
        if header.config.digest() != header.config_digest {
            return Err(Error::InvalidArgument(format!(
                "{}: config digest does not match embedded config",
                path.display()
            )));
        }
        let model =
            VelocityModel::from_params(header.architecture.clone(), GradVector::from_vec(params))?;
        Ok(Self { header, model })
    }

    /// Writes to a sibling temporary file first, so an interrupted save
    /// never replaces a good checkpoint with a partial one.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.encode()?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&buf, path)
    }
}
