//! Versioned serialization of model and optimizer state.
//!
//! A checkpoint is one JSON document: magic string, format version, the
//! training configuration, a dataset fingerprint, and named parameter
//! blocks with explicit shapes for the model and both Adam moments.
//! Serialization is deterministic and f64-exact, so save -> load -> save
//! reproduces the original bytes.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::training::{AdamState, TrainConfig};

const CHECKPOINT_MAGIC: &str = "nextpoi-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    version: u32,
    pub config: TrainConfig,
    pub dataset_fingerprint: String,
    /// Epoch count completed when the snapshot was taken.
    pub epoch: usize,
    pub user_count: usize,
    pub location_count: usize,
    pub params: Vec<ParamBlock>,
    pub adam_step: u64,
    pub adam_first: Vec<ParamBlock>,
    pub adam_second: Vec<ParamBlock>,
}

fn to_blocks(params: &ModelParams) -> Vec<ParamBlock> {
    params
        .blocks()
        .into_iter()
        .zip(params.block_shapes())
        .map(|((name, data), (_, shape))| ParamBlock {
            name: name.to_string(),
            shape,
            data: data.to_vec(),
        })
        .collect()
}

fn from_blocks(template: &mut ModelParams, blocks: &[ParamBlock]) -> Result<()> {
    let shapes = template.block_shapes();
    let mut views = template.blocks_mut();
    if blocks.len() != views.len() {
        return Err(Error::Format(format!(
            "expected {} parameter blocks, found {}",
            views.len(),
            blocks.len()
        )));
    }
    for (block, ((name, view), (_, shape))) in blocks.iter().zip(views.iter_mut().zip(shapes)) {
        if block.name != *name {
            return Err(Error::Format(format!(
                "unexpected block '{}' where '{name}' belongs",
                block.name
            )));
        }
        if block.shape != shape || block.data.len() != view.len() {
            return Err(Error::Format(format!(
                "block '{name}' has shape {:?}, expected {:?}",
                block.shape, shape
            )));
        }
        view.copy_from_slice(&block.data);
    }
    Ok(())
}

impl Checkpoint {
    pub fn capture(
        params: &ModelParams,
        adam: &AdamState,
        config: &TrainConfig,
        dataset_fingerprint: &str,
        epoch: usize,
    ) -> Self {
        Self {
            format: CHECKPOINT_MAGIC.to_string(),
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            dataset_fingerprint: dataset_fingerprint.to_string(),
            epoch,
            user_count: params.tables.user.nrows(),
            location_count: params.tables.location.nrows(),
            params: to_blocks(params),
            adam_step: adam.step,
            adam_first: to_blocks(&adam.first),
            adam_second: to_blocks(&adam.second),
        }
    }

    /// Rebuilds the live model and optimizer state.
    pub fn restore(&self) -> Result<(ModelParams, AdamState)> {
        let mut params = ModelParams {
            tables: crate::embedding::EmbeddingTables::zeros(
                self.user_count,
                self.location_count,
                self.config.duration_buckets,
                self.config.dim,
            ),
            long_branch: crate::attention::AttentionWeights::zeros(self.config.dim),
            short_branch: crate::attention::AttentionWeights::zeros(self.config.dim),
            gate: crate::attention::FusionGate::zeros(self.config.dim),
        };
        from_blocks(&mut params, &self.params)?;
        let mut adam = AdamState::new(&params);
        adam.step = self.adam_step;
        from_blocks(&mut adam.first, &self.adam_first)?;
        from_blocks(&mut adam.second, &self.adam_second)?;
        Ok((params, adam))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let ck: Checkpoint = serde_json::from_slice(&bytes)?;
        if ck.format != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!(
                "expected {CHECKPOINT_MAGIC}, found {}",
                ck.format
            )));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", ck.version)));
        }
        Ok(ck)
    }
}
