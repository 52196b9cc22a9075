//! The patch-quality model and its Siamese ranking trainer.
//!
//! `Q` is a degradation index: larger means the transcoded patch lost more
//! quality relative to its reference.

mod backbone;
mod loss;
mod train;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::video_io::{Patch, PatchGeometry};

pub use backbone::{Backbone, BackboneConfig, BackbonePreset, Tape, ToyConv};
pub use loss::{bce_logit_grad, bce_loss, bce_with_logits, rank_probability, sigmoid, softplus};
pub use train::{instance_loss, is_heldout, pairwise_accuracy, train, EpochRecord, TrainingConfig, TrainingOutcome};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Anything that maps a co-located (reference, transcoded) patch pair to a
/// quality index.
pub trait PatchQuality: Sync {
    fn geometry(&self) -> PatchGeometry;
    fn quality(&self, reference: &Patch, dist: &Patch) -> Result<f64>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    kind: String,
    version: u32,
    backbone: BackboneConfig,
}

pub struct PatchQualityModel {
    backbone: Box<dyn Backbone>,
    params: Vec<f64>,
    pub version: u32,
}

impl Clone for PatchQualityModel {
    fn clone(&self) -> Self {
        PatchQualityModel {
            backbone: self.backbone.config().build(),
            params: self.params.clone(),
            version: self.version,
        }
    }
}

impl std::fmt::Debug for PatchQualityModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PatchQualityModel")
            .field("config", self.backbone.config())
            .field("params", &self.params.len())
            .finish()
    }
}

impl PatchQualityModel {
    /// Freshly initialized model. The output bias starts at zero, so
    /// identical reference and transcoded patches score exactly 0.
    pub fn new(config: BackboneConfig, seed: u64) -> Self {
        let backbone = config.build();
        let params = backbone.init_params(&mut ChaCha8Rng::seed_from_u64(seed));
        PatchQualityModel {
            backbone,
            params,
            version: CHECKPOINT_VERSION,
        }
    }

    pub fn from_params(config: BackboneConfig, params: Vec<f64>) -> Result<Self> {
        let backbone = config.build();
        if params.len() != backbone.param_count() {
            return Err(Error::InvalidInput(format!(
                "{:?} needs {} parameters, got {}",
                config.preset,
                backbone.param_count(),
                params.len()
            )));
        }
        Ok(PatchQualityModel {
            backbone,
            params,
            version: CHECKPOINT_VERSION,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        self.backbone.config()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn backbone(&self) -> &dyn Backbone {
        self.backbone.as_ref()
    }

    pub(crate) fn params_mut(&mut self) -> &mut Vec<f64> {
        &mut self.params
    }

    pub fn forward(&self, reference: &Patch, dist: &Patch) -> Result<f64> {
        let (q, _) = self.backbone.forward(&self.params, reference, dist)?;
        if !q.is_finite() {
            return Err(Error::Degenerate("model produced a non-finite score".into()));
        }
        Ok(q)
    }

    /// Hex SHA-256 of the parameter bytes.
    pub fn params_digest(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, dir: &Path, log: &[EpochRecord]) -> Result<()> {
        let file = ModelFile {
            kind: "patch-quality".into(),
            version: self.version,
            backbone: self.config().clone(),
        };
        checkpoint::write_checkpoint(dir, &file, &self.params, log)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (file, params): (ModelFile, _) = checkpoint::read_checkpoint(dir)?;
        if file.kind != "patch-quality" {
            return Err(Error::InvalidInput(format!(
                "{} holds a `{}` checkpoint, not a patch-quality model",
                dir.display(),
                file.kind
            )));
        }
        let mut model = PatchQualityModel::from_params(file.backbone, params)?;
        model.version = file.version;
        Ok(model)
    }

    pub fn load_log(dir: &Path) -> Result<Vec<EpochRecord>> {
        checkpoint::read_log(dir)
    }
}

impl PatchQuality for PatchQualityModel {
    fn geometry(&self) -> PatchGeometry {
        self.config().geometry
    }

    fn quality(&self, reference: &Patch, dist: &Patch) -> Result<f64> {
        self.forward(reference, dist)
    }
}
