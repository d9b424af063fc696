//! A trained model of any kind together with its architecture, persisted in
//! the checkpoint container.

use std::path::Path;

use super::{Ar, Colorizer, Cvae, ModelConfig, ModelKind, Nar, Trainable};
use crate::tensor::{read_checkpoint, write_checkpoint, Checkpoint};
use crate::upsampler::Upsampler;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub enum Model {
    Ar(Ar),
    Nar(Nar),
    Cvae(Cvae),
    Upsampler(Upsampler),
}

impl Model {
    /// Freshly initialized parameters for `kind`.
    pub fn new(kind: ModelKind, config: &ModelConfig, seed: u64) -> Result<Self> {
        Ok(match kind {
            ModelKind::Ar => Model::Ar(Ar::new(config, seed)?),
            ModelKind::Nar => Model::Nar(Nar::new(config, seed)?),
            ModelKind::Cvae => Model::Cvae(Cvae::new(config, seed)?),
            ModelKind::Upsampler => Model::Upsampler(Upsampler::new(config, seed)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Ar(_) => ModelKind::Ar,
            Model::Nar(_) => ModelKind::Nar,
            Model::Cvae(_) => ModelKind::Cvae,
            Model::Upsampler(_) => ModelKind::Upsampler,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Model::Ar(m) => m.config(),
            Model::Nar(m) => m.config(),
            Model::Cvae(m) => m.config(),
            Model::Upsampler(m) => m.config(),
        }
    }

    pub fn trainable(&self) -> &dyn Trainable {
        match self {
            Model::Ar(m) => m,
            Model::Nar(m) => m,
            Model::Cvae(m) => m,
            Model::Upsampler(m) => m,
        }
    }

    pub fn trainable_mut(&mut self) -> &mut dyn Trainable {
        match self {
            Model::Ar(m) => m,
            Model::Nar(m) => m,
            Model::Cvae(m) => m,
            Model::Upsampler(m) => m,
        }
    }

    /// The style generator, or `None` for the upsampler.
    pub fn colorizer(&self) -> Option<&dyn Colorizer> {
        match self {
            Model::Ar(m) => Some(m),
            Model::Nar(m) => Some(m),
            Model::Cvae(m) => Some(m),
            Model::Upsampler(_) => None,
        }
    }

    pub fn upsampler(&self) -> Option<&Upsampler> {
        match self {
            Model::Upsampler(m) => Some(m),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub model: Model,
    /// Seed the parameters were initialized (and trained) with.
    pub seed: u64,
    /// Optimizer steps taken.
    pub step: u64,
}

impl ModelBundle {
    pub fn new(kind: ModelKind, config: &ModelConfig, seed: u64) -> Result<Self> {
        Ok(ModelBundle {
            model: Model::new(kind, config, seed)?,
            seed,
            step: 0,
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint::from_store(
            self.model.kind().as_str(),
            serde_json::to_value(self.model.config())?,
            self.model.trainable().params(),
            self.seed,
            self.step,
        ))
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let kind: ModelKind = ckpt
            .header
            .kind
            .parse()
            .map_err(|_| Error::Checkpoint(format!("unknown model kind `{}`", ckpt.header.kind)))?;
        let config: ModelConfig = serde_json::from_value(ckpt.header.config.clone())
            .map_err(|e| Error::Checkpoint(format!("bad architecture config: {e}")))?;
        let mut model = Model::new(kind, &config, ckpt.header.seed)?;
        model.trainable_mut().params_mut().load_named(ckpt.tensors)?;
        Ok(ModelBundle {
            model,
            seed: ckpt.header.seed,
            step: ckpt.header.step,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_checkpoint(path, &self.to_checkpoint()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(read_checkpoint(path)?)
    }
}
