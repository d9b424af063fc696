//! Generative color-style models over page trees.
//!
//! Three cores map content and hierarchy to per-element discrete styles:
//!
//! - [`Nar`] predicts every element at once from encoded content.
//! - [`Ar`] decodes styles one element at a time in pre-order, attending to
//!   the encoded content.
//! - [`Cvae`] decodes all elements at once from per-element Gaussian latents,
//!   so that different latent draws give different stylings.
//!
//! All of them share the content encoder of [`crate::hier`], the style
//! encoder and the four-way estimation head of [`style`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::QuantizedStyle;
use crate::hier::HierOptions;
use crate::page::PageTree;
use crate::transformer::TransformerConfig;
use crate::{Error, Result};

mod ar;
pub mod bundle;
mod cvae;
pub mod diverse;
pub mod loss;
mod nar;
pub mod sampling;
pub mod style;
pub mod train;

pub use ar::Ar;
pub use bundle::{Model, ModelBundle};
pub use cvae::{Cvae, CvaeOutput, Noise};
pub use nar::Nar;
pub use train::{train, PageLoss, StepStats, TrainConfig, Trainable};

/// Default weight of the KL term of the CVAE objective.
pub const DEFAULT_KL_WEIGHT: f64 = 0.1;

/// Architecture shared by every model kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ffn: usize,
    #[serde(default)]
    pub hier: HierOptions,
    /// KL weight λ (CVAE only).
    pub kl_weight: f64,
}

impl Default for ModelConfig {
    /// Full-size defaults: d 256, 8 heads, 4 layers, FFN 512.
    fn default() -> Self {
        ModelConfig {
            d_model: 256,
            n_heads: 8,
            n_layers: 4,
            d_ffn: 512,
            hier: HierOptions::default(),
            kl_weight: DEFAULT_KL_WEIGHT,
        }
    }
}

impl ModelConfig {
    /// Desk-scale preset: d 32, 2 heads, 2 layers, FFN 64.
    pub fn toy() -> Self {
        ModelConfig {
            d_model: 32,
            n_heads: 2,
            n_layers: 2,
            d_ffn: 64,
            ..Default::default()
        }
    }

    /// Gradient-check scale: d 8, 2 heads, 1 layer, FFN 16.
    pub fn tiny() -> Self {
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ffn: 16,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model < 2 {
            return Err(Error::Contract(format!("d_model {} is too small", self.d_model)));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return Err(Error::Contract(format!("kl_weight {} must be finite and ≥ 0", self.kl_weight)));
        }
        self.encoder().validate()
    }

    pub(crate) fn encoder(&self) -> TransformerConfig {
        TransformerConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            d_ffn: self.d_ffn,
            dropout: 0.0,
            causal: false,
            cross_attention: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ar,
    Nar,
    Cvae,
    Upsampler,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ar => "ar",
            ModelKind::Nar => "nar",
            ModelKind::Cvae => "cvae",
            ModelKind::Upsampler => "upsampler",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ar" => Ok(ModelKind::Ar),
            "nar" => Ok(ModelKind::Nar),
            "cvae" => Ok(ModelKind::Cvae),
            "upsampler" => Ok(ModelKind::Upsampler),
            _ => Err(Error::Contract(format!(
                "unknown model kind `{s}` (expected ar, nar, cvae or upsampler)"
            ))),
        }
    }
}

/// How discrete styles are chosen from predicted distributions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Strategy {
    /// Arg-max of every categorical.
    Greedy,
    /// Nucleus sampling with the given mass.
    TopP(f64),
    /// Latents drawn from the standard-normal prior, then arg-max (CVAE).
    Prior,
}

/// Anything that turns a page into one discrete style per element.
pub trait Colorizer {
    fn colorize(&self, page: &PageTree, strategy: Strategy, seed: u64) -> Result<Vec<QuantizedStyle>>;
}

/// Quantized ground-truth styles of every element.
pub fn quantized_styles(page: &PageTree) -> Result<Vec<QuantizedStyle>> {
    Ok(page.styles()?.iter().map(crate::codec::quantize_style).collect())
}

pub(crate) fn check_strategy(strategy: Strategy) -> Result<()> {
    if let Strategy::TopP(p) = strategy {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Contract(format!("top-p mass {p} not in (0, 1]")));
        }
    }
    Ok(())
}
