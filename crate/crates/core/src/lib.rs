//! Generative colorization of tree-structured mobile web pages.
//!
//! A page is an ordered tree of elements, each carrying content features and
//! (for training data) a text/background color style. The pipeline has two
//! stages: a core model predicts *quantized* styles (8 bins per RGBA channel,
//! RGB bins jointly indexed 1..=512), and an upsampler regresses the position
//! inside each bin to recover full-resolution colors.
//!
//! Modules:
//!
//! - [`page`]: the page tree, validation, traversal and the canonical JSON file format.
//! - [`codec`]: RGBA quantization and in-bin reconstruction.
//! - [`tensor`]: dense f64 tensors, a reverse-mode tape, AdamW and checkpoints.
//! - [`transformer`]: pre-LN Transformer encoder/decoder stacks.
//! - [`hier`]: content embedding with bottom-up/top-down tree message passing.
//! - [`models`]: style encoder, estimation head and the AR / NAR / CVAE cores.
//! - [`upsampler`]: quantized style to full-resolution RGBA.
//! - [`baselines`]: frequency-table colorizers (mode and sampling).
//! - [`metrics`]: accuracy, macro F, Fréchet color distance and contrast audits.
//! - [`pipeline`]: colorize, upsample and pick diverse variations.
//! - [`render`]: a deterministic box rasterizer and PNG previews.
//! - [`corpus`]: synthetic corpus generation and dataset splitting.
//! - [`cli`]: the `webcolor` command line.

pub mod baselines;
pub mod cli;
pub mod codec;
pub mod corpus;
mod error;
pub mod hier;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod page;
pub mod pipeline;
pub mod render;
pub mod tensor;
pub mod transformer;
pub mod upsampler;

pub use error::{Error, Result};
