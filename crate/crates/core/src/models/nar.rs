//! Non-autoregressive core: every element's style is estimated in one pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::mle_loss;
use super::style::{choose_styles, StyleHead, StyleLogits, StyleTargets};
use super::train::{PageLoss, Trainable};
use super::{check_strategy, quantized_styles, Colorizer, ModelConfig, Strategy};
use crate::codec::QuantizedStyle;
use crate::hier::HierEncoder;
use crate::nn::Ctx;
use crate::page::PageTree;
use crate::tensor::{Init, ParamStore, Tape};
use crate::transformer::Transformer;
use crate::Result;

/// `h_C → encoder → head`.
#[derive(Clone, Debug)]
pub struct Nar {
    store: ParamStore,
    config: ModelConfig,
    hier: HierEncoder,
    encoder: Transformer,
    head: StyleHead,
}

impl Nar {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init::new(seed);
        let d = config.d_model;
        let hier = HierEncoder::new(&mut store, &mut init, "content", d, config.hier);
        let encoder = Transformer::new(&mut store, &mut init, "encoder", &config.encoder())?;
        let head = StyleHead::new(&mut store, &mut init, "head", d);
        Ok(Nar {
            store,
            config: config.clone(),
            hier,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn logits(&self, ctx: Ctx, page: &PageTree) -> Result<StyleLogits> {
        let content = self.hier.forward(ctx, page)?;
        let h = self.encoder.encode(ctx, content.h_c)?;
        self.head.forward(ctx, h)
    }
}

impl Trainable for Nar {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn page_loss(&self, tape: &Tape, page: &PageTree, _seed: u64) -> Result<PageLoss> {
        let targets = StyleTargets::new(&quantized_styles(page)?, &page.text_mask())?;
        let logits = self.logits(Ctx::new(tape, &self.store), page)?;
        let loss = mle_loss(tape, &logits, &targets)?;
        let recon = tape.value(loss).item();
        Ok(PageLoss { loss, recon, kl: 0.0 })
    }
}

impl Colorizer for Nar {
    /// Greedy (and `Prior`, which has no latents here) takes the arg-max;
    /// top-p samples every element independently.
    fn colorize(&self, page: &PageTree, strategy: Strategy, seed: u64) -> Result<Vec<QuantizedStyle>> {
        check_strategy(strategy)?;
        let tape = Tape::inference();
        let logits = self.logits(Ctx::new(&tape, &self.store), page)?;
        let top_p = match strategy {
            Strategy::TopP(p) => Some(p),
            _ => None,
        };
        choose_styles(&tape, &logits, &page.text_mask(), top_p, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}
