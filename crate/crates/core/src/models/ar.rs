//! Autoregressive core: styles are decoded one element at a time in
//! pre-order.
//!
//! The content encoder output serves as cross-attention memory. The decoder
//! input at step `n` is the style embedding of element `n − 1` (a learnable
//! start vector at step 0) plus the positional encoding of `n` plus the
//! encoded content of element `n`, so each step knows which element it is
//! styling. Self-attention is causal, so step `n` only sees earlier styles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::mle_loss;
use super::style::{choose_styles, StyleEncoder, StyleHead, StyleLogits, StyleTargets};
use super::train::{PageLoss, Trainable};
use super::{check_strategy, quantized_styles, Colorizer, ModelConfig, Strategy};
use crate::codec::QuantizedStyle;
use crate::hier::HierEncoder;
use crate::nn::Ctx;
use crate::page::PageTree;
use crate::tensor::{Init, ParamId, ParamStore, Tape, Var};
use crate::transformer::{positional_encoding, Transformer};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Ar {
    store: ParamStore,
    config: ModelConfig,
    hier: HierEncoder,
    encoder: Transformer,
    style: StyleEncoder,
    start: ParamId,
    decoder: Transformer,
    head: StyleHead,
}

impl Ar {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init::new(seed);
        let d = config.d_model;
        let hier = HierEncoder::new(&mut store, &mut init, "content", d, config.hier);
        let encoder = Transformer::new(&mut store, &mut init, "encoder", &config.encoder())?;
        let style = StyleEncoder::new(&mut store, &mut init, "style", d);
        let start = store.add("start", init.normal(1, d));
        let decoder = Transformer::new(&mut store, &mut init, "decoder", &config.encoder().decoder())?;
        let head = StyleHead::new(&mut store, &mut init, "head", d);
        Ok(Ar {
            store,
            config: config.clone(),
            hier,
            encoder,
            style,
            start,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Encoded content, used both as memory and as per-step input.
    pub fn memory(&self, ctx: Ctx, page: &PageTree) -> Result<Var> {
        let content = self.hier.forward(ctx, page)?;
        self.encoder.encode(ctx, content.h_c)
    }

    /// Decoder outputs for steps `0..=prefix.len()` given the styles of the
    /// first `prefix.len()` elements.
    fn decode_steps(&self, ctx: Ctx, memory: Var, prefix: &[QuantizedStyle]) -> Result<Var> {
        let t = ctx.tape;
        let steps = prefix.len() + 1;
        let start = ctx.p(self.start);
        let inputs = if prefix.is_empty() {
            start
        } else {
            t.concat_rows(&[start, self.style.forward(ctx, prefix)?])?
        };
        let pe = t.constant(positional_encoding(steps, self.config.d_model));
        let content = t.slice_rows(memory, 0, steps)?;
        let x = t.add(t.add(inputs, pe)?, content)?;
        self.decoder.decode(ctx, x, Some(memory))
    }

    /// Teacher-forced logits: step `n` conditions on the ground-truth styles
    /// of elements `0..n`.
    pub fn teacher_forced(&self, ctx: Ctx, page: &PageTree, styles: &[QuantizedStyle]) -> Result<StyleLogits> {
        if styles.len() != page.len() {
            return Err(Error::Contract(format!(
                "{} styles for a page of {} elements",
                styles.len(),
                page.len()
            )));
        }
        let memory = self.memory(ctx, page)?;
        let h = self.decode_steps(ctx, memory, &styles[..styles.len() - 1])?;
        self.head.forward(ctx, h)
    }
}

impl Trainable for Ar {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn page_loss(&self, tape: &Tape, page: &PageTree, _seed: u64) -> Result<PageLoss> {
        let styles = quantized_styles(page)?;
        let targets = StyleTargets::new(&styles, &page.text_mask())?;
        let logits = self.teacher_forced(Ctx::new(tape, &self.store), page, &styles)?;
        let loss = mle_loss(tape, &logits, &targets)?;
        let recon = tape.value(loss).item();
        Ok(PageLoss { loss, recon, kl: 0.0 })
    }
}

impl Colorizer for Ar {
    /// Sequential decoding in pre-order: greedy (also used for `Prior`) or
    /// top-p sampling at every step.
    fn colorize(&self, page: &PageTree, strategy: Strategy, seed: u64) -> Result<Vec<QuantizedStyle>> {
        check_strategy(strategy)?;
        page.ensure_valid()?;
        let top_p = match strategy {
            Strategy::TopP(p) => Some(p),
            _ => None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = page.text_mask();
        let memory = {
            let tape = Tape::inference();
            let m = self.memory(Ctx::new(&tape, &self.store), page)?;
            let value = tape.value(m).clone();
            value
        };
        let mut styles: Vec<QuantizedStyle> = Vec::with_capacity(page.len());
        for n in 0..page.len() {
            // a fresh tape per step keeps memory use linear in the page size
            let tape = Tape::inference();
            let ctx = Ctx::new(&tape, &self.store);
            let memory = tape.constant(memory.clone());
            let h = self.decode_steps(ctx, memory, &styles)?;
            let last = tape.slice_rows(h, n, n + 1)?;
            let logits = self.head.forward(ctx, last)?;
            let chosen = choose_styles(&tape, &logits, &mask[n..n + 1], top_p, &mut rng)?;
            styles.push(chosen[0]);
        }
        Ok(styles)
    }
}
