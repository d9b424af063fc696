//! Conditional VAE core.
//!
//! A posterior encoder reads content and ground-truth style embeddings
//! (summed per element) and emits one Gaussian latent per element. The
//! decoder is a self-attention stack over `W_z(Z + PE) + W_c·h_C`, so at
//! generation time it depends only on latents drawn from the prior and the
//! content.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::loss::cvae_loss;
use super::style::{choose_styles, StyleEncoder, StyleHead, StyleLogits, StyleTargets};
use super::train::{PageLoss, Trainable};
use super::{check_strategy, quantized_styles, Colorizer, ModelConfig, Strategy};
use crate::codec::QuantizedStyle;
use crate::hier::HierEncoder;
use crate::nn::{Ctx, Linear};
use crate::page::PageTree;
use crate::tensor::{Init, ParamStore, Tape, Tensor, Var};
use crate::transformer::{positional_encoding, Transformer};
use crate::{Error, Result};

/// `log σ²` is clamped to `[−LOGVAR_LIMIT, LOGVAR_LIMIT]`.
pub const LOGVAR_LIMIT: f64 = 10.0;

/// Source of the standard-normal draws `ε`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Noise {
    /// `ε = 0`: latents equal their means.
    Zero,
    Seeded(u64),
}

impl Noise {
    pub fn sample(self, rows: usize, cols: usize) -> Tensor {
        match self {
            Noise::Zero => Tensor::zeros(&[rows, cols]),
            Noise::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
                Tensor::matrix(rows, cols, data).expect("sized")
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CvaeOutput {
    pub logits: StyleLogits,
    pub mu: Var,
    pub logvar: Var,
    pub z: Var,
}

#[derive(Clone, Debug)]
pub struct Cvae {
    store: ParamStore,
    config: ModelConfig,
    hier: HierEncoder,
    style: StyleEncoder,
    posterior: Transformer,
    to_mu: Linear,
    to_logvar: Linear,
    z_proj: Linear,
    c_proj: Linear,
    decoder: Transformer,
    head: StyleHead,
}

impl Cvae {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init::new(seed);
        let d = config.d_model;
        let hier = HierEncoder::new(&mut store, &mut init, "content", d, config.hier);
        let style = StyleEncoder::new(&mut store, &mut init, "style", d);
        let posterior = Transformer::new(&mut store, &mut init, "posterior", &config.encoder())?;
        let to_mu = Linear::new(&mut store, &mut init, "posterior.mu", d, d);
        let to_logvar = Linear::new(&mut store, &mut init, "posterior.logvar", d, d);
        let z_proj = Linear::new(&mut store, &mut init, "decoder.z_proj", d, d);
        let c_proj = Linear::new(&mut store, &mut init, "decoder.c_proj", d, d);
        let decoder = Transformer::new(&mut store, &mut init, "decoder", &config.encoder())?;
        let head = StyleHead::new(&mut store, &mut init, "head", d);
        Ok(Cvae {
            store,
            config: config.clone(),
            hier,
            style,
            posterior,
            to_mu,
            to_logvar,
            z_proj,
            c_proj,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Decodes per-element latents `z` (`N × d`) given content `h_c`.
    pub fn decode(&self, ctx: Ctx, z: Var, h_c: Var) -> Result<StyleLogits> {
        let t = ctx.tape;
        let n = t.shape(z)[0];
        let pe = t.constant(positional_encoding(n, self.config.d_model));
        let zp = self.z_proj.forward(ctx, t.add(z, pe)?)?;
        let cp = self.c_proj.forward(ctx, h_c)?;
        let h = self.decoder.encode(ctx, t.add(zp, cp)?)?;
        self.head.forward(ctx, h)
    }

    /// Posterior pass with reparametrized latents, then decoding.
    pub fn forward_train(
        &self,
        ctx: Ctx,
        page: &PageTree,
        styles: &[QuantizedStyle],
        noise: Noise,
    ) -> Result<CvaeOutput> {
        if styles.len() != page.len() {
            return Err(Error::Contract(format!(
                "{} styles for a page of {} elements",
                styles.len(),
                page.len()
            )));
        }
        let t = ctx.tape;
        let h_c = self.hier.forward(ctx, page)?.h_c;
        let h_x = self.style.forward(ctx, styles)?;
        let post = self.posterior.encode(ctx, t.add(h_c, h_x)?)?;
        let mu = self.to_mu.forward(ctx, post)?;
        let logvar = t.clamp(self.to_logvar.forward(ctx, post)?, -LOGVAR_LIMIT, LOGVAR_LIMIT);
        let eps = noise.sample(page.len(), self.config.d_model);
        let z = t.reparam(mu, logvar, &eps)?;
        let logits = self.decode(ctx, z, h_c)?;
        Ok(CvaeOutput { logits, mu, logvar, z })
    }

    /// Logits for latents drawn from the prior (`Noise::Zero` gives the prior mean).
    pub fn prior_logits(&self, ctx: Ctx, page: &PageTree, noise: Noise) -> Result<StyleLogits> {
        let h_c = self.hier.forward(ctx, page)?.h_c;
        let z = ctx.tape.constant(noise.sample(page.len(), self.config.d_model));
        self.decode(ctx, z, h_c)
    }
}

impl Trainable for Cvae {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn page_loss(&self, tape: &Tape, page: &PageTree, seed: u64) -> Result<PageLoss> {
        let styles = quantized_styles(page)?;
        let targets = StyleTargets::new(&styles, &page.text_mask())?;
        let out = self.forward_train(Ctx::new(tape, &self.store), page, &styles, Noise::Seeded(seed))?;
        let l = cvae_loss(tape, &out.logits, &targets, out.mu, out.logvar, self.config.kl_weight)?;
        let recon = tape.value(l.mle).item();
        let kl = tape.value(l.kl).item();
        Ok(PageLoss { loss: l.total, recon, kl })
    }
}

impl Colorizer for Cvae {
    /// `Prior` draws `Z ~ N(0, I)` from `seed` and takes the arg-max;
    /// `Greedy` decodes the prior mean `Z = 0`; `TopP` draws `Z` and then
    /// samples each categorical from its nucleus.
    fn colorize(&self, page: &PageTree, strategy: Strategy, seed: u64) -> Result<Vec<QuantizedStyle>> {
        check_strategy(strategy)?;
        let (noise, top_p) = match strategy {
            Strategy::Greedy => (Noise::Zero, None),
            Strategy::Prior => (Noise::Seeded(seed), None),
            Strategy::TopP(p) => (Noise::Seeded(seed), Some(p)),
        };
        let tape = Tape::inference();
        let logits = self.prior_logits(Ctx::new(&tape, &self.store), page, noise)?;
        // the sampler stream is distinct from the latent stream
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        choose_styles(&tape, &logits, &page.text_mask(), top_p, &mut rng)
    }
}
