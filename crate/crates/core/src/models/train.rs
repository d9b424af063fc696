//! Mini-batch training loop shared by every model kind.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::page::PageTree;
use crate::tensor::{AdamW, ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

/// Loss of one page, with its components for reporting.
#[derive(Clone, Copy, Debug)]
pub struct PageLoss {
    pub loss: Var,
    /// Reconstruction term (negative log-likelihood, or MSE for the upsampler).
    pub recon: f64,
    /// Latent KL term (zero for models without latents).
    pub kl: f64,
}

/// A model that can be fitted by [`train`].
pub trait Trainable {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Records the training loss of one page on `tape`. `seed` drives any
    /// sampling noise the objective needs.
    fn page_loss(&self, tape: &Tape, page: &PageTree, seed: u64) -> Result<PageLoss>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iters: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iters: 1000,
            batch: 32,
            lr: 1e-4,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

/// Batch means of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Endless stream of page indices: a fresh seeded shuffle per epoch.
struct Batches {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl Batches {
    fn new(n: usize, seed: u64) -> Self {
        Batches {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

/// Gradient and loss terms of one page.
pub fn page_gradients<M: Trainable + ?Sized>(
    model: &M,
    page: &PageTree,
    seed: u64,
) -> Result<(Vec<Option<Tensor>>, PageLoss, f64)> {
    let tape = Tape::new();
    let pl = model.page_loss(&tape, page, seed)?;
    let loss = tape.value(pl.loss).item();
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss} on page `{}`", page.id)));
    }
    let grads = tape.backward(pl.loss)?.into_param_grads(model.params().len());
    Ok((grads, pl, loss))
}

/// Runs `cfg.iters` AdamW steps on mini-batches of `pages`. Per-step batch
/// means are passed to `on_step` and returned. The run is a pure function of
/// the model's initial parameters, the pages and `cfg`.
pub fn train<M: Trainable + ?Sized>(
    model: &mut M,
    pages: &[PageTree],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepStats),
) -> Result<Vec<StepStats>> {
    if pages.is_empty() {
        return Err(Error::Data("no training pages".into()));
    }
    if cfg.batch == 0 {
        return Err(Error::Contract("batch size must be positive".into()));
    }
    let mut batches = Batches::new(pages.len(), cfg.seed);
    let mut noise = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_a0_7e);
    let mut opt = AdamW::new(cfg.lr).with_weight_decay(cfg.weight_decay);
    let mut history = Vec::with_capacity(cfg.iters);
    for step in 0..cfg.iters {
        let n_params = model.params().len();
        let mut total: Vec<Option<Tensor>> = vec![None; n_params];
        let mut stats = StepStats {
            step,
            loss: 0.0,
            recon: 0.0,
            kl: 0.0,
        };
        for _ in 0..cfg.batch {
            let page = &pages[batches.next()];
            let (grads, pl, loss) = page_gradients(&*model, page, noise.random())?;
            stats.loss += loss;
            stats.recon += pl.recon;
            stats.kl += pl.kl;
            for (acc, g) in total.iter_mut().zip(grads) {
                match (acc.as_mut(), g) {
                    (Some(a), Some(g)) => a.add_assign(&g),
                    (None, Some(g)) => *acc = Some(g),
                    _ => {}
                }
            }
        }
        let inv = 1.0 / cfg.batch as f64;
        for g in total.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= inv);
        }
        stats.loss *= inv;
        stats.recon *= inv;
        stats.kl *= inv;
        opt.step(model.params_mut(), &total)?;
        on_step(&stats);
        history.push(stats);
    }
    Ok(history)
}

/// Mean loss over `pages` without updating parameters.
pub fn evaluate_loss<M: Trainable + ?Sized>(model: &M, pages: &[PageTree], seed: u64) -> Result<StepStats> {
    if pages.is_empty() {
        return Err(Error::Data("no pages to evaluate".into()));
    }
    let mut stats = StepStats {
        step: 0,
        loss: 0.0,
        recon: 0.0,
        kl: 0.0,
    };
    for (i, page) in pages.iter().enumerate() {
        let tape = Tape::inference();
        let pl = model.page_loss(&tape, page, seed.wrapping_add(i as u64))?;
        stats.loss += tape.value(pl.loss).item();
        stats.recon += pl.recon;
        stats.kl += pl.kl;
    }
    let inv = 1.0 / pages.len() as f64;
    stats.loss *= inv;
    stats.recon *= inv;
    stats.kl *= inv;
    Ok(stats)
}
