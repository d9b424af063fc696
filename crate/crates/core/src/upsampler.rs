//! Color upsampler: regresses in-bin proportions from content and discrete
//! styles, then reconstructs full-resolution RGBA inside the original bins.
//!
//! Content embeddings (`h_C`) and style embeddings are summed per element,
//! passed through a Transformer encoder and a linear layer to eight logistic
//! outputs: text `r, g, b, a` then background `r, g, b, a`.

use crate::codec::{reconstruct_style, style_proportions, BinProportions, QuantizedStyle};
use crate::hier::HierEncoder;
use crate::models::style::StyleEncoder;
use crate::models::{quantized_styles, ModelConfig, PageLoss, Trainable};
use crate::nn::{Ctx, Linear};
use crate::page::{ColorStyle, PageTree};
use crate::tensor::{Init, ParamStore, Tape, Tensor, Var};
use crate::transformer::Transformer;
use crate::{Error, Result};

/// Proportions per element.
pub const OUTPUTS: usize = 8;

#[derive(Clone, Debug)]
pub struct Upsampler {
    store: ParamStore,
    config: ModelConfig,
    hier: HierEncoder,
    style: StyleEncoder,
    encoder: Transformer,
    out: Linear,
}

/// Weights of the eight outputs of each element: text entries count only
/// for elements with text.
pub fn output_weights(text_mask: &[bool]) -> Vec<f64> {
    text_mask
        .iter()
        .flat_map(|&t| {
            let w = if t { 1.0 } else { 0.0 };
            [w, w, w, w, 1.0, 1.0, 1.0, 1.0]
        })
        .collect()
}

/// Mean squared error over contributing proportion entries.
pub fn upsample_loss(tape: &Tape, pred: Var, gt: &[BinProportions], text_mask: &[bool]) -> Result<Var> {
    if gt.len() != text_mask.len() {
        return Err(Error::Contract(format!(
            "{} targets but {} mask entries",
            gt.len(),
            text_mask.len()
        )));
    }
    let data = gt.iter().flat_map(|p| p.to_array()).collect();
    let target = Tensor::matrix(gt.len(), OUTPUTS, data)?;
    tape.mse(pred, &target, &output_weights(text_mask))
}

impl Upsampler {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init::new(seed);
        let d = config.d_model;
        let hier = HierEncoder::new(&mut store, &mut init, "content", d, config.hier);
        let style = StyleEncoder::new(&mut store, &mut init, "style", d);
        let encoder = Transformer::new(&mut store, &mut init, "encoder", &config.encoder())?;
        let out = Linear::new(&mut store, &mut init, "out", d, OUTPUTS);
        Ok(Upsampler {
            store,
            config: config.clone(),
            hier,
            style,
            encoder,
            out,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// `N × 8` proportions in `(0, 1)`.
    pub fn forward(&self, ctx: Ctx, page: &PageTree, styles: &[QuantizedStyle]) -> Result<Var> {
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
        let h = self.encoder.encode(ctx, t.add(h_c, h_x)?)?;
        Ok(t.sigmoid(self.out.forward(ctx, h)?))
    }

    pub fn proportions(&self, page: &PageTree, styles: &[QuantizedStyle]) -> Result<Vec<BinProportions>> {
        let tape = Tape::inference();
        let v = self.forward(Ctx::new(&tape, &self.store), page, styles)?;
        let v = tape.value(v);
        Ok((0..page.len())
            .map(|i| BinProportions::from_array(v.row(i).try_into().expect("8 outputs")))
            .collect())
    }

    /// Full-resolution styles; every color stays in its input bin.
    pub fn apply(&self, page: &PageTree, styles: &[QuantizedStyle]) -> Result<Vec<ColorStyle>> {
        let props = self.proportions(page, styles)?;
        Ok(styles.iter().zip(&props).map(|(q, p)| reconstruct_style(q, p)).collect())
    }
}

impl Trainable for Upsampler {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Trained on ground-truth quantizations of the page's own colors.
    fn page_loss(&self, tape: &Tape, page: &PageTree, _seed: u64) -> Result<PageLoss> {
        let styles = quantized_styles(page)?;
        let gt: Vec<BinProportions> = page.styles()?.iter().map(style_proportions).collect();
        let pred = self.forward(Ctx::new(tape, &self.store), page, &styles)?;
        let loss = upsample_loss(tape, pred, &gt, &page.text_mask())?;
        let recon = tape.value(loss).item();
        Ok(PageLoss { loss, recon, kl: 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::quantize_style;
    use crate::page::test_util::small_tree;

    fn styles(page: &PageTree) -> Vec<QuantizedStyle> {
        page.styles().unwrap().iter().map(quantize_style).collect()
    }

    #[test]
    fn outputs_are_bounded_proportions() {
        let up = Upsampler::new(&ModelConfig::tiny(), 1).unwrap();
        let page = small_tree();
        let props = up.proportions(&page, &styles(&page)).unwrap();
        assert_eq!(props.len(), 4);
        for p in props {
            assert!(p.to_array().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn zero_output_layer_gives_mid_bin_colors() {
        let mut up = Upsampler::new(&ModelConfig::tiny(), 1).unwrap();
        up.store.zero_prefix("out.");
        let page = small_tree();
        let q = styles(&page);
        let full = up.apply(&page, &q).unwrap();
        // white quantizes to the top bins; lo + round(0.5·31) = 224 + 16
        assert_eq!(full[0].background.channels(), [240; 4]);
        assert_eq!(full[2].text.unwrap().channels(), [16, 16, 16, 240]);
        for (f, q) in full.iter().zip(&q) {
            assert_eq!(quantize_style(f), *q);
        }
    }

    #[test]
    fn loss_arithmetic_and_masking() {
        let tape = Tape::new();
        let pred = tape.constant(Tensor::full(&[1, 8], 0.5));
        let mut gt = BinProportions::from_array([0.5; 8]);
        gt.background[0] = 0.0;
        // one wrong entry of 4 counted (text masked out) → 0.25 / 4
        let l = upsample_loss(&tape, pred, &[gt], &[false]).unwrap();
        assert!((tape.value(l).item() - 0.25 / 4.0).abs() < 1e-15);
        let l = upsample_loss(&tape, pred, &[gt], &[true]).unwrap();
        assert!((tape.value(l).item() - 0.25 / 8.0).abs() < 1e-15);
        assert_eq!(output_weights(&[false, true]).iter().sum::<f64>(), 12.0);
        let exact = upsample_loss(&tape, pred, &[BinProportions::from_array([0.5; 8])], &[true]).unwrap();
        assert_eq!(tape.value(exact).item(), 0.0);
    }

    #[test]
    fn deterministic() {
        let up = Upsampler::new(&ModelConfig::tiny(), 4).unwrap();
        let page = small_tree();
        let q = styles(&page);
        assert_eq!(up.apply(&page, &q).unwrap(), up.apply(&page, &q).unwrap());
    }
}
