//! Style embeddings and the four-way style estimation head.

use crate::codec::{QuantizedColor, QuantizedStyle, ALPHA_CLASSES, RGB_CLASSES};
use crate::nn::{Ctx, Embedding, Linear};
use crate::tensor::{Init, ParamId, ParamStore, Var};
use crate::{Error, Result};

/// Embeds discrete styles: each color is `rgb lookup ⊕ alpha lookup → linear`,
/// then `text ⊕ background → linear`. Elements without text use a learnable
/// vector in place of the text color.
#[derive(Clone, Debug)]
pub struct StyleEncoder {
    rgb: Embedding,
    alpha: Embedding,
    color: Linear,
    merge: Linear,
    no_text: ParamId,
}

impl StyleEncoder {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, d: usize) -> Self {
        let half = d / 2;
        StyleEncoder {
            rgb: Embedding::new(store, init, &format!("{name}.rgb"), RGB_CLASSES, half),
            alpha: Embedding::new(store, init, &format!("{name}.alpha"), ALPHA_CLASSES, d - half),
            color: Linear::new(store, init, &format!("{name}.color"), d, d),
            merge: Linear::new(store, init, &format!("{name}.merge"), 2 * d, d),
            no_text: store.add(format!("{name}.no_text"), init.normal(1, d)),
        }
    }

    fn colors(&self, ctx: Ctx, colors: &[QuantizedColor]) -> Result<Var> {
        let rgb: Vec<usize> = colors.iter().map(|c| c.rgb_index() - 1).collect();
        let alpha: Vec<usize> = colors.iter().map(|c| c.alpha_index() - 1).collect();
        let x = ctx
            .tape
            .concat_cols(&[self.rgb.forward(ctx, &rgb)?, self.alpha.forward(ctx, &alpha)?])?;
        self.color.forward(ctx, x)
    }

    /// One `d`-vector per style.
    pub fn forward(&self, ctx: Ctx, styles: &[QuantizedStyle]) -> Result<Var> {
        if styles.is_empty() {
            return Err(Error::Contract("no styles to embed".into()));
        }
        let t = ctx.tape;
        let bg: Vec<QuantizedColor> = styles.iter().map(|s| s.background).collect();
        let bg = self.colors(ctx, &bg)?;
        let texts: Vec<QuantizedColor> = styles.iter().filter_map(|s| s.text).collect();
        let no_text = ctx.p(self.no_text);
        // rows 0..k are text colors, row k is the no-text vector
        let pool = if texts.is_empty() {
            no_text
        } else {
            t.concat_rows(&[self.colors(ctx, &texts)?, no_text])?
        };
        let mut k = 0;
        let idx: Vec<usize> = styles
            .iter()
            .map(|s| match s.text {
                Some(_) => {
                    k += 1;
                    k - 1
                }
                None => texts.len(),
            })
            .collect();
        let text = t.gather_rows(pool, &idx)?;
        self.merge.forward(ctx, t.concat_cols(&[text, bg])?)
    }
}

/// Per-element logits of the four categorical heads.
#[derive(Clone, Copy, Debug)]
pub struct StyleLogits {
    pub text_rgb: Var,
    pub text_alpha: Var,
    pub bg_rgb: Var,
    pub bg_alpha: Var,
}

/// Four linear maps from `d` to 512 / 8 / 512 / 8 logits.
#[derive(Clone, Debug)]
pub struct StyleHead {
    text_rgb: Linear,
    text_alpha: Linear,
    bg_rgb: Linear,
    bg_alpha: Linear,
}

impl StyleHead {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, d: usize) -> Self {
        StyleHead {
            text_rgb: Linear::new(store, init, &format!("{name}.text_rgb"), d, RGB_CLASSES),
            text_alpha: Linear::new(store, init, &format!("{name}.text_alpha"), d, ALPHA_CLASSES),
            bg_rgb: Linear::new(store, init, &format!("{name}.bg_rgb"), d, RGB_CLASSES),
            bg_alpha: Linear::new(store, init, &format!("{name}.bg_alpha"), d, ALPHA_CLASSES),
        }
    }

    pub fn forward(&self, ctx: Ctx, x: Var) -> Result<StyleLogits> {
        Ok(StyleLogits {
            text_rgb: self.text_rgb.forward(ctx, x)?,
            text_alpha: self.text_alpha.forward(ctx, x)?,
            bg_rgb: self.bg_rgb.forward(ctx, x)?,
            bg_alpha: self.bg_alpha.forward(ctx, x)?,
        })
    }
}

/// 0-based class targets of the four heads; text targets are `None` for
/// elements without text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StyleTargets {
    pub text_rgb: Vec<Option<usize>>,
    pub text_alpha: Vec<Option<usize>>,
    pub bg_rgb: Vec<Option<usize>>,
    pub bg_alpha: Vec<Option<usize>>,
}

impl StyleTargets {
    /// Targets for `styles`; text colors are dropped where `text_mask` is false.
    pub fn new(styles: &[QuantizedStyle], text_mask: &[bool]) -> Result<Self> {
        if styles.len() != text_mask.len() {
            return Err(Error::Contract(format!(
                "{} styles but {} mask entries",
                styles.len(),
                text_mask.len()
            )));
        }
        let text = |s: &QuantizedStyle, m: bool| s.text.filter(|_| m);
        Ok(StyleTargets {
            text_rgb: styles.iter().zip(text_mask).map(|(s, &m)| text(s, m).map(|c| c.rgb_index() - 1)).collect(),
            text_alpha: styles.iter().zip(text_mask).map(|(s, &m)| text(s, m).map(|c| c.alpha_index() - 1)).collect(),
            bg_rgb: styles.iter().map(|s| Some(s.background.rgb_index() - 1)).collect(),
            bg_alpha: styles.iter().map(|s| Some(s.background.alpha_index() - 1)).collect(),
        })
    }

    /// Number of contributing (element, head) terms.
    pub fn count(&self) -> usize {
        [&self.text_rgb, &self.text_alpha, &self.bg_rgb, &self.bg_alpha]
            .iter()
            .map(|v| v.iter().flatten().count())
            .sum()
    }
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Assembles discrete styles from per-element class choices (0-based).
pub fn assemble(
    text_mask: &[bool],
    mut choose: impl FnMut(usize, Head) -> Result<usize>,
) -> Result<Vec<QuantizedStyle>> {
    text_mask
        .iter()
        .enumerate()
        .map(|(i, &has_text)| {
            let background = QuantizedColor::new(choose(i, Head::BgRgb)? + 1, choose(i, Head::BgAlpha)? + 1)?;
            let text = if has_text {
                Some(QuantizedColor::new(choose(i, Head::TextRgb)? + 1, choose(i, Head::TextAlpha)? + 1)?)
            } else {
                None
            };
            Ok(QuantizedStyle { text, background })
        })
        .collect()
}

/// Discrete styles from evaluated logits: arg-max, or nucleus sampling when
/// `top_p` is given.
pub fn choose_styles<R: rand::Rng + ?Sized>(
    tape: &crate::tensor::Tape,
    logits: &StyleLogits,
    text_mask: &[bool],
    top_p: Option<f64>,
    rng: &mut R,
) -> Result<Vec<QuantizedStyle>> {
    let values = [Head::TextRgb, Head::TextAlpha, Head::BgRgb, Head::BgAlpha].map(|h| tape.value(logits.get(h)).clone());
    assemble(text_mask, |i, h| {
        let row = values[h as usize].row(i);
        match top_p {
            None => Ok(argmax(row)),
            Some(p) => super::sampling::sample_top_p(row, p, rng),
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    TextRgb,
    TextAlpha,
    BgRgb,
    BgAlpha,
}

impl StyleLogits {
    pub fn get(&self, head: Head) -> Var {
        match head {
            Head::TextRgb => self.text_rgb,
            Head::TextAlpha => self.text_alpha,
            Head::BgRgb => self.bg_rgb,
            Head::BgAlpha => self.bg_alpha,
        }
    }
}
