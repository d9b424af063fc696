//! Evaluation: accuracy and macro F-score over discrete colors, Fréchet
//! color distance between histogram distributions, and contrast audits.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::codec::{quantize_style, QuantizedColor, QuantizedStyle};
use crate::page::PageTree;
use crate::{Error, Result};

pub mod contrast;
pub mod eigen;
pub mod fcd;

pub use contrast::{aggregate_contrast, audit_page, contrast_ratio, ContrastReport, ContrastViolation};
pub use fcd::{fcd_protocol, frechet_distance, histogram, pixel_histogram, ColorHistogram, GaussianStats, HistogramKind};

/// A predicted and a ground-truth color for one (element, property) slot.
pub type Slot = (QuantizedColor, QuantizedColor);

/// Slots of one page: the background of every element, plus the text color
/// of elements whose ground truth has text.
pub fn color_slots(pred: &[QuantizedStyle], gt: &[QuantizedStyle]) -> Result<Vec<Slot>> {
    if pred.len() != gt.len() {
        return Err(Error::Data(format!(
            "prediction has {} elements, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut out = Vec::with_capacity(2 * gt.len());
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        out.push((p.background, g.background));
        if let Some(gt_text) = g.text {
            let p_text = p
                .text
                .ok_or_else(|| Error::Data(format!("element {i}: predicted style lacks a text color")))?;
            out.push((p_text, gt_text));
        }
    }
    Ok(out)
}

/// Slots over aligned page lists (matched by position; ids must agree).
pub fn page_slots(pred: &[PageTree], gt: &[PageTree]) -> Result<Vec<Slot>> {
    if pred.len() != gt.len() {
        return Err(Error::Data(format!("{} predicted pages for {} references", pred.len(), gt.len())));
    }
    let mut out = Vec::new();
    for (p, g) in pred.iter().zip(gt) {
        if p.id != g.id {
            return Err(Error::Data(format!("page `{}` compared with `{}`", p.id, g.id)));
        }
        let ps: Vec<QuantizedStyle> = p.styles()?.iter().map(quantize_style).collect();
        let gs: Vec<QuantizedStyle> = g.styles()?.iter().map(quantize_style).collect();
        out.extend(color_slots(&ps, &gs)?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelScores {
    pub rgb: f64,
    pub alpha: f64,
}

/// Exact-match rates of RGB and alpha indices.
pub fn accuracy(slots: &[Slot]) -> Result<ChannelScores> {
    if slots.is_empty() {
        return Err(Error::Data("no color slots to score".into()));
    }
    let n = slots.len() as f64;
    Ok(ChannelScores {
        rgb: slots.iter().filter(|(p, g)| p.rgb_index() == g.rgb_index()).count() as f64 / n,
        alpha: slots.iter().filter(|(p, g)| p.alpha_index() == g.alpha_index()).count() as f64 / n,
    })
}

/// Mean of class-wise F1 over every class seen in predictions or ground
/// truth; undefined precision, recall or F1 count as 0.
pub fn macro_f1(pairs: impl Iterator<Item = (usize, usize)>) -> Option<f64> {
    #[derive(Default)]
    struct Counts {
        tp: f64,
        fp: f64,
        fn_: f64,
    }
    let mut counts: BTreeMap<usize, Counts> = BTreeMap::new();
    for (p, g) in pairs {
        if p == g {
            counts.entry(p).or_default().tp += 1.0;
        } else {
            counts.entry(p).or_default().fp += 1.0;
            counts.entry(g).or_default().fn_ += 1.0;
        }
    }
    if counts.is_empty() {
        return None;
    }
    let total: f64 = counts
        .values()
        .map(|c| {
            let precision = if c.tp + c.fp > 0.0 { c.tp / (c.tp + c.fp) } else { 0.0 };
            let recall = if c.tp + c.fn_ > 0.0 { c.tp / (c.tp + c.fn_) } else { 0.0 };
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .sum();
    Some(total / counts.len() as f64)
}

pub fn macro_f(slots: &[Slot]) -> Result<ChannelScores> {
    let none = || Error::Data("no color slots to score".into());
    Ok(ChannelScores {
        rgb: macro_f1(slots.iter().map(|(p, g)| (p.rgb_index(), g.rgb_index()))).ok_or_else(none)?,
        alpha: macro_f1(slots.iter().map(|(p, g)| (p.alpha_index(), g.alpha_index()))).ok_or_else(none)?,
    })
}

/// Distinct classes among `slots`, for reporting.
pub fn class_count(slots: &[Slot]) -> usize {
    slots
        .iter()
        .flat_map(|(p, g)| [p.rgb_index(), g.rgb_index()])
        .collect::<BTreeSet<_>>()
        .len()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcdScores {
    pub bg: f64,
    pub text: f64,
    pub pixel: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastSummary {
    pub pct_pages: f64,
    pub mean_elements: f64,
}

/// The full evaluation report, serialized with keys in this order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: ChannelScores,
    pub macro_f: ChannelScores,
    pub fcd: FcdScores,
    pub contrast: ContrastSummary,
}

/// FCD of predictions against references for every histogram kind.
pub fn fcd_scores(pred: &[PageTree], gt: &[PageTree], seed: u64) -> Result<FcdScores> {
    let mut v = [0.0; 3];
    for (out, kind) in v.iter_mut().zip(HistogramKind::ALL) {
        let g = pred.iter().map(|p| histogram(p, kind)).collect::<Result<Vec<_>>>()?;
        let r = gt.iter().map(|p| histogram(p, kind)).collect::<Result<Vec<_>>>()?;
        *out = fcd_protocol(&g, &r, seed)?;
    }
    Ok(FcdScores {
        bg: v[0],
        text: v[1],
        pixel: v[2],
    })
}

/// Contrast audit of `pages`; `pct_pages` is a percentage.
pub fn contrast_summary(pages: &[PageTree]) -> Result<ContrastSummary> {
    let c = aggregate_contrast(pages)?;
    Ok(ContrastSummary {
        pct_pages: 100.0 * c.pages_violating_fraction,
        mean_elements: c.mean_violating_elements,
    })
}

/// All four metric groups for predicted pages against aligned references.
/// FCD halves are drawn with `seed`; the contrast audit runs on the
/// predictions.
pub fn evaluate(pred: &[PageTree], gt: &[PageTree], seed: u64) -> Result<MetricReport> {
    let slots = page_slots(pred, gt)?;
    Ok(MetricReport {
        accuracy: accuracy(&slots)?,
        macro_f: macro_f(&slots)?,
        fcd: fcd_scores(pred, gt, seed)?,
        contrast: contrast_summary(pred)?,
    })
}

/// Canonical JSON of any report value: pretty-printed, LF, trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
