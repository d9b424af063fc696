//! WCAG 2.1 contrast ratio and per-page text contrast audits.

use serde::{Deserialize, Serialize};

use crate::page::{PageTree, RgbaColor};
use crate::{Error, Result};

/// Minimum contrast ratio for (normal-size) text.
pub const MIN_TEXT_CONTRAST: f64 = 4.5;

type Rgb = [f64; 3];

const WHITE: Rgb = [255.0; 3];

/// Source-over compositing of `src` onto an opaque `dst`.
pub fn composite(src: RgbaColor, dst: Rgb) -> Rgb {
    let a = f64::from(src.a) / 255.0;
    let s = [src.r, src.g, src.b].map(f64::from);
    [0, 1, 2].map(|k| a * s[k] + (1.0 - a) * dst[k])
}

fn linearize(c: f64) -> f64 {
    let c = c / 255.0;
    if c <= 0.03928 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// WCAG relative luminance of an opaque color.
pub fn relative_luminance(c: Rgb) -> f64 {
    0.2126 * linearize(c[0]) + 0.7152 * linearize(c[1]) + 0.0722 * linearize(c[2])
}

fn ratio(a: Rgb, b: Rgb) -> f64 {
    let (la, lb) = (relative_luminance(a), relative_luminance(b));
    (la.max(lb) + 0.05) / (la.min(lb) + 0.05)
}

/// Contrast of `fg` over `bg`. The background is taken as opaque (its alpha
/// is ignored) and the foreground is composited onto it first.
pub fn contrast_ratio(fg: RgbaColor, bg: RgbaColor) -> f64 {
    let bg = [bg.r, bg.g, bg.b].map(f64::from);
    ratio(composite(fg, bg), bg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastViolation {
    pub element: usize,
    pub ratio: f64,
}

/// Text elements whose color contrasts with their effective background by
/// less than 4.5:1. The effective background composites every ancestor's
/// background, root first, over opaque white, then the element's own.
pub fn audit_page(page: &PageTree) -> Result<Vec<ContrastViolation>> {
    page.ensure_valid()?;
    let styles = page.styles()?;
    let mut effective: Vec<Rgb> = Vec::with_capacity(page.len());
    let mut out = Vec::new();
    for (i, (el, style)) in page.elements.iter().zip(&styles).enumerate() {
        let below = el.parent.map_or(WHITE, |p| effective[p]);
        let bg = composite(style.background, below);
        effective.push(bg);
        if let Some(text) = style.text {
            let r = ratio(composite(text, bg), bg);
            if r < MIN_TEXT_CONTRAST {
                out.push(ContrastViolation { element: i, ratio: r });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageContrast {
    pub id: String,
    pub violations: Vec<ContrastViolation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    /// Fraction of pages with at least one violation.
    pub pages_violating_fraction: f64,
    /// Violating elements per page, averaged over all pages.
    pub mean_violating_elements: f64,
    pub pages: Vec<PageContrast>,
}

pub fn aggregate_contrast(pages: &[PageTree]) -> Result<ContrastReport> {
    if pages.is_empty() {
        return Err(Error::Data("no pages to audit".into()));
    }
    let details = pages
        .iter()
        .map(|p| {
            Ok(PageContrast {
                id: p.id.clone(),
                violations: audit_page(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = pages.len() as f64;
    Ok(ContrastReport {
        pages_violating_fraction: details.iter().filter(|d| !d.violations.is_empty()).count() as f64 / n,
        mean_violating_elements: details.iter().map(|d| d.violations.len()).sum::<usize>() as f64 / n,
        pages: details,
    })
}
