//! RGBA quantization into 8 bins per channel.
//!
//! Channel value `c` falls in bin `k = c / 32`. RGB bins are packed r-major
//! into a 1-based index `1 + 64·k_r + 8·k_g + k_b` (1..=512) and the alpha bin
//! into `1 + k_a` (1..=8). Inside a bin the position is a proportion
//! `α = (c − 32k) / 31 ∈ [0, 1]`, inverted by `c = 32k + round(31α)`.

use serde::{Deserialize, Serialize};

use crate::page::{ColorStyle, RgbaColor};
use crate::{Error, Result};

pub const BINS_PER_CHANNEL: usize = 8;
pub const BIN_WIDTH: u8 = 32;
/// Number of RGB classes.
pub const RGB_CLASSES: usize = 512;
/// Number of alpha classes.
pub const ALPHA_CLASSES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuantizedColor {
    rgb: u16,
    alpha: u8,
}

impl QuantizedColor {
    /// Builds from 1-based indices.
    pub fn new(rgb_index: usize, alpha_index: usize) -> Result<Self> {
        if !(1..=RGB_CLASSES).contains(&rgb_index) {
            return Err(Error::Range(format!("rgb index {rgb_index} not in 1..=512")));
        }
        if !(1..=ALPHA_CLASSES).contains(&alpha_index) {
            return Err(Error::Range(format!("alpha index {alpha_index} not in 1..=8")));
        }
        Ok(QuantizedColor {
            rgb: rgb_index as u16,
            alpha: alpha_index as u8,
        })
    }

    pub fn rgb_index(&self) -> usize {
        self.rgb as usize
    }

    pub fn alpha_index(&self) -> usize {
        self.alpha as usize
    }

    /// Channel bins `(k_r, k_g, k_b, k_a)`, each in 0..8.
    pub fn bins(&self) -> [u8; 4] {
        let k = self.rgb - 1;
        [(k / 64) as u8, ((k / 8) % 8) as u8, (k % 8) as u8, self.alpha - 1]
    }

    pub fn from_bins(bins: [u8; 4]) -> Self {
        let [r, g, b, a] = bins.map(u16::from);
        QuantizedColor {
            rgb: 1 + 64 * r + 8 * g + b,
            alpha: 1 + a as u8,
        }
    }
}

/// Discrete style of one element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantizedStyle {
    pub text: Option<QuantizedColor>,
    pub background: QuantizedColor,
}

/// In-bin proportions of one element, channels ordered `r, g, b, a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinProportions {
    pub text: [f64; 4],
    pub background: [f64; 4],
}

impl BinProportions {
    /// Flat `[text r,g,b,a, background r,g,b,a]`.
    pub fn to_array(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        out[..4].copy_from_slice(&self.text);
        out[4..].copy_from_slice(&self.background);
        out
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        BinProportions {
            text: [a[0], a[1], a[2], a[3]],
            background: [a[4], a[5], a[6], a[7]],
        }
    }
}

pub fn quantize(color: RgbaColor) -> QuantizedColor {
    QuantizedColor::from_bins(color.channels().map(|c| c / BIN_WIDTH))
}

pub fn quantize_style(style: &ColorStyle) -> QuantizedStyle {
    QuantizedStyle {
        text: style.text.map(quantize),
        background: quantize(style.background),
    }
}

/// Inclusive channel range `(lo, hi)` covered by `bin`.
pub fn bin_bounds(bin: usize) -> Result<(u8, u8)> {
    if bin >= BINS_PER_CHANNEL {
        return Err(Error::Range(format!("bin {bin} not in 0..8")));
    }
    let lo = bin as u8 * BIN_WIDTH;
    Ok((lo, lo + (BIN_WIDTH - 1)))
}

/// Ground-truth in-bin proportion of each channel.
pub fn gt_proportions(color: RgbaColor) -> [f64; 4] {
    color
        .channels()
        .map(|c| f64::from(c % BIN_WIDTH) / f64::from(BIN_WIDTH - 1))
}

/// Ground-truth proportions of a style. No-text elements get zeros for the
/// text slot (masked out downstream).
pub fn style_proportions(style: &ColorStyle) -> BinProportions {
    BinProportions {
        text: style.text.map(gt_proportions).unwrap_or([0.0; 4]),
        background: gt_proportions(style.background),
    }
}

/// Result of [`reconstruct`]; `clamped` records proportions that were pulled
/// back into `[0, 1]` (NaN counts as clamped to 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reconstruction {
    pub color: RgbaColor,
    pub clamped: bool,
}

/// Full-resolution color from a quantized color and in-bin proportions.
/// The result always quantizes back to `q`.
pub fn reconstruct(q: QuantizedColor, props: &[f64; 4]) -> Reconstruction {
    let mut clamped = false;
    let mut out = [0u8; 4];
    for ((o, &k), &p) in out.iter_mut().zip(q.bins().iter()).zip(props) {
        let a = if p.is_nan() {
            clamped = true;
            0.0
        } else if !(0.0..=1.0).contains(&p) {
            clamped = true;
            p.clamp(0.0, 1.0)
        } else {
            p
        };
        *o = k * BIN_WIDTH + (a * f64::from(BIN_WIDTH - 1)).round() as u8;
    }
    Reconstruction {
        color: RgbaColor::from_channels(out),
        clamped,
    }
}

/// Full-resolution style; text proportions are ignored when `q.text` is absent.
pub fn reconstruct_style(q: &QuantizedStyle, props: &BinProportions) -> ColorStyle {
    ColorStyle {
        text: q.text.map(|t| reconstruct(t, &props.text).color),
        background: reconstruct(q.background, &props.background).color,
    }
}

/// Bin-center reconstruction, used when no upsampler is available.
pub fn bin_center_style(q: &QuantizedStyle) -> ColorStyle {
    let half = BinProportions {
        text: [0.5; 4],
        background: [0.5; 4],
    };
    reconstruct_style(q, &half)
}
