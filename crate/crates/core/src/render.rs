//! Deterministic box rasterizer for page previews and pixel histograms.
//!
//! Layout is a coarse stand-in for a browser: the root fills a 360×640
//! canvas, and every parent stacks its children vertically inside its own
//! rectangle (inset by 4 px), with heights proportional to subtree sizes and
//! at least 8 px. Painting runs in pre-order: each element composites its
//! background over the pixels below it, and text elements draw a vertically
//! centred bar (at most 8 px high) in their text color.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{quantize, RGB_CLASSES};
use crate::metrics::fcd::ColorHistogram;
use crate::page::{ColorStyle, PageTree, RgbaColor};
use crate::{Error, Result};

pub const CANVAS_WIDTH: u32 = 360;
pub const CANVAS_HEIGHT: u32 = 640;
pub const PADDING: u32 = 4;
pub const MIN_HEIGHT: u32 = 8;
pub const TEXT_BAR_HEIGHT: u32 = 8;

/// Pixel rectangle; `w` or `h` may be zero for elements squeezed out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    fn inset(&self, p: u32) -> Rect {
        if self.w <= 2 * p || self.h <= 2 * p {
            return Rect {
                x: self.x + self.w / 2,
                y: self.y + self.h / 2,
                w: 0,
                h: 0,
            };
        }
        Rect {
            x: self.x + p,
            y: self.y + p,
            w: self.w - 2 * p,
            h: self.h - 2 * p,
        }
    }

    fn bottom(&self) -> u32 {
        self.y + self.h
    }
}

/// One rectangle per element.
pub fn layout(tree: &PageTree) -> Result<Vec<Rect>> {
    tree.ensure_valid()?;
    let sizes = tree.subtree_sizes();
    let children = tree.children();
    let mut rects = vec![
        Rect {
            x: 0,
            y: 0,
            w: 0,
            h: 0
        };
        tree.len()
    ];
    rects[0] = Rect {
        x: 0,
        y: 0,
        w: CANVAS_WIDTH,
        h: CANVAS_HEIGHT,
    };
    // parents precede children in storage order
    for p in 0..tree.len() {
        if children[p].is_empty() {
            continue;
        }
        let inner = rects[p].inset(PADDING);
        let total: usize = children[p].iter().map(|&c| sizes[c]).sum();
        let mut cum = 0usize;
        let mut y = inner.y;
        for &c in &children[p] {
            cum += sizes[c];
            let boundary = inner.y + ((u64::from(inner.h) * cum as u64 + total as u64 / 2) / total as u64) as u32;
            let top = y.min(inner.bottom());
            let h = boundary.saturating_sub(top).max(MIN_HEIGHT).min(inner.bottom() - top);
            rects[c] = Rect {
                x: inner.x,
                y: top,
                w: inner.w,
                h,
            };
            y = top + h;
        }
    }
    Ok(rects)
}

/// 8-bit RGB pixels, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pixels {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Pixels {
    pub fn new(width: u32, height: u32, fill: [u8; 3]) -> Self {
        Pixels {
            width,
            height,
            data: fill.repeat((width * height) as usize),
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y * self.width + x) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// `alpha·src + (1 − alpha)·dst` with `alpha = num / den`, rounded half up.
pub fn blend(src: u8, dst: u8, num: u32, den: u32) -> u8 {
    let v = num * u32::from(src) + (den - num) * u32::from(dst);
    ((2 * v + den) / (2 * den)) as u8
}

fn fill(px: &mut Pixels, r: Rect, color: RgbaColor) {
    let a = u32::from(color.a);
    if a == 0 || r.w == 0 || r.h == 0 {
        return;
    }
    let src = [color.r, color.g, color.b];
    for y in r.y..r.bottom().min(px.height) {
        for x in r.x..(r.x + r.w).min(px.width) {
            let i = 3 * (y * px.width + x) as usize;
            for k in 0..3 {
                px.data[i + k] = blend(src[k], px.data[i + k], a, 255);
            }
        }
    }
}

/// Paints `styles` (one per element) into the given layout.
pub fn rasterize(tree: &PageTree, styles: &[ColorStyle], rects: &[Rect]) -> Result<Pixels> {
    if styles.len() != tree.len() || rects.len() != tree.len() {
        return Err(Error::Contract(format!(
            "{} styles and {} rectangles for {} elements",
            styles.len(),
            rects.len(),
            tree.len()
        )));
    }
    let mut px = Pixels::new(CANVAS_WIDTH, CANVAS_HEIGHT, [255; 3]);
    for (style, r) in styles.iter().zip(rects) {
        fill(&mut px, *r, style.background);
        if let Some(text) = style.text {
            let h = TEXT_BAR_HEIGHT.min(r.h);
            let bar = Rect {
                x: r.x,
                y: r.y + (r.h - h) / 2,
                w: r.w,
                h,
            };
            fill(&mut px, bar, text);
        }
    }
    Ok(px)
}

/// Layout and rasterization of a styled page.
pub fn render_page(tree: &PageTree) -> Result<Pixels> {
    let rects = layout(tree)?;
    rasterize(tree, &tree.styles()?, &rects)
}

/// Pixel counts per quantized RGB class, normalized by the pixel count.
pub fn pixel_histogram(px: &Pixels) -> ColorHistogram {
    let mut counts = vec![0u64; RGB_CLASSES];
    for p in px.data.chunks_exact(3) {
        counts[quantize(RgbaColor::new(p[0], p[1], p[2], 255)).rgb_index() - 1] += 1;
    }
    let n = (px.data.len() / 3).max(1) as f64;
    ColorHistogram(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// PNG bytes with fixed encoder settings (no filtering, fixed deflate
/// level), so identical pixels always give identical files.
pub fn encode_png(px: &Pixels) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, px.width, px.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Balanced);
        enc.set_filter(png::Filter::NoFilter);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        w.write_image_data(&px.data)
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    }
    Ok(out)
}

pub fn write_png(path: impl AsRef<Path>, px: &Pixels) -> Result<()> {
    use std::io::Write;
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&encode_png(px)?)?;
    Ok(())
}
