//! Quantizes colors into 8 bins per channel and reconstructs them from
//! in-bin proportions.
//!
//! Usage:
//!   cargo run --example quantize_colors

use webcolor::codec::{bin_center_style, gt_proportions, quantize, reconstruct, QuantizedStyle};
use webcolor::page::RgbaColor;

fn main() {
    for c in [
        RgbaColor::new(25, 118, 210, 255),
        RgbaColor::new(255, 193, 7, 255),
        RgbaColor::new(0, 0, 0, 128),
    ] {
        let q = quantize(c);
        let props = gt_proportions(c);
        let back = reconstruct(q, &props).color;
        println!(
            "{:?} -> rgb class {:3}, alpha class {} -> bins {:?}, proportions {:.3?} -> {:?}",
            c.channels(),
            q.rgb_index(),
            q.alpha_index(),
            q.bins(),
            props,
            back.channels()
        );
        assert_eq!(back, c);
    }

    // Without an upsampler, the bin center is the natural estimate.
    let q = QuantizedStyle { text: Some(quantize(RgbaColor::BLACK)), background: quantize(RgbaColor::WHITE) };
    println!("bin centers: {:?}", bin_center_style(&q));

    // Out-of-range proportions are clamped into the bin.
    let r = reconstruct(quantize(RgbaColor::WHITE), &[1.5, 0.5, -0.2, 1.0]);
    println!("clamped {:?} -> {:?}", r.clamped, r.color.channels());
}
