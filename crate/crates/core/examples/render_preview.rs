//! Renders a generated page to a PNG preview and prints its pixel histogram
//! peaks.
//!
//! Usage:
//!   cargo run --example render_preview -- [out.png]

use webcolor::corpus::{generate_corpus, CorpusConfig};
use webcolor::metrics::pixel_histogram;
use webcolor::render::{encode_png, layout, render_page, write_png};

fn main() -> webcolor::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "preview.png".into());
    let page = generate_corpus(&CorpusConfig { n_pages: 1, seed: 11, ..Default::default() })?.remove(0);
    for (i, r) in layout(&page)?.iter().enumerate().take(6) {
        println!("element {i} ({}): {r:?}", page.elements[i].content.tag);
    }
    let pixels = render_page(&page)?;
    let mut bins: Vec<(usize, f64)> = pixel_histogram(&pixels).0.into_iter().enumerate().filter(|b| b.1 > 0.0).collect();
    bins.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (bin, share) in bins.iter().take(4) {
        println!("rgb class {:3}: {:.1}% of pixels", bin + 1, 100.0 * share);
    }
    write_png(&out, &pixels)?;
    println!("wrote {out} ({} bytes)", encode_png(&pixels)?.len());
    Ok(())
}
