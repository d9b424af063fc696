//! Scores predictions with accuracy, macro F, Fréchet color distance and the
//! contrast audit, and prints the canonical JSON report.
//!
//! Usage:
//!   cargo run --release --example evaluate_metrics

use webcolor::baselines::FrequencyTable;
use webcolor::codec::bin_center_style;
use webcolor::corpus::{generate_corpus, CorpusConfig, Grammar};
use webcolor::metrics::{evaluate, fcd_protocol, histogram, to_canonical_json, HistogramKind};
use webcolor::page::{ColorStyle, PageTree, RgbaColor};

fn main() -> webcolor::Result<()> {
    let pages = generate_corpus(&CorpusConfig { n_pages: 80, grammar: Grammar::ParentConditional, seed: 3, ..Default::default() })?;
    let (train_pages, test_pages) = pages.split_at(40);
    let table = FrequencyTable::fit(train_pages)?;
    let pred = test_pages
        .iter()
        .map(|p| {
            let styles: Vec<ColorStyle> = table.colorize_mode(p)?.iter().map(bin_center_style).collect();
            p.with_styles(&styles)
        })
        .collect::<webcolor::Result<Vec<PageTree>>>()?;
    print!("{}", to_canonical_json(&evaluate(&pred, test_pages, 0)?)?);

    // FCD separates a real corpus from a single-color one.
    let grey: Vec<PageTree> = test_pages
        .iter()
        .map(|p| {
            let styles: Vec<ColorStyle> = p
                .text_mask()
                .iter()
                .map(|&t| ColorStyle { text: t.then_some(RgbaColor::BLACK), background: RgbaColor::new(128, 128, 128, 255) })
                .collect();
            p.with_styles(&styles)
        })
        .collect::<webcolor::Result<_>>()?;
    for kind in HistogramKind::ALL {
        let real = test_pages.iter().map(|p| histogram(p, kind)).collect::<webcolor::Result<Vec<_>>>()?;
        let other = train_pages.iter().map(|p| histogram(p, kind)).collect::<webcolor::Result<Vec<_>>>()?;
        let flat = grey.iter().map(|p| histogram(p, kind)).collect::<webcolor::Result<Vec<_>>>()?;
        println!(
            "{kind:?}: real vs real {:.4}, real vs constant {:.4}",
            fcd_protocol(&other, &real, 0)?,
            fcd_protocol(&flat, &real, 0)?
        );
    }
    Ok(())
}
