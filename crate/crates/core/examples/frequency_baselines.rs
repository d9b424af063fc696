//! Fits the (tag, property) frequency table and colorizes pages by mode
//! selection and by frequency-weighted sampling.
//!
//! Usage:
//!   cargo run --example frequency_baselines

use webcolor::baselines::{FrequencyTable, Property};
use webcolor::codec::quantize;
use webcolor::corpus::{generate_corpus, CorpusConfig, Grammar};
use webcolor::metrics::{accuracy, color_slots};
use webcolor::models::quantized_styles;
use webcolor::page::RgbaColor;

fn main() -> webcolor::Result<()> {
    for grammar in [Grammar::TagDeterministic, Grammar::ParentConditional] {
        let pages = generate_corpus(&CorpusConfig { n_pages: 100, grammar, seed: 1, ..Default::default() })?;
        let (train_pages, test_pages) = pages.split_at(80);
        let table = FrequencyTable::fit(train_pages)?;
        for (name, sample) in [("mode", false), ("sampling", true)] {
            let mut slots = Vec::new();
            for (i, p) in test_pages.iter().enumerate() {
                let pred = if sample { table.colorize_sampling(p, i as u64)? } else { table.colorize_mode(p)? };
                slots.extend(color_slots(&pred, &quantized_styles(p)?)?);
            }
            let acc = accuracy(&slots)?;
            println!("{grammar:?} / {name}: rgb {:.3}, alpha {:.3}", acc.rgb, acc.alpha);
        }
        let white = quantize(RgbaColor::WHITE);
        println!("  white div backgrounds seen in training: {}", table.count("div", Property::Background, white));
    }
    Ok(())
}
