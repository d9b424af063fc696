//! Generates a seeded synthetic corpus under each color grammar and prints
//! its statistics and split sizes.
//!
//! Usage:
//!   cargo run --example synthetic_corpus -- [out_dir]

use webcolor::corpus::{corpus_stats, generate_corpus, pages_hash, write_corpus, CorpusConfig, Grammar, DEFAULT_RATIOS};

fn main() -> webcolor::Result<()> {
    for grammar in [Grammar::TagDeterministic, Grammar::ParentConditional, Grammar::Noisy { p: 0.2 }] {
        let cfg = CorpusConfig { n_pages: 50, grammar, seed: 7, ..Default::default() };
        let pages = generate_corpus(&cfg)?;
        let s = corpus_stats(&pages);
        println!(
            "{grammar:?}: {} pages, {:.1} elements/page (max {}), depth {:.1} (max {}), text {:.0}%, hash {}",
            s.pages,
            s.mean_elements,
            s.max_elements,
            s.mean_depth,
            s.max_depth,
            100.0 * s.text_fraction,
            &pages_hash(&pages)?[..12]
        );
    }
    if let Some(out) = std::env::args().nth(1) {
        let m = write_corpus(&out, &CorpusConfig::default(), &DEFAULT_RATIOS)?;
        println!("wrote {out}: {:?}", m.counts);
    }
    Ok(())
}
