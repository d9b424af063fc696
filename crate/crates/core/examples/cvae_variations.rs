//! Trains a toy CVAE on a noisy corpus, then draws latent codes from the
//! prior to produce several distinct stylings of one page and keeps the
//! most diverse ones.
//!
//! Usage:
//!   cargo run --release --example cvae_variations -- [iters]

use std::collections::HashSet;

use webcolor::corpus::{generate_corpus, CorpusConfig, Grammar};
use webcolor::models::{train, Colorizer, Cvae, ModelConfig, Strategy, TrainConfig};
use webcolor::pipeline::{generate_variations, variation_seeds, Finisher};

fn main() -> webcolor::Result<()> {
    let iters: usize = std::env::args().nth(1).map_or(100, |s| s.parse().expect("iters"));
    let pages = generate_corpus(&CorpusConfig { n_pages: 80, grammar: Grammar::Noisy { p: 0.2 }, seed: 5, ..Default::default() })?;
    let (train_pages, test_pages) = pages.split_at(70);

    let mut cvae = Cvae::new(&ModelConfig::toy(), 0)?;
    let cfg = TrainConfig { iters, batch: 16, lr: 1e-3, ..Default::default() };
    let history = train(&mut cvae, train_pages, &cfg, |_| {})?;
    let (first, last) = (history[0], history[history.len() - 1]);
    println!("recon {:.3} -> {:.3}, kl {:.3} -> {:.3}", first.recon, last.recon, first.kl, last.kl);

    let page = &test_pages[0];
    let distinct: HashSet<_> = (0..20).map(|s| cvae.colorize(page, Strategy::Prior, s)).collect::<webcolor::Result<_>>()?;
    println!("page `{}` ({} elements): {} distinct stylings from 20 prior draws", page.id, page.len(), distinct.len());

    let seeds = variation_seeds(9, 0, 20);
    let picked = generate_variations(&cvae, Finisher::BinCenters, page, Strategy::Prior, 20, 3, &seeds)?;
    for (i, p) in picked.iter().enumerate() {
        println!("variation {i}: root background {:?}", p.elements[0].style.unwrap().background.channels());
    }
    Ok(())
}
