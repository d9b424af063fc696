//! Trains the upsampler to recover full-resolution colors from quantized
//! styles, and checks that every output stays in its input bin.
//!
//! Usage:
//!   cargo run --release --example upsample -- [iters]

use webcolor::codec::{bin_center_style, quantize_style};
use webcolor::corpus::{generate_corpus, CorpusConfig, Grammar};
use webcolor::models::{quantized_styles, train, ModelConfig, TrainConfig};
use webcolor::upsampler::Upsampler;

fn channel_error(a: &[webcolor::page::ColorStyle], b: &[webcolor::page::ColorStyle]) -> f64 {
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .flat_map(|(x, y)| x.background.channels().into_iter().zip(y.background.channels()))
        .map(|(p, q)| (f64::from(p) - f64::from(q)).abs())
        .collect();
    diffs.iter().sum::<f64>() / diffs.len() as f64
}

fn main() -> webcolor::Result<()> {
    let iters: usize = std::env::args().nth(1).map_or(100, |s| s.parse().expect("iters"));
    let pages = generate_corpus(&CorpusConfig { n_pages: 60, grammar: Grammar::TagDeterministic, seed: 2, ..Default::default() })?;
    let (train_pages, test_pages) = pages.split_at(50);
    let mut up = Upsampler::new(&ModelConfig::toy(), 0)?;
    let cfg = TrainConfig { iters, batch: 16, lr: 1e-3, ..Default::default() };
    let history = train(&mut up, train_pages, &cfg, |_| {})?;
    println!("mse {:.4} -> {:.4}", history[0].loss, history[history.len() - 1].loss);

    let (mut learned, mut centers) = (0.0, 0.0);
    for page in test_pages {
        let truth = page.styles()?;
        let q = quantized_styles(page)?;
        let out = up.apply(page, &q)?;
        assert!(out.iter().zip(&q).all(|(s, q)| quantize_style(s).background == q.background));
        learned += channel_error(&out, &truth);
        centers += channel_error(&q.iter().map(bin_center_style).collect::<Vec<_>>(), &truth);
    }
    let n = test_pages.len() as f64;
    println!("mean |channel error| on test backgrounds: upsampler {:.2}, bin centers {:.2}", learned / n, centers / n);
    Ok(())
}
