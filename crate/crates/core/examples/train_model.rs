//! Trains a core model (ar, nar or cvae) at toy scale on a synthetic corpus
//! and reports test accuracy of greedy decoding.
//!
//! Usage:
//!   cargo run --release --example train_model -- [ar|nar|cvae] [iters] [lr]

use webcolor::corpus::{generate_corpus, split, CorpusConfig, Grammar};
use webcolor::metrics::{accuracy, color_slots};
use webcolor::models::{quantized_styles, train, Model, ModelConfig, ModelKind, Strategy, TrainConfig};

fn main() -> webcolor::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind: ModelKind = args.next().as_deref().unwrap_or("nar").parse()?;
    let iters: usize = args.next().map_or(100, |s| s.parse().expect("iters"));
    let lr: f64 = args.next().map_or(1e-3, |s| s.parse().expect("lr"));

    let pages = generate_corpus(&CorpusConfig { n_pages: 120, grammar: Grammar::TagDeterministic, seed: 3, ..Default::default() })?;
    let parts = split(&pages, &[0.8, 0.2], 3)?;
    let (train_pages, test_pages) = (&parts[0], &parts[1]);

    let mut model = Model::new(kind, &ModelConfig::toy(), 0)?;
    let cfg = TrainConfig { iters, batch: 16, lr, ..Default::default() };
    train(model.trainable_mut(), train_pages, &cfg, |s| {
        if s.step % 20 == 0 || s.step + 1 == iters {
            println!("step {:4}: loss {:.4} (recon {:.4}, kl {:.4})", s.step, s.loss, s.recon, s.kl);
        }
    })?;

    let colorizer = model.colorizer().expect("core model");
    let mut slots = Vec::new();
    for p in test_pages {
        let pred = colorizer.colorize(p, Strategy::Greedy, 0)?;
        slots.extend(color_slots(&pred, &quantized_styles(p)?)?);
    }
    let acc = accuracy(&slots)?;
    println!("{kind} test accuracy: rgb {:.3}, alpha {:.3}", acc.rgb, acc.alpha);
    Ok(())
}
