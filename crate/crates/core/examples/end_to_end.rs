//! The whole pipeline on disk: corpus, core model and upsampler training,
//! checkpoint round trip, diverse generation, evaluation and previews.
//!
//! Usage:
//!   cargo run --release --example end_to_end -- [work_dir]

use std::path::PathBuf;

use webcolor::corpus::{read_pages, write_corpus, CorpusConfig, Grammar, DEFAULT_RATIOS};
use webcolor::metrics::{evaluate, to_canonical_json};
use webcolor::models::{train, ModelBundle, ModelConfig, ModelKind, Strategy, TrainConfig};
use webcolor::page::write_page;
use webcolor::pipeline::{generate_variations, variation_seeds, Finisher};
use webcolor::render::{render_page, write_png};

fn main() -> webcolor::Result<()> {
    let work: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("webcolor-demo"), PathBuf::from);
    let corpus_cfg = CorpusConfig { n_pages: 100, grammar: Grammar::ParentConditional, seed: 7, ..Default::default() };
    let manifest = write_corpus(work.join("corpus"), &corpus_cfg, &DEFAULT_RATIOS)?;
    println!("corpus: {:?}", manifest.counts);
    let train_pages = read_pages(work.join("corpus/train"))?;
    let test_pages = read_pages(work.join("corpus/test"))?;

    let cfg = TrainConfig { iters: 80, batch: 16, lr: 1e-3, ..Default::default() };
    for kind in [ModelKind::Nar, ModelKind::Upsampler] {
        let mut bundle = ModelBundle::new(kind, &ModelConfig::toy(), 0)?;
        let h = train(bundle.model.trainable_mut(), &train_pages, &cfg, |_| {})?;
        bundle.step = cfg.iters as u64;
        bundle.save(work.join(format!("{kind}.ckpt")))?;
        println!("{kind}: loss {:.4} -> {:.4}", h[0].loss, h[h.len() - 1].loss);
    }
    let nar = ModelBundle::load(work.join("nar.ckpt"))?;
    let up = ModelBundle::load(work.join("upsampler.ckpt"))?;
    let colorizer = nar.model.colorizer().expect("core model");
    let finisher = Finisher::Upsampler(up.model.upsampler().expect("upsampler"));

    let generated = work.join("generated");
    let previews = work.join("previews");
    std::fs::create_dir_all(&generated)?;
    std::fs::create_dir_all(&previews)?;
    let mut best = Vec::new();
    for (i, page) in test_pages.iter().enumerate() {
        let seeds = variation_seeds(1, i, 6);
        let picked = generate_variations(colorizer, finisher, page, Strategy::TopP(0.9), 6, 2, &seeds)?;
        for (j, p) in picked.iter().enumerate() {
            write_page(generated.join(format!("{}.{j}.json", p.id)), p)?;
            write_png(previews.join(format!("{}.{j}.png", p.id)), &render_page(p)?)?;
        }
        best.push(picked.into_iter().next().expect("two picked"));
    }
    print!("{}", to_canonical_json(&evaluate(&best, &test_pages, 0)?)?);
    println!("outputs under {}", work.display());
    Ok(())
}
