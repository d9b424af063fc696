//! Content embeddings with bottom-up and top-down message passing, and the
//! two ablation switches.
//!
//! Usage:
//!   cargo run --example message_passing

use webcolor::corpus::{generate_corpus, CorpusConfig};
use webcolor::hier::{HierEncoder, HierOptions};
use webcolor::nn::Ctx;
use webcolor::tensor::{Init, ParamStore, Tape};

fn main() -> webcolor::Result<()> {
    let page = generate_corpus(&CorpusConfig { n_pages: 1, max_elements: 12, seed: 4, ..Default::default() })?.remove(0);
    println!("page `{}`: {} elements, depth {}", page.id, page.len(), page.depth());

    for (name, options) in [
        ("default", HierOptions::default()),
        ("no message passing", HierOptions { no_mp: true, no_residual: false }),
        ("no residual", HierOptions { no_mp: false, no_residual: true }),
    ] {
        let mut store = ParamStore::new();
        let encoder = HierEncoder::new(&mut store, &mut Init::new(0), "content", 16, options);
        let tape = Tape::inference();
        let out = encoder.forward(Ctx::new(&tape, &store), &page)?;
        let h_bar = tape.value(out.h_bar).clone();
        let h_c = tape.value(out.h_c).clone();
        let moved: f64 = h_bar.data().iter().zip(h_c.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        println!("{name:>20}: |h_C| = {:.4}, |h_C - h_bar| = {moved:.4}", h_c.frobenius_norm());
    }
    Ok(())
}
