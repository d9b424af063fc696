//! Runs a small pre-LN Transformer encoder and a causal decoder with
//! cross-attention over random inputs, and shows that decoder outputs at
//! one position ignore later positions.
//!
//! Usage:
//!   cargo run --example transformer_encode

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use webcolor::nn::Ctx;
use webcolor::tensor::{Init, ParamStore, Tape, Tensor};
use webcolor::transformer::{positional_encoding, Transformer, TransformerConfig};

fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn main() -> webcolor::Result<()> {
    let cfg = TransformerConfig { d_model: 16, n_heads: 4, n_layers: 2, d_ffn: 32, ..Default::default() };
    let mut store = ParamStore::new();
    let mut init = Init::new(1);
    let encoder = Transformer::new(&mut store, &mut init, "enc", &cfg)?;
    let decoder = Transformer::new(&mut store, &mut init, "dec", &cfg.decoder())?;
    println!("{} parameters", store.num_scalars());

    let inputs = random(5, 16, 2);
    let targets = random(4, 16, 3);
    let run = |targets: &Tensor| -> webcolor::Result<Tensor> {
        let tape = Tape::inference();
        let ctx = Ctx::new(&tape, &store);
        let memory = encoder.encode(ctx, tape.constant(inputs.clone()))?;
        let x = tape.add(tape.constant(targets.clone()), tape.constant(positional_encoding(targets.rows(), 16)))?;
        let out = decoder.decode(ctx, x, Some(memory))?;
        let v = tape.value(out).clone();
        Ok(v)
    };
    let base = run(&targets)?;
    let mut changed = targets.clone();
    changed.row_mut(2).iter_mut().enumerate().for_each(|(i, v)| *v += i as f64 * 0.1);
    let after = run(&changed)?;
    for r in 0..4 {
        let diff: f64 = base.row(r).iter().zip(after.row(r)).map(|(a, b)| (a - b).abs()).sum();
        println!("position {r}: output change {diff:.3e}");
    }
    Ok(())
}
