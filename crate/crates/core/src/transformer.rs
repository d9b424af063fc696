//! Pre-LN Transformer stacks.
//!
//! Each block normalizes before every sub-layer and adds the sub-layer output
//! back to the residual stream; the stack ends with a final layer norm.
//! Decoder blocks add a cross-attention sub-layer over an encoded memory.

use serde::{Deserialize, Serialize};

use crate::nn::{Ctx, LayerNorm, Linear};
use crate::tensor::{Init, ParamStore, Tensor, Var};
use crate::{Error, Result};

const MASKED: f64 = -1e30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ffn: usize,
    /// Kept for completeness; always 0 here.
    pub dropout: f64,
    pub causal: bool,
    pub cross_attention: bool,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            d_model: 256,
            n_heads: 8,
            n_layers: 4,
            d_ffn: 512,
            dropout: 0.0,
            causal: false,
            cross_attention: false,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Contract(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.d_ffn == 0 {
            return Err(Error::Contract("n_layers and d_ffn must be positive".into()));
        }
        if self.dropout != 0.0 {
            return Err(Error::Contract("dropout is not supported".into()));
        }
        Ok(())
    }

    /// Same sizes as an encoder, with causal self-attention and cross-attention.
    pub fn decoder(&self) -> Self {
        TransformerConfig {
            causal: true,
            cross_attention: true,
            ..self.clone()
        }
    }
}

/// Sinusoidal table: `pe[p, 2i] = sin(p / 10000^(2i/d))`,
/// `pe[p, 2i+1] = cos(p / 10000^(2i/d))`.
pub fn positional_encoding(n: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, d]);
    for p in 0..n {
        let row = t.row_mut(p);
        for i in 0..d {
            let freq = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = p as f64 / freq;
            row[i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    t
}

/// Additive mask with `MASKED` above the diagonal.
pub fn causal_mask(n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i + 1..n {
            t.row_mut(i)[j] = MASKED;
        }
    }
    t
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    n_heads: usize,
    d_model: usize,
}

/// Attention output plus the per-head weight matrices.
pub struct Attended {
    pub output: Var,
    pub weights: Vec<Var>,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, d: usize, n_heads: usize) -> Self {
        MultiHeadAttention {
            q: Linear::new(store, init, &format!("{name}.q"), d, d),
            k: Linear::new(store, init, &format!("{name}.k"), d, d),
            v: Linear::new(store, init, &format!("{name}.v"), d, d),
            out: Linear::new(store, init, &format!("{name}.out"), d, d),
            n_heads,
            d_model: d,
        }
    }

    /// Queries from `x` attend over keys/values from `kv`. `mask` is added to
    /// the `|x| × |kv|` scores before the softmax.
    pub fn forward(&self, ctx: Ctx, x: Var, kv: Var, mask: Option<Var>) -> Result<Attended> {
        let t = ctx.tape;
        let q = self.q.forward(ctx, x)?;
        let k = self.k.forward(ctx, kv)?;
        let v = self.v.forward(ctx, kv)?;
        let dh = self.d_model / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.n_heads);
        let mut weights = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let (qh, kh, vh) = if self.n_heads == 1 {
                (q, k, v)
            } else {
                (t.slice_cols(q, lo, hi)?, t.slice_cols(k, lo, hi)?, t.slice_cols(v, lo, hi)?)
            };
            let scores = t.matmul_nt(qh, kh)?;
            let mut scores = t.scale(scores, scale);
            if let Some(m) = mask {
                scores = t.add(scores, m)?;
            }
            let w = t.softmax(scores)?;
            heads.push(t.matmul(w, vh)?);
            weights.push(w);
        }
        let merged = if heads.len() == 1 {
            heads[0]
        } else {
            t.concat_cols(&heads)?
        };
        Ok(Attended {
            output: self.out.forward(ctx, merged)?,
            weights,
        })
    }
}

#[derive(Clone, Debug)]
struct Block {
    ln_self: LayerNorm,
    self_attn: MultiHeadAttention,
    cross: Option<(LayerNorm, MultiHeadAttention)>,
    ln_ff: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

/// A stack of pre-LN blocks (encoder, or decoder when cross-attention is on).
#[derive(Clone, Debug)]
pub struct Transformer {
    config: TransformerConfig,
    blocks: Vec<Block>,
    final_ln: LayerNorm,
}

impl Transformer {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, config: &TransformerConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let blocks = (0..config.n_layers)
            .map(|l| {
                let p = format!("{name}.layer{l}");
                Block {
                    ln_self: LayerNorm::new(store, &format!("{p}.ln_self"), d),
                    self_attn: MultiHeadAttention::new(store, init, &format!("{p}.self_attn"), d, config.n_heads),
                    cross: config.cross_attention.then(|| {
                        (
                            LayerNorm::new(store, &format!("{p}.ln_cross"), d),
                            MultiHeadAttention::new(store, init, &format!("{p}.cross_attn"), d, config.n_heads),
                        )
                    }),
                    ln_ff: LayerNorm::new(store, &format!("{p}.ln_ff"), d),
                    ff1: Linear::new(store, init, &format!("{p}.ff1"), d, config.d_ffn),
                    ff2: Linear::new(store, init, &format!("{p}.ff2"), config.d_ffn, d),
                }
            })
            .collect();
        Ok(Transformer {
            config: config.clone(),
            blocks,
            final_ln: LayerNorm::new(store, &format!("{name}.ln_final"), d),
        })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    fn check_input(&self, ctx: Ctx, x: Var) -> Result<usize> {
        let shape = ctx.tape.shape(x);
        if shape.len() != 2 || shape[1] != self.config.d_model || shape[0] == 0 {
            return Err(Error::shape(
                "transformer",
                format!("input {shape:?} for d_model {}", self.config.d_model),
            ));
        }
        Ok(shape[0])
    }

    /// Self-attention stack over `inputs` (`N × d_model`).
    pub fn encode(&self, ctx: Ctx, inputs: Var) -> Result<Var> {
        Ok(self.run(ctx, inputs, None)?.0)
    }

    /// Decoder stack: (causal) self-attention over `targets`, cross-attention
    /// to `memory`.
    pub fn decode(&self, ctx: Ctx, targets: Var, memory: Option<Var>) -> Result<Var> {
        Ok(self.run(ctx, targets, memory)?.0)
    }

    /// Forward pass that also returns every attention weight matrix.
    pub fn run(&self, ctx: Ctx, x: Var, memory: Option<Var>) -> Result<(Var, Vec<Var>)> {
        let n = self.check_input(ctx, x)?;
        let t = ctx.tape;
        let memory = match (self.config.cross_attention, memory) {
            (true, None) => {
                return Err(Error::Contract("cross-attention needs a memory input".into()));
            }
            (true, Some(m)) => {
                self.check_input(ctx, m)?;
                Some(m)
            }
            (false, _) => None,
        };
        let mask = (self.config.causal && n > 1).then(|| t.constant(causal_mask(n)));
        let mut weights = Vec::new();
        let mut h = x;
        for b in &self.blocks {
            let normed = b.ln_self.forward(ctx, h)?;
            let a = b.self_attn.forward(ctx, normed, normed, mask)?;
            weights.extend(a.weights);
            h = t.add(h, a.output)?;
            if let (Some((ln, attn)), Some(mem)) = (&b.cross, memory) {
                let normed = ln.forward(ctx, h)?;
                let a = attn.forward(ctx, normed, mem, None)?;
                weights.extend(a.weights);
                h = t.add(h, a.output)?;
            }
            let normed = b.ln_ff.forward(ctx, h)?;
            let f = b.ff1.forward(ctx, normed)?;
            let f = t.relu(f);
            let f = b.ff2.forward(ctx, f)?;
            h = t.add(h, f)?;
        }
        Ok((self.final_ln.forward(ctx, h)?, weights))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(causal: bool, cross: bool, d: usize) -> TransformerConfig {
        TransformerConfig {
            d_model: d,
            n_heads: 2,
            n_layers: 1,
            d_ffn: 2 * d,
            dropout: 0.0,
            causal,
            cross_attention: cross,
        }
    }

    fn rand_input(seed: u64, n: usize, d: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn encode_preserves_shape() {
        let mut store = ParamStore::new();
        let enc = Transformer::new(&mut store, &mut Init::new(0), "enc", &toy(false, false, 32)).unwrap();
        let tape = Tape::new();
        let ctx = Ctx::new(&tape, &store);
        let x = tape.constant(rand_input(1, 5, 32));
        let y = enc.encode(ctx, x).unwrap();
        assert_eq!(tape.shape(y), vec![5, 32]);
        let bad = tape.constant(rand_input(1, 5, 16));
        assert!(matches!(enc.encode(ctx, bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_weights_pass_residual_through() {
        let mut store = ParamStore::new();
        let enc = Transformer::new(&mut store, &mut Init::new(0), "enc", &toy(false, false, 8)).unwrap();
        for name in ["q.", "k.", "v.", "out.", "ff1.", "ff2."] {
            let ids: Vec<_> = store.ids().filter(|&i| store.name(i).contains(name)).collect();
            for id in ids {
                store.value_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let tape = Tape::new();
        let ctx = Ctx::new(&tape, &store);
        let input = rand_input(3, 1, 8);
        let x = tape.constant(input.clone());
        let y = enc.encode(ctx, x).unwrap();
        let g = tape.constant(Tensor::full(&[1, 8], 1.0));
        let b = tape.constant(Tensor::zeros(&[1, 8]));
        let expected = tape.layer_norm(x, g, b).unwrap();
        assert_eq!(*tape.value(y), *tape.value(expected));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut store = ParamStore::new();
        let dec = Transformer::new(&mut store, &mut Init::new(2), "dec", &toy(true, true, 8)).unwrap();
        let tape = Tape::new();
        let ctx = Ctx::new(&tape, &store);
        let x = tape.constant(rand_input(4, 4, 8));
        let mem = tape.constant(rand_input(5, 1, 8));
        let (_, weights) = dec.run(ctx, x, Some(mem)).unwrap();
        assert_eq!(weights.len(), 4);
        for w in weights {
            let w = tape.value(w);
            for r in 0..w.rows() {
                assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            // single memory vector: every position attends to it fully
            if w.cols() == 1 {
                assert!(w.data().iter().all(|&x| (x - 1.0).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn decoder_requires_memory() {
        let mut store = ParamStore::new();
        let dec = Transformer::new(&mut store, &mut Init::new(2), "dec", &toy(true, true, 8)).unwrap();
        let tape = Tape::new();
        let x = tape.constant(rand_input(4, 2, 8));
        assert!(matches!(
            dec.decode(Ctx::new(&tape, &store), x, None),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn causal_decoder_ignores_future_targets() {
        let mut store = ParamStore::new();
        let dec = Transformer::new(&mut store, &mut Init::new(2), "dec", &toy(true, true, 8)).unwrap();
        let tape = Tape::new();
        let ctx = Ctx::new(&tape, &store);
        let x = tape.variable(rand_input(4, 3, 8));
        let mem = tape.constant(rand_input(5, 2, 8));
        let y = dec.decode(ctx, x, Some(mem)).unwrap();
        let row0 = tape.gather_rows(y, &[0]).unwrap();
        let l = tape.sum(row0);
        let g = tape.backward(l).unwrap();
        let gx = g.get(x).unwrap();
        assert!(gx.row(0).iter().any(|&v| v != 0.0));
        assert!(gx.row(1).iter().chain(gx.row(2)).all(|&v| v == 0.0));
    }

    #[test]
    fn permutation_equivariance() {
        let mut store = ParamStore::new();
        let enc = Transformer::new(&mut store, &mut Init::new(9), "enc", &toy(false, false, 8)).unwrap();
        let input = rand_input(7, 4, 8);
        let pe = positional_encoding(4, 8);
        let perm = [2usize, 0, 3, 1];
        let run = |rows: &[usize]| {
            let tape = Tape::new();
            let ctx = Ctx::new(&tape, &store);
            let x = tape.constant(input.clone());
            let p = tape.constant(pe.clone());
            let x = tape.gather_rows(x, rows).unwrap();
            let p = tape.gather_rows(p, rows).unwrap();
            let s = tape.add(x, p).unwrap();
            let y = enc.encode(ctx, s).unwrap();
            let v = tape.value(y).clone();
            v
        };
        let base = run(&[0, 1, 2, 3]);
        let permuted = run(&perm);
        for (i, &src) in perm.iter().enumerate() {
            for (a, b) in permuted.row(i).iter().zip(base.row(src)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn positional_table() {
        let t = positional_encoding(200, 16);
        for i in 0..16 {
            assert_eq!(t.at(0, i), if i % 2 == 0 { 0.0 } else { 1.0 });
        }
        let short = positional_encoding(10, 16);
        assert_eq!(short.data(), &t.data()[..10 * 16]);
        for a in 0..200 {
            for b in a + 1..200 {
                assert_ne!(t.row(a), t.row(b));
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut c = TransformerConfig::default();
        assert!(c.validate().is_ok());
        c.n_heads = 7;
        assert!(c.validate().is_err());
    }
}
