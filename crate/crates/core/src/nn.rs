//! Parameterized layers shared by the models.

use crate::tensor::{Init, ParamId, ParamStore, Tape, Tensor, Var};
use crate::Result;

/// A tape paired with the parameter values it reads.
#[derive(Clone, Copy)]
pub struct Ctx<'a> {
    pub tape: &'a Tape,
    pub store: &'a ParamStore,
}

impl<'a> Ctx<'a> {
    pub fn new(tape: &'a Tape, store: &'a ParamStore) -> Self {
        Ctx { tape, store }
    }

    pub fn p(&self, id: ParamId) -> Var {
        self.tape.param(self.store, id)
    }
}

/// `x · W + b` with `W: in × out`. Biases start at zero.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), init.linear_weight(fan_in, fan_out));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[1, fan_out]));
        Linear {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, ctx: Ctx, x: Var) -> Result<Var> {
        let h = ctx.tape.matmul(x, ctx.p(self.weight))?;
        ctx.tape.add_row(h, ctx.p(self.bias))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gain: store.add(format!("{name}.gain"), Tensor::full(&[1, dim], 1.0)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[1, dim])),
        }
    }

    pub fn forward(&self, ctx: Ctx, x: Var) -> Result<Var> {
        ctx.tape.layer_norm(x, ctx.p(self.gain), ctx.p(self.bias))
    }
}

/// Two linear layers with a ReLU between them.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        fan_in: usize,
        hidden: usize,
        fan_out: usize,
    ) -> Self {
        Mlp {
            l1: Linear::new(store, init, &format!("{name}.l1"), fan_in, hidden),
            l2: Linear::new(store, init, &format!("{name}.l2"), hidden, fan_out),
        }
    }

    pub fn forward(&self, ctx: Ctx, x: Var) -> Result<Var> {
        let h = self.l1.forward(ctx, x)?;
        let h = ctx.tape.relu(h);
        self.l2.forward(ctx, h)
    }
}

/// Learnable lookup table of `rows × dim`.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub rows: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, rows: usize, dim: usize) -> Self {
        Embedding {
            table: store.add(format!("{name}.table"), init.normal(rows, dim)),
            rows,
        }
    }

    pub fn forward(&self, ctx: Ctx, idx: &[usize]) -> Result<Var> {
        ctx.tape.embedding(ctx.p(self.table), idx)
    }
}
