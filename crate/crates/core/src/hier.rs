//! Content embedding and hierarchical message passing.
//!
//! Each element's content groups (sibling order, tag, text, image and
//! background-image features) are embedded separately and max-pooled into
//! `h̄_C`. A bottom-up pass then summarizes subtrees:
//!
//! - leaf: `h_up = MLP_up(h̄_C ⊕ h_leaf)`
//! - internal: `h_up = max_c MLP_up(h̄_C ⊕ h_up(c))` over children `c`
//!
//! and a top-down pass spreads context from the root:
//!
//! - root: `h_down = MLP_down(h_up ⊕ h_root)`
//! - other: `h_down = MLP_down(h_up ⊕ h_down(parent))`
//!
//! The output is `h_C = h̄_C + h_down`. Both passes are batched per tree
//! level, so each MLP runs once per level rather than once per element.

use serde::{Deserialize, Serialize};

use crate::nn::{Ctx, Embedding, Linear, Mlp};
use crate::page::{PageTree, IMAGE_FEATS, TEXT_FEATS, VOCAB_SIZE};
use crate::page::tag_index;
use crate::tensor::{Init, ParamId, ParamStore, Tensor, Var};
use crate::{Error, Result};

/// Size of the sibling-order lookup; larger orders share the last row.
pub const ORDER_SLOTS: usize = 64;

/// Ablation switches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierOptions {
    /// Skip message passing: `h_C = h̄_C`.
    pub no_mp: bool,
    /// Drop the residual connection: `h_C = h_down`.
    pub no_residual: bool,
}

#[derive(Clone, Debug)]
pub struct HierEncoder {
    d: usize,
    order: Embedding,
    tag: Embedding,
    text: Linear,
    image: Linear,
    bg_image: Linear,
    mlp_up: Mlp,
    mlp_down: Mlp,
    h_leaf: ParamId,
    h_root: ParamId,
    pub options: HierOptions,
}

/// Per-element embeddings, each `N × d`. `h_up`/`h_down` are absent when
/// message passing is disabled.
#[derive(Clone, Copy, Debug)]
pub struct ContentEmbeddings {
    pub h_bar: Var,
    pub h_up: Option<Var>,
    pub h_down: Option<Var>,
    pub h_c: Var,
}

/// Signed `ln(1 + |x|)`, keeping counts and pixel sizes in a usable range.
fn squash(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

fn feature_matrix<const K: usize>(rows: impl Iterator<Item = Option<[f64; K]>>) -> Tensor {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        match r {
            Some(v) => data.extend(v.iter().map(|&x| squash(x))),
            None => data.extend([0.0; K]),
        }
        n += 1;
    }
    Tensor::matrix(n, K, data).expect("sized")
}

/// Groups of element indices by a level key, in ascending key order.
fn levels(keys: &[usize]) -> Vec<Vec<usize>> {
    let max = keys.iter().copied().max().unwrap_or(0);
    let mut out = vec![Vec::new(); max + 1];
    for (i, &k) in keys.iter().enumerate() {
        out[k].push(i);
    }
    out.retain(|l| !l.is_empty());
    out
}

/// Rows computed in chunks, addressable by element index.
struct Chunked {
    chunks: Vec<Var>,
    loc: Vec<usize>,
    rows: usize,
}

impl Chunked {
    fn new(n: usize) -> Self {
        Chunked {
            chunks: Vec::new(),
            loc: vec![usize::MAX; n],
            rows: 0,
        }
    }

    fn push(&mut self, chunk: Var, elements: &[usize]) {
        for (k, &e) in elements.iter().enumerate() {
            self.loc[e] = self.rows + k;
        }
        self.rows += elements.len();
        self.chunks.push(chunk);
    }

    fn all(&self, ctx: Ctx) -> Result<Var> {
        if self.chunks.len() == 1 {
            Ok(self.chunks[0])
        } else {
            ctx.tape.concat_rows(&self.chunks)
        }
    }

    fn gather(&self, ctx: Ctx, elements: &[usize]) -> Result<Var> {
        let idx: Vec<usize> = elements.iter().map(|&e| self.loc[e]).collect();
        debug_assert!(idx.iter().all(|&i| i != usize::MAX));
        ctx.tape.gather_rows(self.all(ctx)?, &idx)
    }
}

impl HierEncoder {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, d: usize, options: HierOptions) -> Self {
        HierEncoder {
            d,
            order: Embedding::new(store, init, &format!("{name}.order"), ORDER_SLOTS, d),
            tag: Embedding::new(store, init, &format!("{name}.tag"), VOCAB_SIZE, d),
            text: Linear::new(store, init, &format!("{name}.text"), TEXT_FEATS, d),
            image: Linear::new(store, init, &format!("{name}.image"), IMAGE_FEATS, d),
            bg_image: Linear::new(store, init, &format!("{name}.bg_image"), IMAGE_FEATS, d),
            mlp_up: Mlp::new(store, init, &format!("{name}.mlp_up"), 2 * d, d, d),
            mlp_down: Mlp::new(store, init, &format!("{name}.mlp_down"), 2 * d, d, d),
            h_leaf: store.add(format!("{name}.h_leaf"), init.normal(1, d)),
            h_root: store.add(format!("{name}.h_root"), init.normal(1, d)),
            options,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `h̄_C` for every element: max over the five content embeddings.
    pub fn embed_content(&self, ctx: Ctx, tree: &PageTree) -> Result<Var> {
        let els = &tree.elements;
        let orders: Vec<usize> = els
            .iter()
            .map(|e| (e.content.order as usize).min(ORDER_SLOTS - 1))
            .collect();
        let tags: Vec<usize> = els.iter().map(|e| tag_index(&e.content.tag)).collect();
        let t = ctx.tape;
        let text = t.constant(feature_matrix(els.iter().map(|e| e.content.text_feats)));
        let image = t.constant(feature_matrix(els.iter().map(|e| e.content.image_feats)));
        let bg = t.constant(feature_matrix(els.iter().map(|e| e.content.bg_image_feats)));
        let parts = [
            self.order.forward(ctx, &orders)?,
            self.tag.forward(ctx, &tags)?,
            self.text.forward(ctx, text)?,
            self.image.forward(ctx, image)?,
            self.bg_image.forward(ctx, bg)?,
        ];
        t.max_of(&parts)
    }

    /// Bottom-up then top-down passes over `h_bar`.
    pub fn message_pass(&self, ctx: Ctx, tree: &PageTree, h_bar: Var) -> Result<(Var, Var)> {
        tree.ensure_valid()?;
        let n = tree.len();
        if ctx.tape.shape(h_bar) != [n, self.d] {
            return Err(Error::shape(
                "message_pass",
                format!("h_bar {:?} for {n} elements of dim {}", ctx.tape.shape(h_bar), self.d),
            ));
        }
        let t = ctx.tape;
        let children = tree.children();

        let mut height = vec![0usize; n];
        for i in (1..n).rev() {
            let p = tree.elements[i].parent.expect("validated");
            height[p] = height[p].max(height[i] + 1);
        }
        let mut up = Chunked::new(n);
        for level in levels(&height) {
            let chunk = if height[level[0]] == 0 {
                let hb = t.gather_rows(h_bar, &level)?;
                let leaf = t.gather_rows(ctx.p(self.h_leaf), &vec![0; level.len()])?;
                let x = t.concat_cols(&[hb, leaf])?;
                self.mlp_up.forward(ctx, x)?
            } else {
                // one row per (parent, child) edge, pooled per parent
                let mut parents = Vec::new();
                let mut kids = Vec::new();
                let mut groups = Vec::with_capacity(level.len());
                for &p in &level {
                    let start = kids.len();
                    for &c in &children[p] {
                        parents.push(p);
                        kids.push(c);
                    }
                    groups.push((start..kids.len()).collect::<Vec<_>>());
                }
                let hb = t.gather_rows(h_bar, &parents)?;
                let hc = up.gather(ctx, &kids)?;
                let x = t.concat_cols(&[hb, hc])?;
                let m = self.mlp_up.forward(ctx, x)?;
                t.segment_max(m, &groups)?
            };
            up.push(chunk, &level);
        }
        let all: Vec<usize> = (0..n).collect();
        let h_up = up.gather(ctx, &all)?;

        let depth = tree.element_depths();
        let mut down = Chunked::new(n);
        for level in levels(&depth) {
            let hu = t.gather_rows(h_up, &level)?;
            let context = if level == [0] {
                ctx.p(self.h_root)
            } else {
                let parents: Vec<usize> = level
                    .iter()
                    .map(|&i| tree.elements[i].parent.expect("non-root"))
                    .collect();
                down.gather(ctx, &parents)?
            };
            let x = t.concat_cols(&[hu, context])?;
            let chunk = self.mlp_down.forward(ctx, x)?;
            down.push(chunk, &level);
        }
        let h_down = down.gather(ctx, &all)?;
        Ok((h_up, h_down))
    }

    /// Full content encoder honoring the ablation switches.
    pub fn forward(&self, ctx: Ctx, tree: &PageTree) -> Result<ContentEmbeddings> {
        let h_bar = self.embed_content(ctx, tree)?;
        if self.options.no_mp {
            return Ok(ContentEmbeddings {
                h_bar,
                h_up: None,
                h_down: None,
                h_c: h_bar,
            });
        }
        let (h_up, h_down) = self.message_pass(ctx, tree, h_bar)?;
        let h_c = if self.options.no_residual {
            h_down
        } else {
            ctx.tape.add(h_bar, h_down)?
        };
        Ok(ContentEmbeddings {
            h_bar,
            h_up: Some(h_up),
            h_down: Some(h_down),
            h_c,
        })
    }
}
