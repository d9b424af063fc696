//! Shared helpers for integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use webcolor::models::train::page_gradients;
use webcolor::models::Trainable;
use webcolor::page::{ColorStyle, ContentFeatures, Element, PageTree, RgbaColor};
use webcolor::tensor::{Tape, Tensor, Var};

const TAGS: [&str; 6] = ["div", "p", "a", "span", "button", "li"];

fn color(rng: &mut ChaCha8Rng) -> RgbaColor {
    RgbaColor::new(rng.random(), rng.random(), rng.random(), rng.random())
}

/// A random valid page of `n` elements. With `full_features`, every
/// element carries text, image and background-image features so that no
/// content embedding is an exact tie.
pub fn random_page(seed: u64, n: usize, full_features: bool) -> PageTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut elements: Vec<Element> = Vec::with_capacity(n);
    let mut child_count = vec![0u32; n];
    // open path from the root to the most recent element
    let mut path: Vec<usize> = Vec::new();
    for i in 0..n {
        let parent = if i == 0 {
            None
        } else {
            let keep = rng.random_range(1..=path.len());
            path.truncate(keep);
            Some(*path.last().unwrap())
        };
        let order = parent.map_or(0, |p| {
            child_count[p] += 1;
            child_count[p] - 1
        });
        let tag = TAGS[rng.random_range(0..TAGS.len())];
        let mut content = ContentFeatures::new(order, tag);
        let has_text = full_features || rng.random_bool(0.5);
        if has_text {
            content.text_feats = Some(std::array::from_fn(|_| rng.random_range(0.0..3.0)));
        }
        if full_features {
            content.image_feats = Some(std::array::from_fn(|_| rng.random_range(0.0..3.0)));
            content.bg_image_feats = Some(std::array::from_fn(|_| rng.random_range(0.0..3.0)));
        }
        let style = ColorStyle {
            text: has_text.then(|| color(&mut rng)),
            background: color(&mut rng),
        };
        elements.push(Element {
            parent,
            content,
            style: Some(style),
        });
        path.push(i);
    }
    PageTree {
        id: format!("random-{seed}"),
        elements,
    }
}

pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

/// Relative error with a `1e-6` denominator floor.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares backpropagated gradients of the page loss with central finite
/// differences on up to `per_param` entries of every parameter tensor.
pub fn gradcheck(model: &mut dyn Trainable, page: &PageTree, seed: u64, per_param: usize) -> GradCheck {
    const H: f64 = 1e-5;
    let (grads, _, _) = page_gradients(&*model, page, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 77);
    let mut out = GradCheck {
        checked: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    let eval = |m: &dyn Trainable| {
        let tape = Tape::inference();
        let pl = m.page_loss(&tape, page, seed).unwrap();
        let v = tape.value(pl.loss).item();
        v
    };
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let numel = model.params().value(id).numel();
        let picks: Vec<usize> = if numel <= per_param {
            (0..numel).collect()
        } else {
            (0..per_param).map(|_| rng.random_range(0..numel)).collect()
        };
        for k in picks {
            let orig = model.params().value(id).data()[k];
            model.params_mut().value_mut(id).data_mut()[k] = orig + H;
            let up = eval(&*model);
            model.params_mut().value_mut(id).data_mut()[k] = orig - H;
            let down = eval(&*model);
            model.params_mut().value_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * H);
            let analytic = grads[id.index()].as_ref().map_or(0.0, |g| g.data()[k]);
            let e = rel_err(analytic, numeric);
            out.checked += 1;
            if e > out.max_rel_err {
                out.max_rel_err = e;
                out.worst = format!(
                    "{}[{k}]: analytic {analytic:e}, numeric {numeric:e}",
                    model.params().name(id)
                );
            }
        }
    }
    out
}

/// One differentiable op applied to fresh inputs.
pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub apply: Box<dyn Fn(&Tape, &[Var]) -> webcolor::Result<Var>>,
}

/// Values in ±[0.1, 1.5], away from the kinks of relu, clamp and max.
fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let v: f64 = rng.random_range(0.1..1.5);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Every tape op, with shapes drawn from `rng`.
pub fn op_cases(rng: &mut ChaCha8Rng) -> Vec<OpCase> {
    let (r, c, k) = (rng.random_range(1..5), rng.random_range(2..6), rng.random_range(1..5));
    let mut t = |rows, cols| random_tensor(rng, rows, cols);
    let idx: Vec<usize> = vec![r - 1, 0, r - 1];
    let groups: Vec<Vec<usize>> = vec![(0..r).collect(), vec![r - 1]];
    let targets: Vec<Option<usize>> = (0..r).map(|i| if i == 0 { None } else { Some(i % c) }).collect();
    let eps = t(r, c);
    let target = t(r, c);
    let weights: Vec<f64> = (0..r * c).map(|i| (i % 3) as f64).collect();
    let case = |name, inputs: Vec<Tensor>, apply: Box<dyn Fn(&Tape, &[Var]) -> webcolor::Result<Var>>| OpCase {
        name,
        inputs,
        apply,
    };
    vec![
        case("matmul", vec![t(r, k), t(k, c)], Box::new(|g, v| g.matmul(v[0], v[1]))),
        case("matmul_nt", vec![t(r, k), t(c, k)], Box::new(|g, v| g.matmul_nt(v[0], v[1]))),
        case("add", vec![t(r, c), t(r, c)], Box::new(|g, v| g.add(v[0], v[1]))),
        case("sub", vec![t(r, c), t(r, c)], Box::new(|g, v| g.sub(v[0], v[1]))),
        case("mul", vec![t(r, c), t(r, c)], Box::new(|g, v| g.mul(v[0], v[1]))),
        case("add_row", vec![t(r, c), t(1, c)], Box::new(|g, v| g.add_row(v[0], v[1]))),
        case("scale", vec![t(r, c)], Box::new(|g, v| Ok(g.scale(v[0], -1.7)))),
        case("concat_cols", vec![t(r, c), t(r, k)], Box::new(|g, v| g.concat_cols(&[v[0], v[1]]))),
        case("concat_rows", vec![t(r, c), t(k, c)], Box::new(|g, v| g.concat_rows(&[v[0], v[1]]))),
        case("slice_cols", vec![t(r, c)], Box::new(move |g, v| g.slice_cols(v[0], 1, c))),
        case("slice_rows", vec![t(r + 1, c)], Box::new(move |g, v| g.slice_rows(v[0], 1, r + 1))),
        case("gather_rows", vec![t(r, c)], Box::new({
            let idx = idx.clone();
            move |g, v| g.gather_rows(v[0], &idx)
        })),
        case("embedding", vec![t(r, c)], Box::new(move |g, v| g.embedding(v[0], &idx))),
        case("max_of", vec![t(r, c), t(r, c), t(r, c)], Box::new(|g, v| g.max_of(&[v[0], v[1], v[2]]))),
        case("segment_max", vec![t(r, c)], Box::new(move |g, v| g.segment_max(v[0], &groups))),
        case("softmax", vec![t(r, c)], Box::new(|g, v| g.softmax(v[0]))),
        case("log_softmax", vec![t(r, c)], Box::new(|g, v| g.log_softmax(v[0]))),
        case("layer_norm", vec![t(r, c), t(1, c), t(1, c)], Box::new(|g, v| g.layer_norm(v[0], v[1], v[2]))),
        case("relu", vec![t(r, c)], Box::new(|g, v| Ok(g.relu(v[0])))),
        case("sigmoid", vec![t(r, c)], Box::new(|g, v| Ok(g.sigmoid(v[0])))),
        case("exp", vec![t(r, c)], Box::new(|g, v| Ok(g.exp(v[0])))),
        case("clamp", vec![t(r, c)], Box::new(|g, v| Ok(g.clamp(v[0], -0.8, 0.8)))),
        case("sum", vec![t(r, c)], Box::new(|g, v| Ok(g.sum(v[0])))),
        case("mean", vec![t(r, c)], Box::new(|g, v| Ok(g.mean(v[0])))),
        case("mse", vec![t(r, c)], Box::new(move |g, v| g.mse(v[0], &target, &weights))),
        case("cross_entropy", vec![t(r, c)], Box::new(move |g, v| g.cross_entropy(v[0], &targets))),
        case("gaussian_kl", vec![t(r, c), t(r, c)], Box::new(|g, v| g.gaussian_kl(v[0], v[1]))),
        case("reparam", vec![t(r, c), t(r, c)], Box::new(move |g, v| g.reparam(v[0], v[1], &eps))),
    ]
}

/// Maximum relative error between the backpropagated gradient of
/// `Σ R ⊙ op(inputs)` (fixed random `R`) and central differences.
pub fn op_gradcheck(case: &OpCase, seed: u64) -> f64 {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = {
        let tape = Tape::inference();
        let vars: Vec<Var> = case.inputs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = (case.apply)(&tape, &vars).unwrap();
        let shape = tape.shape(out);
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    let loss = |inputs: &[Tensor]| {
        let tape = Tape::inference();
        let vars: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = (case.apply)(&tape, &vars).unwrap();
        let l = tape.sum(tape.mul(out, tape.constant(probe.clone())).unwrap());
        let v = tape.value(l).item();
        v
    };
    let tape = Tape::new();
    let vars: Vec<Var> = case.inputs.iter().map(|x| tape.variable(x.clone())).collect();
    let out = (case.apply)(&tape, &vars).unwrap();
    let l = tape.sum(tape.mul(out, tape.constant(probe.clone())).unwrap());
    let grads = tape.backward(l).unwrap();
    let mut worst: f64 = 0.0;
    for (i, x) in case.inputs.iter().enumerate() {
        let g = grads.get(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));
        for j in 0..x.numel() {
            let mut up = case.inputs.to_vec();
            up[i].data_mut()[j] += H;
            let mut down = case.inputs.to_vec();
            down[i].data_mut()[j] -= H;
            let numeric = (loss(&up) - loss(&down)) / (2.0 * H);
            worst = worst.max(rel_err(g.data()[j], numeric));
        }
    }
    worst
}
