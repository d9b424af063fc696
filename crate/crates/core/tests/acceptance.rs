//! Acceptance checks. Prints one `criterion N [PASS|FAIL]` line per check.
//!
//! The process exits 0 after reporting, so a failing criterion is visible
//! without breaking `cargo test`. Set `ACCEPTANCE_STRICT=1` to exit 1 when
//! any criterion fails.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use webcolor::baselines::FrequencyTable;
use webcolor::codec::{gt_proportions, quantize, reconstruct, reconstruct_style, BinProportions, QuantizedColor, QuantizedStyle};
use webcolor::corpus::{generate_corpus, split, CorpusConfig, Grammar};
use webcolor::metrics::fcd::{fcd_protocol, frechet_distance, histogram, GaussianStats, HistogramKind};
use webcolor::metrics::{accuracy, aggregate_contrast, audit_page, contrast_ratio, page_slots};
use webcolor::models::diverse::select_from_distances;
use webcolor::models::train::evaluate_loss;
use webcolor::models::{quantized_styles, train, Ar, Colorizer, Cvae, ModelConfig, Nar, Strategy, TrainConfig, Trainable};
use webcolor::page::{ColorStyle, ContentFeatures, Element, PageTree, RgbaColor, TEXT_FEATS};
use webcolor::tensor::Tensor;
use webcolor::upsampler::Upsampler;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn corpus(grammar: Grammar, n_pages: usize, seed: u64) -> (Vec<PageTree>, Vec<PageTree>) {
    let pages = generate_corpus(&CorpusConfig {
        n_pages,
        grammar,
        seed,
        ..Default::default()
    })
    .unwrap();
    let test = n_pages / 5;
    let frac = test as f64 / n_pages as f64;
    let mut parts = split(&pages, &[1.0 - frac, frac], seed).unwrap();
    let test = parts.pop().unwrap();
    (parts.pop().unwrap(), test)
}

fn greedy_accuracy(model: &dyn Colorizer, pages: &[PageTree]) -> (f64, f64) {
    let pred: Vec<PageTree> = pages
        .iter()
        .map(|p| {
            let q = model.colorize(p, Strategy::Greedy, 0).unwrap();
            let styles: Vec<ColorStyle> = q.iter().map(webcolor::codec::bin_center_style).collect();
            p.with_styles(&styles).unwrap()
        })
        .collect();
    let acc = accuracy(&page_slots(&pred, pages).unwrap()).unwrap();
    (acc.rgb, acc.alpha)
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = (0.0f64, String::new());
    let mut ops = 0;
    for round in 0..5 {
        for case in common::op_cases(&mut rng) {
            let e = common::op_gradcheck(&case, round);
            ops += 1;
            if e > worst.0 {
                worst = (e, case.name.to_string());
            }
        }
    }
    let tiny = ModelConfig::tiny();
    let mut models: Vec<(&str, Box<dyn Trainable>)> = vec![
        ("ar", Box::new(Ar::new(&tiny, 1).unwrap())),
        ("nar", Box::new(Nar::new(&tiny, 2).unwrap())),
        ("cvae", Box::new(Cvae::new(&tiny, 3).unwrap())),
        ("upsampler", Box::new(Upsampler::new(&tiny, 4).unwrap())),
    ];
    let mut entries = 0;
    for (name, model) in models.iter_mut() {
        for (seed, n) in [(1u64, 1usize), (2, 3), (3, 4)] {
            let r = common::gradcheck(model.as_mut(), &common::random_page(seed, n, true), seed, 12);
            entries += r.checked;
            if r.max_rel_err > worst.0 {
                worst = (r.max_rel_err, format!("{name} N={n} {}", r.worst));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst.0 <= 1e-4 && elapsed < Duration::from_secs(60),
        format!(
            "{ops} op cases, {entries} model entries, max rel err {:.2e} ({}), limit 1e-4 in 60 s",
            worst.0, worst.1
        ),
    )
}

fn nar_learnability() -> Outcome {
    let start = Instant::now();
    let (train_pages, test_pages) = corpus(Grammar::TagDeterministic, 250, 21);
    let mut model = Nar::new(&ModelConfig::toy(), 0).unwrap();
    let cfg = TrainConfig {
        iters: 500,
        batch: 32,
        lr: 1e-4,
        ..Default::default()
    };
    train(&mut model, &train_pages, &cfg, |_| {}).unwrap();
    let (rgb, alpha) = greedy_accuracy(&model, &test_pages);
    let elapsed = start.elapsed();
    outcome(
        rgb >= 0.95 && alpha >= 0.95 && elapsed < Duration::from_secs(300),
        format!("test rgb {rgb:.4}, alpha {alpha:.4} (need ≥ 0.95 each, under 5 min)"),
    )
}

fn message_passing_ablation() -> Outcome {
    let start = Instant::now();
    let mut diffs = Vec::new();
    for seed in 0..3u64 {
        let (train_pages, test_pages) = corpus(Grammar::ParentConditional, 250, 31 + seed);
        let cfg = TrainConfig {
            iters: 300,
            batch: 32,
            lr: 1e-3,
            seed,
            ..Default::default()
        };
        let mut scores = [0.0; 2];
        for (score, no_mp) in scores.iter_mut().zip([false, true]) {
            let mut config = ModelConfig::toy();
            config.hier.no_mp = no_mp;
            let mut model = Nar::new(&config, seed).unwrap();
            train(&mut model, &train_pages, &cfg, |_| {}).unwrap();
            *score = greedy_accuracy(&model, &test_pages).0;
        }
        diffs.push((scores[0], scores[1]));
    }
    let mut gaps: Vec<f64> = diffs.iter().map(|(a, b)| a - b).collect();
    gaps.sort_by(f64::total_cmp);
    let median = gaps[1];
    let elapsed = start.elapsed();
    let runs: Vec<String> = diffs.iter().map(|(a, b)| format!("{a:.3}/{b:.3}")).collect();
    outcome(
        median >= 0.05 && elapsed < Duration::from_secs(600),
        format!(
            "rgb with/without message passing {}, median gap {median:.3} (need ≥ 0.05, under 10 min)",
            runs.join(", ")
        ),
    )
}

fn cvae_behaviour() -> Outcome {
    let (train_pages, test_pages) = corpus(Grammar::Noisy { p: 0.2 }, 250, 41);
    let mut model = Cvae::new(&ModelConfig::toy(), 0).unwrap();
    let before = evaluate_loss(&model, &test_pages, 0).unwrap().recon;
    let cfg = TrainConfig {
        iters: 500,
        batch: 32,
        lr: 1e-4,
        ..Default::default()
    };
    let history = train(&mut model, &train_pages, &cfg, |_| {}).unwrap();
    let after = evaluate_loss(&model, &test_pages, 0).unwrap().recon;
    let min_kl = history.iter().map(|s| s.kl).fold(f64::INFINITY, f64::min);
    let diverse = test_pages
        .iter()
        .filter(|p| {
            let stylings: HashSet<Vec<QuantizedStyle>> = (0..20)
                .map(|seed| model.colorize(p, Strategy::Prior, seed).unwrap())
                .collect();
            stylings.len() >= 2
        })
        .count();
    let drop = 1.0 - after / before;
    let frac = diverse as f64 / test_pages.len() as f64;
    outcome(
        drop >= 0.3 && min_kl >= 0.0 && frac >= 0.8,
        format!(
            "recon {before:.3} -> {after:.3} ({:.1}% drop, need ≥ 30%), min batch KL {min_kl:.3e}, \
             {diverse}/{} test pages with ≥ 2 prior stylings",
            100.0 * drop,
            test_pages.len()
        ),
    )
}

fn codec_exactness() -> Outcome {
    let mut sweep_failures = 0;
    for channel in 0..4 {
        for v in 0..=255u8 {
            let mut c = [0u8, 85, 170, 255];
            c[channel] = v;
            let color = RgbaColor::from_channels(c);
            if reconstruct(quantize(color), &gt_proportions(color)).color != color {
                sweep_failures += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let prop = |rng: &mut ChaCha8Rng| match rng.random_range(0..10) {
        0 => f64::NAN,
        1 => rng.random_range(-5.0..0.0),
        2 => rng.random_range(1.0..5.0),
        _ => rng.random_range(0.0..=1.0),
    };
    let mut stability_failures = 0;
    let mut cases = 0;
    let random_q = |rng: &mut ChaCha8Rng| QuantizedColor::new(rng.random_range(1..=512), rng.random_range(1..=8)).unwrap();
    while cases < 10_000 {
        let q = QuantizedStyle {
            text: rng.random_bool(0.5).then(|| random_q(&mut rng)),
            background: random_q(&mut rng),
        };
        let props = BinProportions::from_array(std::array::from_fn(|_| prop(&mut rng)));
        let s = reconstruct_style(&q, &props);
        if s.text.map(quantize) != q.text || quantize(s.background) != q.background {
            stability_failures += 1;
        }
        cases += 1;
    }
    let up = Upsampler::new(&ModelConfig::tiny(), 5).unwrap();
    for seed in 0..200 {
        let page = common::random_page(1000 + seed, rng.random_range(1..12), false);
        let q = quantized_styles(&page).unwrap();
        let out = up.apply(&page, &q).unwrap();
        for (a, b) in out.iter().zip(&q) {
            if webcolor::codec::quantize_style(a) != *b {
                stability_failures += 1;
            }
        }
        cases += q.len();
    }
    outcome(
        sweep_failures == 0 && stability_failures == 0,
        format!(
            "1024-value sweep: {sweep_failures} failures; bin stability: {stability_failures} failures in {cases} cases"
        ),
    )
}

fn constant_page(page: &PageTree) -> PageTree {
    let styles: Vec<ColorStyle> = page
        .text_mask()
        .iter()
        .map(|&t| ColorStyle {
            text: t.then_some(RgbaColor::new(40, 40, 40, 255)),
            background: RgbaColor::new(200, 200, 200, 255),
        })
        .collect();
    page.with_styles(&styles).unwrap()
}

fn fcd_correctness() -> Outcome {
    let id3 = Tensor::identity(3);
    let a = GaussianStats {
        mean: vec![0.2, -1.0, 3.0],
        cov: Tensor::matrix(3, 3, vec![2.0, 0.5, 0.0, 0.5, 1.0, 0.1, 0.0, 0.1, 0.7]).unwrap(),
    };
    let same = frechet_distance(&a, &a).unwrap();
    let v = [1.0, -2.0, 0.5];
    let shifted = frechet_distance(
        &GaussianStats { mean: vec![0.0; 3], cov: id3.clone() },
        &GaussianStats { mean: v.to_vec(), cov: id3 },
    )
    .unwrap();
    let norm2: f64 = v.iter().map(|x| x * x).sum();
    let one_dim = frechet_distance(
        &GaussianStats { mean: vec![0.0], cov: Tensor::matrix(1, 1, vec![4.0]).unwrap() },
        &GaussianStats { mean: vec![0.0], cov: Tensor::matrix(1, 1, vec![1.0]).unwrap() },
    )
    .unwrap();
    let closed = same.abs() <= 1e-8 && (shifted - norm2).abs() <= 1e-6 && (one_dim - 1.0).abs() <= 1e-6;

    let real = generate_corpus(&CorpusConfig {
        n_pages: 200,
        grammar: Grammar::Noisy { p: 0.2 },
        seed: 61,
        ..Default::default()
    })
    .unwrap();
    let constant: Vec<PageTree> = real.iter().map(constant_page).collect();
    let mut ordered = true;
    let mut parts = Vec::new();
    for kind in HistogramKind::ALL {
        let r: Vec<_> = real.iter().map(|p| histogram(p, kind).unwrap()).collect();
        let c: Vec<_> = constant.iter().map(|p| histogram(p, kind).unwrap()).collect();
        let rr = fcd_protocol(&r, &r, 7).unwrap();
        let rc = fcd_protocol(&c, &r, 7).unwrap();
        ordered &= rr < 0.1 * rc;
        parts.push(format!("{kind:?} {rr:.4}/{rc:.4}"));
    }
    outcome(
        closed && ordered,
        format!(
            "identical {same:.1e}, shift {shifted:.6} vs {norm2}, 1-dim {one_dim:.6}; real-vs-real/real-vs-constant: {}",
            parts.join(", ")
        ),
    )
}

fn text_page(id: &str, styles: &[(Option<RgbaColor>, RgbaColor)]) -> PageTree {
    let elements = styles
        .iter()
        .enumerate()
        .map(|(i, &(text, background))| {
            let mut content = ContentFeatures::new(if i == 0 { 0 } else { i as u32 - 1 }, if i == 0 { "div" } else { "p" });
            if text.is_some() {
                content.text_feats = Some([1.0; TEXT_FEATS]);
            }
            Element {
                parent: (i > 0).then_some(0),
                content,
                style: Some(ColorStyle { text, background }),
            }
        })
        .collect();
    PageTree {
        id: id.to_string(),
        elements,
    }
}

fn contrast_audit() -> Outcome {
    let (white, black) = (RgbaColor::WHITE, RgbaColor::BLACK);
    let gray = RgbaColor::new(118, 118, 118, 255);
    let bw = contrast_ratio(black, white);
    let gray_ratio = contrast_ratio(gray, white);
    let gray_page = text_page("gray", &[(Some(gray), white)]);
    let gray_pass = gray_ratio >= 4.5 && audit_page(&gray_page).unwrap().is_empty();
    let one = audit_page(&text_page("one", &[(None, white), (Some(white), white)])).unwrap().len();
    let clean = text_page("clean", &[(None, white), (Some(black), white), (Some(black), white)]);
    let three = text_page(
        "three",
        &[(None, white), (Some(white), white), (Some(white), white), (Some(white), white), (Some(black), white)],
    );
    let agg = aggregate_contrast(&[clean, three]).unwrap();
    let pair = (agg.pages_violating_fraction, agg.mean_violating_elements);
    outcome(
        (bw - 21.0).abs() <= 1e-6 && gray_pass && one == 1 && pair == (0.5, 1.5),
        format!(
            "black/white {bw:.6}, (118,118,118)/white {gray_ratio:.4} pass={gray_pass}, \
             white-on-white violations {one}, aggregate {pair:?}"
        ),
    )
}

fn baseline_sanity() -> Outcome {
    let pages = generate_corpus(&CorpusConfig {
        n_pages: 200,
        seed: 71,
        ..Default::default()
    })
    .unwrap();
    let table = FrequencyTable::fit(&pages).unwrap();
    let pred: Vec<PageTree> = pages
        .iter()
        .map(|p| {
            let q = table.colorize_mode(p).unwrap();
            let s: Vec<ColorStyle> = q.iter().map(webcolor::codec::bin_center_style).collect();
            p.with_styles(&s).unwrap()
        })
        .collect();
    let acc = accuracy(&page_slots(&pred, &pages).unwrap()).unwrap();

    let noisy = generate_corpus(&CorpusConfig {
        n_pages: 100,
        grammar: Grammar::Noisy { p: 0.5 },
        seed: 72,
        ..Default::default()
    })
    .unwrap();
    let table = FrequencyTable::fit(&noisy).unwrap();
    let mut inconsistent = 0;
    for (i, page) in noisy.iter().enumerate() {
        let q = table.colorize_sampling(page, i as u64).unwrap();
        let mut seen: BTreeMap<(&str, bool), QuantizedColor> = BTreeMap::new();
        for (el, s) in page.elements.iter().zip(&q) {
            let props = [(false, Some(s.background)), (true, s.text)];
            for (is_text, c) in props {
                let Some(c) = c else { continue };
                if *seen.entry((el.content.tag.as_str(), is_text)).or_insert(c) != c {
                    inconsistent += 1;
                }
            }
        }
    }
    outcome(
        acc.rgb == 1.0 && acc.alpha == 1.0 && inconsistent == 0,
        format!(
            "mode accuracy rgb {}, alpha {}; sampling inconsistencies {inconsistent} over {} pages",
            acc.rgb,
            acc.alpha,
            noisy.len()
        ),
    )
}

fn hash_tree(dir: &Path) -> String {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(dir).unwrap().to_string_lossy().as_bytes());
        h.update(fs::read(&f).unwrap());
    }
    hex::encode(h.finalize())
}

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_webcolor"))
        .args(args)
        .env_remove("WEBCOLOR_SEED")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "webcolor {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn determinism() -> Outcome {
    let runs: Vec<Vec<String>> = (0..2)
        .map(|_| {
            let tmp = tempfile::tempdir().unwrap();
            let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
            run_cli(&["gen-corpus", "--out", &p("corpus"), "--pages", "60", "--max-elements", "20", "--seed", "3"]);
            run_cli(&[
                "train", "--model", "cvae", "--corpus", &p("corpus"), "--out", &p("model.ckpt"), "--iters", "5",
                "--batch", "4", "--preset", "toy", "--seed", "3", "-q",
            ]);
            run_cli(&[
                "generate", "--ckpt", &p("model.ckpt"), "--pages", &p("corpus/test"), "--out", &p("gen"),
                "--strategy", "top-p", "--seed", "3",
            ]);
            run_cli(&[
                "evaluate", "--pred-dir", &p("gen"), "--gt-dir", &p("corpus/test"), "--out", &p("report.json"),
                "--seed", "3",
            ]);
            let file = |s: &str| hex::encode(Sha256::digest(fs::read(tmp.path().join(s)).unwrap()));
            vec![
                hash_tree(&tmp.path().join("corpus")),
                file("model.ckpt"),
                hash_tree(&tmp.path().join("gen")),
                file("report.json"),
            ]
        })
        .collect();
    let names = ["gen-corpus", "train", "generate", "evaluate"];
    let same: Vec<String> = names
        .iter()
        .zip(runs[0].iter().zip(&runs[1]))
        .map(|(n, (a, b))| format!("{n} {}", if a == b { "identical" } else { "DIFFERS" }))
        .collect();
    outcome(runs[0] == runs[1], same.join(", "))
}

fn diverse_selection() -> Outcome {
    let dist = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 2.0], vec![5.0, 2.0, 0.0]];
    let picked = select_from_distances(&dist, 2, 0).unwrap();
    let names: Vec<char> = picked.iter().map(|&i| (b'A' + i as u8) as char).collect();
    let mut set = picked.clone();
    set.sort();
    outcome(set == [0, 2], format!("selected {names:?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient integrity", gradient_integrity),
        ("nar learnability", nar_learnability),
        ("message-passing ablation", message_passing_ablation),
        ("cvae behaviour", cvae_behaviour),
        ("codec exactness", codec_exactness),
        ("fcd correctness", fcd_correctness),
        ("contrast audit", contrast_audit),
        ("baseline sanity", baseline_sanity),
        ("cli determinism", determinism),
        ("diverse selection", diverse_selection),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "criterion {n} [{}] {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} failing");
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
