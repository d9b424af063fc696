//! Synthetic page corpora with controllable color grammars, splitting, and
//! the on-disk corpus layout.
//!
//! Trees use a weighted tag distribution with container/leaf tags, text on
//! text-bearing tags, and image features on image-like tags. Colors follow
//! one of three grammars:
//!
//! - `tag_deterministic`: each tag has one fixed (text, background) pair.
//! - `parent_conditional`: text color follows the element's own tag, but the
//!   background follows the *parent's* tag, so predicting it requires
//!   hierarchical context.
//! - `noisy(p)`: `tag_deterministic`, with every color independently replaced
//!   by a uniformly random one with probability `p`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::page::{
    page_to_string, read_page, text_features, ColorStyle, ContentFeatures, Element, PageTree, RgbaColor,
    IMAGE_FEATS, MAX_DEPTH, MAX_ELEMENTS,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grammar {
    TagDeterministic,
    ParentConditional,
    Noisy { p: f64 },
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grammar::TagDeterministic => f.write_str("tag_deterministic"),
            Grammar::ParentConditional => f.write_str("parent_conditional"),
            Grammar::Noisy { p } => write!(f, "noisy({p})"),
        }
    }
}

impl FromStr for Grammar {
    type Err = Error;

    /// Accepts `tag_deterministic`, `parent_conditional`, `noisy(p)` and `noisy:p`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Contract(format!(
                "unknown grammar `{s}` (expected tag_deterministic, parent_conditional or noisy(p))"
            ))
        };
        match s {
            "tag_deterministic" => Ok(Grammar::TagDeterministic),
            "parent_conditional" => Ok(Grammar::ParentConditional),
            _ => {
                let rest = s.strip_prefix("noisy").ok_or_else(bad)?;
                let p = rest
                    .strip_prefix('(')
                    .and_then(|r| r.strip_suffix(')'))
                    .or_else(|| rest.strip_prefix(':'))
                    .ok_or_else(bad)?;
                let p: f64 = p.trim().parse().map_err(|_| bad())?;
                Ok(Grammar::Noisy { p })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_pages: usize,
    pub min_elements: usize,
    pub max_elements: usize,
    pub max_depth: usize,
    pub grammar: Grammar,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_pages: 200,
            min_elements: 5,
            max_elements: 40,
            max_depth: 8,
            grammar: Grammar::TagDeterministic,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Contract(m));
        if self.n_pages == 0 {
            return fail("a corpus needs at least one page".into());
        }
        if self.max_elements > MAX_ELEMENTS || self.min_elements == 0 || self.min_elements > self.max_elements {
            return fail(format!(
                "element range {}..={} must lie in 1..={MAX_ELEMENTS}",
                self.min_elements, self.max_elements
            ));
        }
        if self.max_depth == 0 || self.max_depth > MAX_DEPTH {
            return fail(format!("max depth {} must lie in 1..={MAX_DEPTH}", self.max_depth));
        }
        if let Grammar::Noisy { p } = self.grammar {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("noise probability {p} not in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Tags with sampling weights. Container tags may have children.
const TAGS: [(&str, u32, bool); 24] = [
    ("div", 30, true),
    ("span", 10, true),
    ("a", 10, true),
    ("p", 8, true),
    ("li", 6, true),
    ("img", 6, false),
    ("button", 4, true),
    ("ul", 3, true),
    ("section", 3, true),
    ("h1", 1, false),
    ("h2", 2, false),
    ("h3", 2, false),
    ("header", 1, true),
    ("footer", 1, true),
    ("nav", 1, true),
    ("input", 2, false),
    ("form", 1, true),
    ("label", 2, false),
    ("strong", 2, false),
    ("i", 1, false),
    ("svg", 2, false),
    ("figure", 1, true),
    ("small", 1, false),
    ("article", 1, true),
];

const TEXT_TAGS: [&str; 11] = ["a", "p", "span", "button", "li", "h1", "h2", "h3", "label", "strong", "small"];

const WORDS: [&str; 24] = [
    "Home", "Sale", "Shop", "now", "New", "arrivals", "$19.99", "Contact", "us", "FREE", "shipping", "on",
    "orders", "over", "50", "Sign", "in", "Read", "more", "https://example.com", "Menu", "Cart", "2024", "Help",
];

/// Common page colors, weighted towards transparent and light backgrounds.
const BACKGROUNDS: [(RgbaColor, u32); 10] = [
    (RgbaColor::new(0, 0, 0, 0), 30),
    (RgbaColor::new(255, 255, 255, 255), 20),
    (RgbaColor::new(245, 245, 245, 255), 8),
    (RgbaColor::new(33, 37, 41, 255), 5),
    (RgbaColor::new(25, 118, 210, 255), 5),
    (RgbaColor::new(220, 53, 69, 255), 4),
    (RgbaColor::new(40, 167, 69, 255), 4),
    (RgbaColor::new(255, 193, 7, 255), 3),
    (RgbaColor::new(0, 0, 0, 128), 2),
    (RgbaColor::new(232, 240, 254, 255), 3),
];

const TEXT_COLORS: [(RgbaColor, u32); 7] = [
    (RgbaColor::new(0, 0, 0, 255), 20),
    (RgbaColor::new(33, 37, 41, 255), 15),
    (RgbaColor::new(108, 117, 125, 255), 8),
    (RgbaColor::new(255, 255, 255, 255), 6),
    (RgbaColor::new(0, 102, 204, 255), 8),
    (RgbaColor::new(220, 53, 69, 255), 3),
    (RgbaColor::new(0, 0, 0, 222), 3),
];

fn weighted<T: Copy, R: Rng>(items: &[(T, u32)], rng: &mut R) -> T {
    items.choose_weighted(rng, |x| x.1).expect("non-empty weights").0
}

/// Seed-specific color assignments of the grammars.
#[derive(Clone, Debug)]
struct Palette {
    text: BTreeMap<&'static str, RgbaColor>,
    background: BTreeMap<&'static str, RgbaColor>,
    /// Background of children, keyed by the parent's tag.
    child_background: BTreeMap<&'static str, RgbaColor>,
}

impl Palette {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut text = BTreeMap::new();
        let mut background = BTreeMap::new();
        let mut child_background = BTreeMap::new();
        for &(tag, _, _) in TAGS.iter().chain([("body", 0, true)].iter()) {
            text.insert(tag, weighted(&TEXT_COLORS, &mut rng));
            background.insert(tag, weighted(&BACKGROUNDS, &mut rng));
            child_background.insert(tag, BACKGROUNDS[rng.random_range(0..BACKGROUNDS.len())].0);
        }
        Palette {
            text,
            background,
            child_background,
        }
    }
}

fn random_color<R: Rng>(rng: &mut R) -> RgbaColor {
    RgbaColor::new(rng.random(), rng.random(), rng.random(), rng.random())
}

fn image_features<R: Rng>(rng: &mut R, svg: bool) -> [f64; IMAGE_FEATS] {
    let w = f64::from(rng.random_range(16u32..=360));
    let h = f64::from(rng.random_range(16u32..=360));
    let mut f = [0.0; IMAGE_FEATS];
    f[0] = w;
    f[1] = h;
    f[2] = if svg { 4.0 } else { 3.0 };
    f[3] = w / h;
    for k in 0..4 {
        f[4 + k] = rng.random_range(0.0..255.0);
        f[8 + k] = rng.random_range(0.0..80.0);
    }
    f[12] = if svg { 1.0 } else { 0.0 };
    f
}

fn sample_text<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(1..=6);
    (0..n).map(|_| *WORDS.choose(rng).expect("words")).collect::<Vec<_>>().join(" ")
}

/// One page; colors follow `grammar` with the given palette.
fn generate_page(cfg: &CorpusConfig, palette: &Palette, index: usize) -> PageTree {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let n = rng.random_range(cfg.min_elements..=cfg.max_elements);
    let tag_weights: Vec<(usize, u32)> = TAGS.iter().enumerate().map(|(i, t)| (i, t.1)).collect();
    let mut tags: Vec<&'static str> = vec!["body"];
    let mut parents: Vec<Option<usize>> = vec![None];
    let mut depth = vec![1usize];
    let mut child_count = vec![0u32];
    let mut container = vec![true];
    // open path from the root to the latest element
    let mut path = vec![0usize];
    for i in 1..n {
        // prefer staying deep, with occasional returns towards the root
        let mut keep = if rng.random_bool(0.6) {
            path.len()
        } else {
            rng.random_range(1..=path.len())
        };
        while keep > 1 && (!container[path[keep - 1]] || depth[path[keep - 1]] >= cfg.max_depth) {
            keep -= 1;
        }
        path.truncate(keep);
        let parent = path[keep - 1];
        let t = TAGS[weighted(&tag_weights, &mut rng)];
        tags.push(t.0);
        parents.push(Some(parent));
        depth.push(depth[parent] + 1);
        child_count.push(0);
        container.push(t.2 && depth[parent] + 1 < cfg.max_depth);
        path.push(i);
    }
    let mut elements = Vec::with_capacity(n);
    for i in 0..n {
        let order = parents[i].map_or(0, |p| {
            child_count[p] += 1;
            child_count[p] - 1
        });
        let tag = tags[i];
        let mut content = ContentFeatures::new(order, tag);
        let has_text = match tag {
            t if TEXT_TAGS.contains(&t) => rng.random_bool(0.9),
            "div" => rng.random_bool(0.2),
            _ => false,
        };
        if has_text {
            content.text_feats = Some(text_features(&sample_text(&mut rng), rng.random_bool(0.05)));
        }
        if tag == "img" || tag == "svg" {
            content.image_feats = Some(image_features(&mut rng, tag == "svg"));
        }
        if matches!(tag, "div" | "section" | "header") && rng.random_bool(0.05) {
            content.bg_image_feats = Some(image_features(&mut rng, false));
        }
        let text = palette.text[tag];
        let background = match (cfg.grammar, parents[i]) {
            (Grammar::ParentConditional, Some(p)) => palette.child_background[tags[p]],
            _ => palette.background[tag],
        };
        let mut style = ColorStyle {
            text: has_text.then_some(text),
            background,
        };
        if let Grammar::Noisy { p } = cfg.grammar {
            if rng.random_bool(p) {
                style.background = random_color(&mut rng);
            }
            if style.text.is_some() && rng.random_bool(p) {
                style.text = Some(random_color(&mut rng));
            }
        }
        elements.push(Element {
            parent: parents[i],
            content,
            style: Some(style),
        });
    }
    PageTree {
        id: format!("page-{index:05}"),
        elements,
    }
}

/// Generates `cfg.n_pages` valid, styled pages. Page `i` depends only on
/// the seed and `i`.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Vec<PageTree>> {
    cfg.validate()?;
    let palette = Palette::new(cfg.seed);
    let pages: Vec<PageTree> = (0..cfg.n_pages).map(|i| generate_page(cfg, &palette, i)).collect();
    for p in &pages {
        p.ensure_valid()?;
    }
    Ok(pages)
}

/// Seeded shuffle then contiguous partition by `ratios` (which must sum to 1).
pub fn split(pages: &[PageTree], ratios: &[f64], seed: u64) -> Result<Vec<Vec<PageTree>>> {
    if ratios.is_empty() || ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let mut order: Vec<usize> = (0..pages.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
    let n = pages.len() as f64;
    let mut out = Vec::with_capacity(ratios.len());
    let mut cum = 0.0;
    let mut start = 0;
    for (k, r) in ratios.iter().enumerate() {
        cum += r;
        let end = if k + 1 == ratios.len() {
            pages.len()
        } else {
            (cum * n).round() as usize
        };
        if end <= start {
            return Err(Error::Data(format!(
                "split {k} of {} pages with ratios {ratios:?} is empty",
                pages.len()
            )));
        }
        out.push(order[start..end].iter().map(|&i| pages[i].clone()).collect());
        start = end;
    }
    Ok(out)
}

/// Element-count and depth summary of a set of pages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pages: usize,
    pub mean_elements: f64,
    pub max_elements: usize,
    pub mean_depth: f64,
    pub max_depth: usize,
    pub text_fraction: f64,
}

pub fn corpus_stats(pages: &[PageTree]) -> CorpusStats {
    let n = pages.len().max(1) as f64;
    let elements: usize = pages.iter().map(|p| p.len()).sum();
    let texts: usize = pages.iter().map(|p| p.text_mask().iter().filter(|&&t| t).count()).sum();
    CorpusStats {
        pages: pages.len(),
        mean_elements: elements as f64 / n,
        max_elements: pages.iter().map(|p| p.len()).max().unwrap_or(0),
        mean_depth: pages.iter().map(|p| p.depth() as f64).sum::<f64>() / n,
        max_depth: pages.iter().map(|p| p.depth()).max().unwrap_or(0),
        text_fraction: texts as f64 / elements.max(1) as f64,
    }
}

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

/// Default train/val/test ratios.
pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config: CorpusConfig,
    pub ratios: Vec<f64>,
    pub seed: u64,
    pub counts: BTreeMap<String, usize>,
    /// SHA-256 over the canonical page files of each split, in id order.
    pub hashes: BTreeMap<String, String>,
    pub stats: CorpusStats,
}

/// SHA-256 (hex) of the canonical serializations of `pages`, sorted by id.
pub fn pages_hash(pages: &[PageTree]) -> Result<String> {
    let mut sorted: Vec<&PageTree> = pages.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut h = Sha256::new();
    for p in sorted {
        h.update(page_to_string(p)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

/// Writes every page as `<dir>/<id>.json`.
pub fn write_pages(dir: impl AsRef<Path>, pages: &[PageTree]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for p in pages {
        fs::write(dir.join(format!("{}.json", p.id)), page_to_string(p)?)?;
    }
    Ok(())
}

/// Reads every `*.json` page in `dir`, ordered by file name.
pub fn read_pages(dir: impl AsRef<Path>) -> Result<Vec<PageTree>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(read_page).collect()
}

/// Generates, splits and writes a corpus under `out`:
/// `out/{train,val,test}/<id>.json` plus `out/manifest.json`.
pub fn write_corpus(out: impl AsRef<Path>, cfg: &CorpusConfig, ratios: &[f64; 3]) -> Result<Manifest> {
    let out = out.as_ref();
    let pages = generate_corpus(cfg)?;
    let parts = split(&pages, ratios, cfg.seed)?;
    let mut counts = BTreeMap::new();
    let mut hashes = BTreeMap::new();
    for (name, part) in SPLITS.iter().zip(&parts) {
        let dir = out.join(name);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        write_pages(&dir, part)?;
        counts.insert(name.to_string(), part.len());
        hashes.insert(name.to_string(), pages_hash(part)?);
    }
    let manifest = Manifest {
        config: cfg.clone(),
        ratios: ratios.to_vec(),
        seed: cfg.seed,
        counts,
        hashes,
        stats: corpus_stats(&pages),
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(out.join("manifest.json"), json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::quantize_style;

    fn cfg(grammar: Grammar) -> CorpusConfig {
        CorpusConfig {
            n_pages: 30,
            grammar,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_valid() {
        let a = generate_corpus(&cfg(Grammar::TagDeterministic)).unwrap();
        let b = generate_corpus(&cfg(Grammar::TagDeterministic)).unwrap();
        assert_eq!(a, b);
        assert_eq!(pages_hash(&a).unwrap(), pages_hash(&b).unwrap());
        for p in &a {
            assert!(p.validate().is_empty());
            assert!((5..=40).contains(&p.len()));
            assert!(p.depth() <= 8);
        }
        let c = generate_corpus(&CorpusConfig { seed: 12, ..cfg(Grammar::TagDeterministic) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn deep_configuration_respects_caps() {
        let pages = generate_corpus(&CorpusConfig {
            n_pages: 10,
            min_elements: 150,
            max_elements: 200,
            max_depth: 30,
            ..cfg(Grammar::ParentConditional)
        })
        .unwrap();
        for p in &pages {
            assert!(p.validate().is_empty());
            assert!(p.depth() <= 30);
        }
    }

    #[test]
    fn tag_deterministic_colors_follow_tags() {
        let pages = generate_corpus(&cfg(Grammar::TagDeterministic)).unwrap();
        let mut seen: BTreeMap<String, crate::codec::QuantizedStyle> = BTreeMap::new();
        for p in &pages {
            for e in &p.elements {
                let q = quantize_style(&e.style.unwrap());
                let key = e.content.tag.clone();
                let prev = seen.entry(key).or_insert(q);
                assert_eq!(prev.background, q.background);
                if let (Some(a), Some(b)) = (prev.text, q.text) {
                    assert_eq!(a, b);
                }
            }
        }
    }

    /// Conditional mutual information I(child bg; parent tag | child tag),
    /// estimated from count tables.
    fn cmi(pages: &[PageTree]) -> f64 {
        let mut joint: BTreeMap<(String, String, u16), f64> = BTreeMap::new();
        for p in pages {
            for e in &p.elements {
                if let Some(par) = e.parent {
                    let bg = quantize_style(&e.style.unwrap()).background.rgb_index() as u16;
                    *joint
                        .entry((e.content.tag.clone(), p.elements[par].content.tag.clone(), bg))
                        .or_default() += 1.0;
                }
            }
        }
        let total: f64 = joint.values().sum();
        let marg = |f: &dyn Fn(&(String, String, u16)) -> String| {
            let mut m: BTreeMap<String, f64> = BTreeMap::new();
            for (k, v) in &joint {
                *m.entry(f(k)).or_default() += v;
            }
            m
        };
        let z = marg(&|k| k.0.clone());
        let zp = marg(&|k| format!("{}|{}", k.0, k.1));
        let zb = marg(&|k| format!("{}|{}", k.0, k.2));
        joint
            .iter()
            .map(|(k, &c)| {
                let pz = z[&k.0];
                let pzp = zp[&format!("{}|{}", k.0, k.1)];
                let pzb = zb[&format!("{}|{}", k.0, k.2)];
                c / total * (c * pz / (pzp * pzb)).ln()
            })
            .sum()
    }

    #[test]
    fn parent_conditional_carries_parent_information() {
        let cond = generate_corpus(&cfg(Grammar::ParentConditional)).unwrap();
        let det = generate_corpus(&cfg(Grammar::TagDeterministic)).unwrap();
        assert!(cmi(&cond) > 0.1, "{}", cmi(&cond));
        assert!(cmi(&det).abs() < 1e-12);
    }

    #[test]
    fn noisy_flips_some_colors() {
        let clean = generate_corpus(&cfg(Grammar::TagDeterministic)).unwrap();
        let noisy = generate_corpus(&cfg(Grammar::Noisy { p: 0.3 })).unwrap();
        let changed = clean
            .iter()
            .zip(&noisy)
            .flat_map(|(a, b)| a.elements.iter().zip(&b.elements))
            .filter(|(x, y)| x.style != y.style)
            .count();
        assert!(changed > 0);
    }

    #[test]
    fn grammar_parsing() {
        assert_eq!("noisy(0.2)".parse::<Grammar>().unwrap(), Grammar::Noisy { p: 0.2 });
        assert_eq!("noisy:0.5".parse::<Grammar>().unwrap(), Grammar::Noisy { p: 0.5 });
        assert!("noisy".parse::<Grammar>().is_err());
        assert!(CorpusConfig { grammar: Grammar::Noisy { p: 1.5 }, ..Default::default() }.validate().is_err());
        assert!(CorpusConfig { max_elements: 201, ..Default::default() }.validate().is_err());
        assert!(CorpusConfig { max_depth: 31, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn split_nine_to_one() {
        let pages = generate_corpus(&CorpusConfig { n_pages: 100, ..cfg(Grammar::TagDeterministic) }).unwrap();
        let parts = split(&pages, &[0.9, 0.1], 3).unwrap();
        assert_eq!((parts[0].len(), parts[1].len()), (90, 10));
        let mut ids: Vec<&str> = parts.iter().flatten().map(|p| p.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 100);
        assert_eq!(parts, split(&pages, &[0.9, 0.1], 3).unwrap());
        assert!(split(&pages[..1], &[0.5, 0.5], 3).is_err());
        assert!(split(&pages, &[0.5, 0.6], 3).is_err());
    }

    #[test]
    fn corpus_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(Grammar::ParentConditional);
        let m = write_corpus(dir.path(), &c, &DEFAULT_RATIOS).unwrap();
        assert_eq!(m.counts.values().sum::<usize>(), 30);
        let train = read_pages(dir.path().join("train")).unwrap();
        assert_eq!(train.len(), m.counts["train"]);
        assert_eq!(pages_hash(&train).unwrap(), m.hashes["train"]);
    }
}
