//! Statistics-based colorizers over `(tag, property)` frequency tables.
//!
//! [`FrequencyTable::fit`] tallies the quantized colors seen for every tag
//! and property in the training pages. [`FrequencyTable::colorize_mode`]
//! picks the most frequent color, and [`FrequencyTable::colorize_sampling`]
//! draws one color per `(tag, property)` per page in proportion to the
//! counts. Tags never seen in training fall back to the global table.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{quantize, QuantizedColor, QuantizedStyle};
use crate::metrics::to_canonical_json;
use crate::models::{Colorizer, Strategy};
use crate::page::PageTree;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    Text,
    Background,
}

impl Property {
    pub const ALL: [Property; 2] = [Property::Text, Property::Background];
}

/// Color counts for one property, keyed by quantized color.
pub type Counts = BTreeMap<QuantizedColor, u64>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PropertyCounts {
    pub text: Counts,
    pub background: Counts,
}

impl PropertyCounts {
    pub fn get(&self, p: Property) -> &Counts {
        match p {
            Property::Text => &self.text,
            Property::Background => &self.background,
        }
    }

    fn get_mut(&mut self, p: Property) -> &mut Counts {
        match p {
            Property::Text => &mut self.text,
            Property::Background => &mut self.background,
        }
    }
}

/// Per-tag counts plus their sum across tags.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrequencyTable {
    per_tag: BTreeMap<String, PropertyCounts>,
    global: PropertyCounts,
}

/// The two statistics-based decoding rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatsMode {
    Mode,
    Sampling,
}

impl FromStr for StatsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mode" => Ok(StatsMode::Mode),
            "sample" | "sampling" => Ok(StatsMode::Sampling),
            _ => Err(Error::Contract(format!("unknown statistics rule `{s}`"))),
        }
    }
}

/// The most frequent color; ties go to the smallest `(rgb, alpha)` index.
fn mode_of(counts: &Counts) -> Option<QuantizedColor> {
    // BTreeMap iterates in ascending key order, so a strict `>` keeps the
    // smallest key among equal counts.
    let mut best: Option<(QuantizedColor, u64)> = None;
    for (&c, &n) in counts {
        if n > 0 && best.is_none_or(|(_, m)| n > m) {
            best = Some((c, n));
        }
    }
    best.map(|(c, _)| c)
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tallies quantized ground-truth colors; text only for text elements.
    pub fn fit(pages: &[PageTree]) -> Result<Self> {
        let mut table = FrequencyTable::new();
        for page in pages {
            for (i, el) in page.elements.iter().enumerate() {
                let style = el.style.as_ref().ok_or_else(|| {
                    Error::Data(format!("page `{}`: element {i} has no style", page.id))
                })?;
                let tag = &el.content.tag;
                table.add(tag, Property::Background, quantize(style.background), 1);
                if el.content.has_text() {
                    let text = style.text.ok_or_else(|| {
                        Error::Data(format!("page `{}`: text element {i} has no text color", page.id))
                    })?;
                    table.add(tag, Property::Text, quantize(text), 1);
                }
            }
        }
        Ok(table)
    }

    pub fn add(&mut self, tag: &str, property: Property, color: QuantizedColor, count: u64) {
        *self
            .per_tag
            .entry(tag.to_string())
            .or_default()
            .get_mut(property)
            .entry(color)
            .or_insert(0) += count;
        *self.global.get_mut(property).entry(color).or_insert(0) += count;
    }

    pub fn is_empty(&self) -> bool {
        self.global.text.is_empty() && self.global.background.is_empty()
    }

    pub fn count(&self, tag: &str, property: Property, color: QuantizedColor) -> u64 {
        self.per_tag
            .get(tag)
            .and_then(|c| c.get(property).get(&color))
            .copied()
            .unwrap_or(0)
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.per_tag.keys().map(String::as_str)
    }

    pub fn global(&self) -> &PropertyCounts {
        &self.global
    }

    /// Counts used for `(tag, property)`: the tag's own, or the global table
    /// when the tag never carried that property in training.
    pub fn counts_for(&self, tag: &str, property: Property) -> Result<&Counts> {
        if let Some(c) = self.per_tag.get(tag).map(|c| c.get(property)) {
            if c.values().any(|&n| n > 0) {
                return Ok(c);
            }
        }
        let g = self.global.get(property);
        if g.values().all(|&n| n == 0) {
            let name = match property {
                Property::Text => "text",
                Property::Background => "background",
            };
            return Err(Error::Data(format!("frequency table has no {name} colors")));
        }
        Ok(g)
    }

    fn colorize_with(
        &self,
        page: &PageTree,
        mut choose: impl FnMut(&str, Property, &Counts) -> Result<QuantizedColor>,
    ) -> Result<Vec<QuantizedStyle>> {
        page.elements
            .iter()
            .map(|el| {
                let tag = el.content.tag.as_str();
                let bg = choose(tag, Property::Background, self.counts_for(tag, Property::Background)?)?;
                let text = if el.content.has_text() {
                    Some(choose(tag, Property::Text, self.counts_for(tag, Property::Text)?)?)
                } else {
                    None
                };
                Ok(QuantizedStyle { text, background: bg })
            })
            .collect()
    }

    /// The most frequent color for every element and property.
    pub fn colorize_mode(&self, page: &PageTree) -> Result<Vec<QuantizedStyle>> {
        self.colorize_with(page, |_, _, counts| {
            Ok(mode_of(counts).expect("counts_for never returns an empty table"))
        })
    }

    /// One count-weighted draw per distinct `(tag, property)` on the page,
    /// shared by every matching element.
    pub fn colorize_sampling(&self, page: &PageTree, seed: u64) -> Result<Vec<QuantizedStyle>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut drawn: HashMap<(String, Property), QuantizedColor> = HashMap::new();
        self.colorize_with(page, |tag, property, counts| {
            let key = (tag.to_string(), property);
            if let Some(&c) = drawn.get(&key) {
                return Ok(c);
            }
            let entries: Vec<(QuantizedColor, u64)> = counts.iter().map(|(&c, &n)| (c, n)).collect();
            let &(c, _) = entries
                .choose_weighted(&mut rng, |e| e.1)
                .map_err(|e| Error::Data(format!("cannot sample `{tag}`: {e}")))?;
            drawn.insert(key, c);
            Ok(c)
        })
    }

    pub fn colorize(&self, page: &PageTree, mode: StatsMode, seed: u64) -> Result<Vec<QuantizedStyle>> {
        match mode {
            StatsMode::Mode => self.colorize_mode(page),
            StatsMode::Sampling => self.colorize_sampling(page, seed),
        }
    }

    /// Canonical JSON: tag → property → `[[rgb_index, alpha_index, count]]`,
    /// tags sorted, colors in ascending index order.
    pub fn to_json(&self) -> Result<String> {
        let doc: BTreeMap<&str, BTreeMap<Property, Vec<[u64; 3]>>> = self
            .per_tag
            .iter()
            .map(|(tag, pc)| {
                let props = Property::ALL
                    .iter()
                    .map(|&p| {
                        let rows = pc
                            .get(p)
                            .iter()
                            .map(|(c, &n)| [c.rgb_index() as u64, c.alpha_index() as u64, n])
                            .collect();
                        (p, rows)
                    })
                    .collect();
                (tag.as_str(), props)
            })
            .collect();
        to_canonical_json(&doc)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: BTreeMap<String, BTreeMap<Property, Vec<[u64; 3]>>> = serde_json::from_str(s)?;
        let mut table = FrequencyTable::new();
        for (tag, props) in doc {
            table.per_tag.entry(tag.clone()).or_default();
            for (p, rows) in props {
                for [rgb, alpha, n] in rows {
                    let c = QuantizedColor::new(rgb as usize, alpha as usize)
                        .map_err(|e| Error::Schema { field: tag.clone(), message: e.to_string() })?;
                    table.add(&tag, p, c, n);
                }
            }
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Greedy and prior decoding map to the mode; top-p maps to sampling.
impl Colorizer for FrequencyTable {
    fn colorize(&self, page: &PageTree, strategy: Strategy, seed: u64) -> Result<Vec<QuantizedStyle>> {
        match strategy {
            Strategy::Greedy | Strategy::Prior => self.colorize_mode(page),
            Strategy::TopP(_) => self.colorize_sampling(page, seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::page::test_util::el;
    use crate::page::{ColorStyle, RgbaColor};

    fn q(rgb: usize, alpha: usize) -> QuantizedColor {
        QuantizedColor::new(rgb, alpha).unwrap()
    }

    /// A color whose quantization is `q(rgb, alpha)`.
    fn color(c: QuantizedColor) -> RgbaColor {
        RgbaColor::from_channels(c.bins().map(|k| k * 32 + 5))
    }

    fn page_with(id: &str, tags: &[(&str, QuantizedColor)]) -> PageTree {
        let mut elements = vec![el(None, 0, "body", false)];
        for (i, (tag, c)) in tags.iter().enumerate() {
            let mut e = el(Some(0), i as u32, tag, false);
            e.style = Some(ColorStyle { text: None, background: color(*c) });
            elements.push(e);
        }
        PageTree { id: id.into(), elements }
    }

    fn buttons() -> FrequencyTable {
        let p = page_with(
            "b",
            &[("button", q(5, 8)), ("button", q(5, 8)), ("button", q(9, 8)), ("button", q(5, 8))],
        );
        FrequencyTable::fit(&[p]).unwrap()
    }

    #[test]
    fn fit_tallies_quantized_colors() {
        let t = buttons();
        assert_eq!(t.count("button", Property::Background, q(5, 8)), 3);
        assert_eq!(t.count("button", Property::Background, q(9, 8)), 1);
        // body is white on white; el() gives no text to non-text elements
        assert_eq!(t.count("body", Property::Background, q(512, 8)), 1);
        assert!(t.global().text.is_empty());
        assert!(FrequencyTable::fit(&[]).unwrap().is_empty());
    }

    #[test]
    fn global_is_sum_over_tags() {
        let t = buttons();
        for p in Property::ALL {
            let mut sum = Counts::new();
            for tag in t.tags() {
                for (&c, &n) in t.per_tag[tag].get(p) {
                    *sum.entry(c).or_insert(0) += n;
                }
            }
            assert_eq!(&sum, t.global().get(p));
        }
    }

    #[test]
    fn fit_names_unstyled_page() {
        let mut p = page_with("nostyle", &[("a", q(1, 8))]);
        p.elements[1].style = None;
        let err = FrequencyTable::fit(&[p]).unwrap_err().to_string();
        assert!(err.contains("nostyle"), "{err}");
    }

    #[test]
    fn mode_with_fallback_and_ties() {
        let t = buttons();
        let page = page_with("x", &[("button", q(1, 1)), ("video", q(1, 1))]);
        let out = t.colorize_mode(&page).unwrap();
        assert_eq!(out[1].background, q(5, 8));
        // global: (5,8)×3, (9,8)×1, (512,8)×1
        assert_eq!(out[2].background, q(5, 8));
        assert_eq!(t.colorize_mode(&page).unwrap(), out);

        let mut tie = FrequencyTable::new();
        tie.add("a", Property::Background, q(7, 2), 2);
        tie.add("a", Property::Background, q(7, 1), 2);
        tie.add("a", Property::Background, q(3, 8), 1);
        assert_eq!(mode_of(tie.counts_for("a", Property::Background).unwrap()), Some(q(7, 1)));
    }

    #[test]
    fn empty_table_is_an_error() {
        let page = page_with("x", &[("a", q(1, 1))]);
        assert!(FrequencyTable::new().colorize_mode(&page).is_err());
        assert!(FrequencyTable::new().colorize_sampling(&page, 0).is_err());
    }

    #[test]
    fn sampling_shares_color_per_tag() {
        let mut t = FrequencyTable::new();
        for i in 1..=20 {
            t.add("a", Property::Background, q(i, 8), 1);
        }
        let page = page_with("x", &[("a", q(1, 1)), ("div", q(1, 1)), ("a", q(1, 1))]);
        let mut distinct = std::collections::HashSet::new();
        for seed in 0..50 {
            let out = t.colorize_sampling(&page, seed).unwrap();
            assert_eq!(out[1], out[3]);
            assert_eq!(out, t.colorize_sampling(&page, seed).unwrap());
            distinct.insert(out[1].background);
        }
        assert!(distinct.len() > 5);
    }

    #[test]
    fn single_entry_is_certain() {
        let mut t = FrequencyTable::new();
        t.add("a", Property::Background, q(42, 3), 9);
        let page = page_with("x", &[("a", q(1, 1))]);
        for seed in 0..20 {
            assert!(t.colorize_sampling(&page, seed).unwrap().iter().all(|s| s.background == q(42, 3)));
        }
    }

    #[test]
    fn sampling_frequencies_match_counts() {
        let mut t = FrequencyTable::new();
        let weights = [(q(1, 8), 5u64), (q(2, 8), 3), (q(3, 8), 2)];
        for (c, n) in weights {
            t.add("a", Property::Background, c, n);
        }
        let page = page_with("x", &[("a", q(1, 1))]);
        let trials = 10_000;
        let mut hits = BTreeMap::new();
        for seed in 0..trials {
            let c = t.colorize_sampling(&page, seed).unwrap()[1].background;
            *hits.entry(c).or_insert(0u64) += 1;
        }
        for (c, n) in weights {
            let p = n as f64 / 10.0;
            let expected = p * trials as f64;
            let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
            let got = hits.get(&c).copied().unwrap_or(0) as f64;
            assert!((got - expected).abs() <= 3.0 * sigma, "{c:?}: {got} vs {expected}±{sigma}");
        }
    }

    #[test]
    fn json_round_trip() {
        let mut t = buttons();
        t.add("p", Property::Text, q(1, 8), 4);
        let s = t.to_json().unwrap();
        assert!(s.contains("\"button\""));
        let back = FrequencyTable::from_json(&s).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_json().unwrap(), s);
        assert!(FrequencyTable::from_json(r#"{"a":{"text":[[0,1,1]]}}"#).is_err());
    }
}
