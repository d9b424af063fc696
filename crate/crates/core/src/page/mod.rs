//! Ordered page trees.
//!
//! Elements are stored in pre-order with a parent index; child lists are
//! derived on demand. A tree is valid when it has exactly one root (the first
//! element), every element appears after its parent on the current ancestor
//! path, siblings carry `order` values `0, 1, 2, …` in storage order, it holds
//! between 1 and [`MAX_ELEMENTS`] elements, and its depth is at most
//! [`MAX_DEPTH`].

mod io;
mod vocab;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use io::{page_from_str, page_to_string, read_page, write_page};
pub use vocab::{tag_index, text_features, TAG_VOCAB, UNK_TAG_INDEX, VOCAB_SIZE};

use crate::{Error, Result};

/// Maximum number of elements on a page.
pub const MAX_ELEMENTS: usize = 200;
/// Maximum tree depth, counted in levels (a lone root has depth 1).
pub const MAX_DEPTH: usize = 30;
/// Arity of the text feature vector.
pub const TEXT_FEATS: usize = 12;
/// Arity of the image and background-image feature vectors.
pub const IMAGE_FEATS: usize = 13;

/// An sRGB color with straight alpha, one byte per channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u8; 4]", into = "[u8; 4]")]
pub struct RgbaColor {
    pub r: u8,
    pub g: u8,
    pub b: u8,
    pub a: u8,
}

impl RgbaColor {
    pub const WHITE: RgbaColor = RgbaColor::new(255, 255, 255, 255);
    pub const BLACK: RgbaColor = RgbaColor::new(0, 0, 0, 255);

    pub const fn new(r: u8, g: u8, b: u8, a: u8) -> Self {
        RgbaColor { r, g, b, a }
    }

    pub fn channels(&self) -> [u8; 4] {
        [self.r, self.g, self.b, self.a]
    }

    pub fn from_channels(c: [u8; 4]) -> Self {
        RgbaColor::new(c[0], c[1], c[2], c[3])
    }
}

impl From<[u8; 4]> for RgbaColor {
    fn from(c: [u8; 4]) -> Self {
        RgbaColor::from_channels(c)
    }
}

impl From<RgbaColor> for [u8; 4] {
    fn from(c: RgbaColor) -> Self {
        c.channels()
    }
}

/// Text and background color of one element. `text` is present exactly when
/// the element has text content.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColorStyle {
    pub text: Option<RgbaColor>,
    pub background: RgbaColor,
}

/// Content information attached to an element.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentFeatures {
    /// Position among siblings.
    pub order: u32,
    pub tag: String,
    /// Lines, words, nine literal indicators and the pseudo-element flag.
    pub text_feats: Option<[f64; TEXT_FEATS]>,
    /// Width, height, channels, aspect ratio, mean RGBA, std RGBA, is-SVG.
    pub image_feats: Option<[f64; IMAGE_FEATS]>,
    pub bg_image_feats: Option<[f64; IMAGE_FEATS]>,
}

impl ContentFeatures {
    pub fn new(order: u32, tag: impl Into<String>) -> Self {
        ContentFeatures {
            order,
            tag: tag.into(),
            text_feats: None,
            image_feats: None,
            bg_image_feats: None,
        }
    }

    pub fn has_text(&self) -> bool {
        self.text_feats.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    pub parent: Option<usize>,
    pub content: ContentFeatures,
    pub style: Option<ColorStyle>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PageTree {
    pub id: String,
    pub elements: Vec<Element>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    Size,
    Root,
    PreOrder,
    Depth,
    SiblingOrder,
    StyleText,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::Size => "size",
            Rule::Root => "root",
            Rule::PreOrder => "pre-order",
            Rule::Depth => "depth",
            Rule::SiblingOrder => "sibling-order",
            Rule::StyleText => "style-text",
        };
        f.write_str(s)
    }
}

/// A broken tree invariant. `element` is absent for page-level rules.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub element: Option<usize>,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.element {
            Some(i) => write!(f, "[{}] element {}: {}", self.rule, i, self.message),
            None => write!(f, "[{}] {}", self.rule, self.message),
        }
    }
}

impl PageTree {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Checks every tree invariant and returns the violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.elements.len();
        let mut push = |element, rule, message: String| {
            out.push(Violation {
                element,
                rule,
                message,
            })
        };

        if n == 0 {
            push(None, Rule::Size, "page has no elements".into());
            return out;
        }
        if n > MAX_ELEMENTS {
            push(
                None,
                Rule::Size,
                format!("{n} elements exceeds the limit of {MAX_ELEMENTS}"),
            );
        }

        // `path` holds the ancestor chain of the previously visited element.
        let mut path: Vec<usize> = Vec::new();
        let mut next_order = vec![0u32; n];
        let mut depth = vec![0usize; n];
        let mut max_depth = 0;
        for (i, el) in self.elements.iter().enumerate() {
            match (i, el.parent) {
                (0, None) => {
                    if el.content.order != 0 {
                        push(Some(0), Rule::SiblingOrder, "root must have order 0".into());
                    }
                    depth[0] = 1;
                    path.push(0);
                }
                (0, Some(p)) => {
                    push(Some(0), Rule::Root, format!("first element has parent {p}"));
                    path.push(0);
                    depth[0] = 1;
                }
                (_, None) => {
                    push(Some(i), Rule::Root, "more than one root".into());
                }
                (_, Some(p)) if p >= i => {
                    push(
                        Some(i),
                        Rule::PreOrder,
                        format!("parent index {p} does not precede the element"),
                    );
                }
                (_, Some(p)) => match path.iter().rposition(|&a| a == p) {
                    None => push(
                        Some(i),
                        Rule::PreOrder,
                        format!("parent {p} is not an ancestor of the preceding element"),
                    ),
                    Some(pos) => {
                        path.truncate(pos + 1);
                        path.push(i);
                        if el.content.order != next_order[p] {
                            push(
                                Some(i),
                                Rule::SiblingOrder,
                                format!(
                                    "order {} but expected {} under parent {p}",
                                    el.content.order, next_order[p]
                                ),
                            );
                        }
                        next_order[p] = el.content.order.saturating_add(1);
                        depth[i] = depth[p] + 1;
                    }
                },
            }
            max_depth = max_depth.max(depth[i]);

            if let Some(style) = &el.style {
                if style.text.is_some() != el.content.has_text() {
                    let msg = if el.content.has_text() {
                        "text element without a text color"
                    } else {
                        "text color on an element without text"
                    };
                    push(Some(i), Rule::StyleText, msg.into());
                }
            }
        }
        if max_depth > MAX_DEPTH {
            push(
                None,
                Rule::Depth,
                format!("depth {max_depth} exceeds the limit of {MAX_DEPTH}"),
            );
        }
        out
    }

    /// Returns `Err(Error::Validation)` unless the tree is valid.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Child index lists, siblings in storage order.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.elements.len()];
        for (i, el) in self.elements.iter().enumerate() {
            if let Some(p) = el.parent {
                if p < ch.len() {
                    ch[p].push(i);
                }
            }
        }
        ch
    }

    /// Pre-order traversal (root first, siblings by `order`).
    pub fn preorder(&self) -> Result<Vec<usize>> {
        self.ensure_valid()?;
        let mut children = self.children();
        for c in children.iter_mut() {
            c.sort_by_key(|&i| self.elements[i].content.order);
        }
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(children[n].iter().rev());
        }
        Ok(out)
    }

    /// Tree depth in levels, computed iteratively from parent links.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.len()];
        let mut max = 0;
        for (i, el) in self.elements.iter().enumerate() {
            depth[i] = match el.parent {
                Some(p) if p < i => depth[p] + 1,
                _ => 1,
            };
            max = max.max(depth[i]);
        }
        max
    }

    /// Tree depth in levels, computed by recursion over child lists.
    pub fn depth_recursive(&self) -> usize {
        fn go(n: usize, ch: &[Vec<usize>]) -> usize {
            1 + ch[n].iter().map(|&c| go(c, ch)).max().unwrap_or(0)
        }
        if self.is_empty() {
            return 0;
        }
        go(0, &self.children())
    }

    /// Depth of every element in levels (root = 1).
    pub fn element_depths(&self) -> Vec<usize> {
        let mut depth = vec![1usize; self.len()];
        for (i, el) in self.elements.iter().enumerate() {
            if let Some(p) = el.parent {
                depth[i] = depth[p] + 1;
            }
        }
        depth
    }

    /// Number of nodes in each element's subtree, itself included.
    pub fn subtree_sizes(&self) -> Vec<usize> {
        let mut size = vec![1usize; self.len()];
        for i in (1..self.len()).rev() {
            if let Some(p) = self.elements[i].parent {
                size[p] += size[i];
            }
        }
        size
    }

    /// Styles of all elements; errors if any element is unstyled.
    pub fn styles(&self) -> Result<Vec<ColorStyle>> {
        self.elements
            .iter()
            .enumerate()
            .map(|(i, e)| {
                e.style.ok_or_else(|| {
                    Error::Data(format!("page `{}`: element {i} has no style", self.id))
                })
            })
            .collect()
    }

    /// A copy of the tree with the given styles attached.
    pub fn with_styles(&self, styles: &[ColorStyle]) -> Result<PageTree> {
        if styles.len() != self.len() {
            return Err(Error::Contract(format!(
                "{} styles for a page of {} elements",
                styles.len(),
                self.len()
            )));
        }
        let mut out = self.clone();
        for (el, s) in out.elements.iter_mut().zip(styles) {
            el.style = Some(*s);
        }
        Ok(out)
    }

    /// A copy with every style removed.
    pub fn without_styles(&self) -> PageTree {
        let mut out = self.clone();
        for el in out.elements.iter_mut() {
            el.style = None;
        }
        out
    }

    pub fn text_mask(&self) -> Vec<bool> {
        self.elements.iter().map(|e| e.content.has_text()).collect()
    }
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;

    #[test]
    fn minimal_tree_is_valid() {
        let t = PageTree {
            id: "one".into(),
            elements: vec![el(None, 0, "html", false)],
        };
        assert!(t.validate().is_empty());
        assert_eq!(t.preorder().unwrap(), vec![0]);
    }

    #[test]
    fn oversized_chain_reports_size() {
        let v = chain(201).validate();
        assert!(v.iter().any(|v| v.rule == Rule::Size));
    }

    #[test]
    fn depth_limit() {
        assert!(chain(30).validate().is_empty());
        let v = chain(31).validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::Depth);
    }

    #[test]
    fn forward_parent_is_preorder_violation() {
        let mut t = chain(6);
        t.elements[3].parent = Some(5);
        let v = t.validate();
        assert!(v
            .iter()
            .any(|v| v.rule == Rule::PreOrder && v.element == Some(3)));
    }

    #[test]
    fn non_preorder_storage_is_rejected() {
        // root, A, B, A1(parent A) is not pre-order even though parents precede.
        let t = PageTree {
            id: "x".into(),
            elements: vec![
                el(None, 0, "body", false),
                el(Some(0), 0, "div", false),
                el(Some(0), 1, "div", false),
                el(Some(1), 0, "div", false),
            ],
        };
        let v = t.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::PreOrder);
        assert_eq!(v[0].element, Some(3));
    }

    #[test]
    fn sibling_order_gap() {
        let mut t = small_tree();
        t.elements[3].content.order = 2;
        let v = t.validate();
        assert_eq!(v[0].rule, Rule::SiblingOrder);
    }

    #[test]
    fn style_text_consistency() {
        let mut t = small_tree();
        t.elements[1].style.as_mut().unwrap().text = Some(RgbaColor::BLACK);
        t.elements[2].style.as_mut().unwrap().text = None;
        let v = t.validate();
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|v| v.rule == Rule::StyleText));
    }

    #[test]
    fn second_root() {
        let mut t = small_tree();
        t.elements[3].parent = None;
        assert!(t.validate().iter().any(|v| v.rule == Rule::Root));
    }

    #[test]
    fn preorder_hand_trace() {
        assert_eq!(small_tree().preorder().unwrap(), vec![0, 1, 2, 3]);
        let mut bad = small_tree();
        bad.elements[2].parent = Some(3);
        assert!(matches!(bad.preorder(), Err(Error::Validation(_))));
    }

    #[test]
    fn derived_structure() {
        let t = small_tree();
        assert_eq!(t.children(), vec![vec![1, 3], vec![2], vec![], vec![]]);
        assert_eq!(t.subtree_sizes(), vec![4, 2, 1, 1]);
        assert_eq!(t.element_depths(), vec![1, 2, 3, 2]);
        assert_eq!(t.depth(), 3);
        assert_eq!(t.depth_recursive(), 3);
    }
}
