//! Canonical JSON page files.
//!
//! One page per file, UTF-8, LF line endings. The top level object holds
//! `id` then `elements`; each element is written on its own line with keys in
//! the fixed order `parent, order, tag, text_feats, image_feats,
//! bg_image_feats, style`. Floats are rounded to 6 significant digits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ColorStyle, ContentFeatures, Element, PageTree, IMAGE_FEATS, TEXT_FEATS};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStyle {
    text: Option<[i64; 4]>,
    background: [i64; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElement {
    parent: Option<i64>,
    order: i64,
    tag: String,
    text_feats: Option<Vec<f64>>,
    image_feats: Option<Vec<f64>>,
    bg_image_feats: Option<Vec<f64>>,
    style: Option<RawStyle>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPage {
    id: String,
    elements: Vec<RawElement>,
}

/// Rounds to 6 significant digits; this is the only float form written.
pub(crate) fn canonical_f64(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

fn feats<const K: usize>(
    v: Option<Vec<f64>>,
    field: &str,
    index: usize,
) -> Result<Option<[f64; K]>> {
    let Some(v) = v else { return Ok(None) };
    let name = format!("elements[{index}].{field}");
    if v.len() != K {
        return Err(Error::Schema {
            field: name,
            message: format!("arity {} but expected {K}", v.len()),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Schema {
            field: name,
            message: "non-finite value".into(),
        });
    }
    let mut out = [0.0; K];
    out.copy_from_slice(&v);
    Ok(Some(out))
}

fn color(c: [i64; 4], field: String) -> Result<super::RgbaColor> {
    let mut out = [0u8; 4];
    for (o, v) in out.iter_mut().zip(c) {
        *o = u8::try_from(v).map_err(|_| Error::Schema {
            field: field.clone(),
            message: format!("channel value {v} outside 0..=255"),
        })?;
    }
    Ok(out.into())
}

fn from_raw(raw: RawPage) -> Result<PageTree> {
    let mut elements = Vec::with_capacity(raw.elements.len());
    for (i, e) in raw.elements.into_iter().enumerate() {
        let parent = match e.parent {
            None => None,
            Some(p) => Some(usize::try_from(p).map_err(|_| Error::Schema {
                field: format!("elements[{i}].parent"),
                message: format!("negative parent index {p}"),
            })?),
        };
        let order = u32::try_from(e.order).map_err(|_| Error::Schema {
            field: format!("elements[{i}].order"),
            message: format!("invalid order {}", e.order),
        })?;
        let content = ContentFeatures {
            order,
            tag: e.tag,
            text_feats: feats::<TEXT_FEATS>(e.text_feats, "text_feats", i)?,
            image_feats: feats::<IMAGE_FEATS>(e.image_feats, "image_feats", i)?,
            bg_image_feats: feats::<IMAGE_FEATS>(e.bg_image_feats, "bg_image_feats", i)?,
        };
        let style = match e.style {
            None => None,
            Some(s) => Some(ColorStyle {
                text: s
                    .text
                    .map(|t| color(t, format!("elements[{i}].style.text")))
                    .transpose()?,
                background: color(s.background, format!("elements[{i}].style.background"))?,
            }),
        };
        elements.push(Element {
            parent,
            content,
            style,
        });
    }
    Ok(PageTree {
        id: raw.id,
        elements,
    })
}

fn to_raw(el: &Element) -> RawElement {
    let canon = |v: &[f64]| v.iter().map(|&x| canonical_f64(x)).collect::<Vec<_>>();
    let wide = |c: super::RgbaColor| c.channels().map(i64::from);
    RawElement {
        parent: el.parent.map(|p| p as i64),
        order: el.content.order as i64,
        tag: el.content.tag.clone(),
        text_feats: el.content.text_feats.as_ref().map(|f| canon(f)),
        image_feats: el.content.image_feats.as_ref().map(|f| canon(f)),
        bg_image_feats: el.content.bg_image_feats.as_ref().map(|f| canon(f)),
        style: el.style.map(|s| RawStyle {
            text: s.text.map(wide),
            background: wide(s.background),
        }),
    }
}

/// Parses and validates a page document.
pub fn page_from_str(s: &str) -> Result<PageTree> {
    let raw: RawPage = serde_json::from_str(s).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let tree = from_raw(raw)?;
    tree.ensure_valid()?;
    Ok(tree)
}

/// Serializes a page in canonical form.
pub fn page_to_string(tree: &PageTree) -> Result<String> {
    let mut out = String::from("{\"id\":");
    out.push_str(&serde_json::to_string(&tree.id)?);
    out.push_str(",\"elements\":[\n");
    for (i, el) in tree.elements.iter().enumerate() {
        if i > 0 {
            out.push_str(",\n");
        }
        out.push_str(&serde_json::to_string(&to_raw(el))?);
    }
    out.push_str("\n]}\n");
    Ok(out)
}

pub fn read_page(path: impl AsRef<Path>) -> Result<PageTree> {
    page_from_str(&fs::read_to_string(path)?)
}

pub fn write_page(path: impl AsRef<Path>, tree: &PageTree) -> Result<()> {
    fs::write(path, page_to_string(tree)?)?;
    Ok(())
}
