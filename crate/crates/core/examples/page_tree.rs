//! Builds a small page by hand, validates it and prints its canonical JSON.
//!
//! Usage:
//!   cargo run --example page_tree

use webcolor::page::{page_from_str, page_to_string, text_features, ColorStyle, ContentFeatures, Element, PageTree, RgbaColor};

fn element(parent: Option<usize>, order: u32, tag: &str, text: Option<&str>, style: ColorStyle) -> Element {
    let mut content = ContentFeatures::new(order, tag);
    content.text_feats = text.map(|t| text_features(t, false));
    Element { parent, content, style: Some(style) }
}

fn main() -> webcolor::Result<()> {
    let white = ColorStyle { text: None, background: RgbaColor::WHITE };
    let button = ColorStyle { text: Some(RgbaColor::WHITE), background: RgbaColor::new(25, 118, 210, 255) };
    let page = PageTree {
        id: "hello".into(),
        elements: vec![
            element(None, 0, "body", None, white),
            element(Some(0), 0, "h1", Some("Welcome"), ColorStyle { text: Some(RgbaColor::BLACK), ..white }),
            element(Some(0), 1, "div", None, white),
            element(Some(2), 0, "button", Some("Sign in"), button),
        ],
    };
    page.ensure_valid()?;
    println!("elements: {}, depth: {}", page.len(), page.depth());
    println!("pre-order: {:?}", page.preorder()?);

    let json = page_to_string(&page)?;
    print!("{json}");
    assert_eq!(page_from_str(&json)?, page);

    // Broken trees report every violated rule.
    let mut broken = page.clone();
    broken.elements[3].parent = Some(1);
    for v in broken.validate() {
        println!("violation: {v}");
    }
    Ok(())
}
