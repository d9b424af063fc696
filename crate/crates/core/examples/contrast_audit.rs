//! WCAG contrast ratios and the per-page text contrast audit.
//!
//! Usage:
//!   cargo run --example contrast_audit

use webcolor::metrics::{aggregate_contrast, audit_page, contrast_ratio};
use webcolor::page::{ColorStyle, ContentFeatures, Element, PageTree, RgbaColor};

fn main() -> webcolor::Result<()> {
    let white = RgbaColor::WHITE;
    for fg in [RgbaColor::BLACK, RgbaColor::new(118, 118, 118, 255), RgbaColor::new(119, 119, 119, 255), RgbaColor::new(0, 0, 0, 64)] {
        println!("{:?} on white: {:.3}:1", fg.channels(), contrast_ratio(fg, white));
    }

    // Light grey text on a translucent dark panel over a white page.
    let mut label = ContentFeatures::new(0, "p");
    label.text_feats = Some([1.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let page = PageTree {
        id: "panel".into(),
        elements: vec![
            Element { parent: None, content: ContentFeatures::new(0, "body"), style: Some(ColorStyle { text: None, background: white }) },
            Element {
                parent: Some(0),
                content: ContentFeatures::new(0, "div"),
                style: Some(ColorStyle { text: None, background: RgbaColor::new(0, 0, 0, 40) }),
            },
            Element {
                parent: Some(1),
                content: label,
                style: Some(ColorStyle { text: Some(RgbaColor::new(200, 200, 200, 255)), background: RgbaColor::new(0, 0, 0, 0) }),
            },
        ],
    };
    for v in audit_page(&page)? {
        println!("element {} fails with {:.2}:1", v.element, v.ratio);
    }
    let report = aggregate_contrast(&[page])?;
    println!("pages violating: {:.0}%, mean violating elements: {}", 100.0 * report.pages_violating_fraction, report.mean_violating_elements);
    Ok(())
}
