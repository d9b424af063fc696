//! Tag vocabulary and text feature extraction.

use super::TEXT_FEATS;

/// The 64 known tags. Anything else maps to [`UNK_TAG_INDEX`].
pub const TAG_VOCAB: [&str; 64] = [
    "html", "body", "div", "span", "a", "img", "p", "button", "ul", "ol", "li", "h1", "h2", "h3",
    "h4", "h5", "h6", "header", "footer", "nav", "section", "article", "aside", "main", "input",
    "form", "label", "select", "option", "textarea", "svg", "path", "picture", "source", "figure",
    "figcaption", "table", "thead", "tbody", "tr", "td", "th", "i", "b", "strong", "em", "small",
    "br", "hr", "iframe", "video", "canvas", "dl", "dt", "dd", "blockquote", "pre", "code",
    "time", "address", "details", "summary", "fieldset", "legend",
];

pub const UNK_TAG_INDEX: usize = TAG_VOCAB.len();
/// Vocabulary size including UNK.
pub const VOCAB_SIZE: usize = TAG_VOCAB.len() + 1;

pub fn tag_index(tag: &str) -> usize {
    let lower = tag.to_ascii_lowercase();
    TAG_VOCAB
        .iter()
        .position(|t| *t == lower)
        .unwrap_or(UNK_TAG_INDEX)
}

const CURRENCY: &[char] = &['$', '€', '£', '¥', '₩', '₹', '¢'];

/// Text features of a string: line count, word count, then indicators for
/// all-uppercase, starts-capitalized, contains-digit, all-digits,
/// contains-currency, contains-punctuation, single-word, longer than 50
/// chars, contains-URL, and finally the pseudo-element flag.
pub fn text_features(text: &str, pseudo_element: bool) -> [f64; TEXT_FEATS] {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let lines = text.lines().count().max(1);
    let words = text.split_whitespace().count();
    let letters: Vec<char> = text.chars().filter(|c| c.is_alphabetic()).collect();
    let non_ws: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    let lower = text.to_lowercase();
    [
        lines as f64,
        words as f64,
        flag(!letters.is_empty() && letters.iter().all(|c| c.is_uppercase())),
        flag(text.trim_start().chars().next().is_some_and(|c| c.is_uppercase())),
        flag(text.chars().any(|c| c.is_ascii_digit())),
        flag(!non_ws.is_empty() && non_ws.iter().all(|c| c.is_ascii_digit())),
        flag(text.chars().any(|c| CURRENCY.contains(&c))),
        flag(text.chars().any(|c| c.is_ascii_punctuation())),
        flag(words == 1),
        flag(text.chars().count() > 50),
        flag(lower.contains("http://") || lower.contains("https://") || lower.contains("www.")),
        flag(pseudo_element),
    ]
}
