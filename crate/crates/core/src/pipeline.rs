//! The two-stage pipeline: a colorizer picks quantized styles, a finisher
//! lifts them to full-resolution colors, and diverse selection keeps the
//! most distinct of several variations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{bin_center_style, QuantizedStyle};
use crate::models::diverse::diverse_select;
use crate::models::{Colorizer, Strategy};
use crate::page::{ColorStyle, PageTree};
use crate::upsampler::Upsampler;
use crate::{Error, Result};

/// How quantized styles become full-resolution colors.
#[derive(Clone, Copy, Debug)]
pub enum Finisher<'a> {
    /// A trained upsampler.
    Upsampler(&'a Upsampler),
    /// The center of every bin (no model needed).
    BinCenters,
}

impl Finisher<'_> {
    pub fn finish(&self, page: &PageTree, styles: &[QuantizedStyle]) -> Result<Vec<ColorStyle>> {
        match self {
            Finisher::Upsampler(u) => u.apply(page, styles),
            Finisher::BinCenters => Ok(styles.iter().map(bin_center_style).collect()),
        }
    }
}

/// Per-variation seeds of one page: `k` draws from a stream keyed by
/// `(seed, page_index)`.
pub fn variation_seeds(seed: u64, page_index: usize, k: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(page_index as u64 + 1);
    (0..k).map(|_| rng.random()).collect()
}

/// Generates `variations` stylings of `page` and returns the `select` most
/// distinct ones, in selection order, as styled copies of the page.
pub fn generate_variations(
    colorizer: &dyn Colorizer,
    finisher: Finisher,
    page: &PageTree,
    strategy: Strategy,
    variations: usize,
    select: usize,
    seeds: &[u64],
) -> Result<Vec<PageTree>> {
    if seeds.len() != variations || variations == 0 {
        return Err(Error::Contract(format!(
            "{variations} variations need as many seeds (got {})",
            seeds.len()
        )));
    }
    let page = page.without_styles();
    let candidates = seeds
        .iter()
        .map(|&s| finisher.finish(&page, &colorizer.colorize(&page, strategy, s)?))
        .collect::<Result<Vec<_>>>()?;
    let picked = if select == variations {
        (0..variations).collect()
    } else {
        diverse_select(&candidates, select, seeds[0])?
    };
    picked.into_iter().map(|i| page.with_styles(&candidates[i])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::FrequencyTable;
    use crate::codec::QuantizedColor;
    use crate::page::test_util::small_tree;

    #[test]
    fn selects_requested_count() {
        let page = small_tree();
        let table = FrequencyTable::fit(&[page.clone()]).unwrap();
        let seeds = variation_seeds(3, 0, 5);
        let out =
            generate_variations(&table, Finisher::BinCenters, &page, Strategy::TopP(0.9), 5, 2, &seeds).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|p| p.styles().is_ok() && p.id == page.id));
        assert!(generate_variations(&table, Finisher::BinCenters, &page, Strategy::Greedy, 5, 6, &seeds).is_err());
    }

    #[test]
    fn seeds_depend_on_page_and_seed() {
        assert_eq!(variation_seeds(1, 2, 3), variation_seeds(1, 2, 3));
        assert_ne!(variation_seeds(1, 2, 3), variation_seeds(1, 3, 3));
        assert_ne!(variation_seeds(1, 2, 3), variation_seeds(2, 2, 3));
    }

    #[test]
    fn bin_centers_stay_in_bin() {
        let q = QuantizedStyle { text: None, background: QuantizedColor::new(300, 4).unwrap() };
        let s = Finisher::BinCenters.finish(&small_tree(), &[q]).unwrap();
        assert_eq!(crate::codec::quantize(s[0].background), q.background);
    }
}
