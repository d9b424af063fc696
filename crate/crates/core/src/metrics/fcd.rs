//! Fréchet color distance: Gaussians fitted to per-page histograms of
//! discrete RGB colors, compared with the Fréchet (2-Wasserstein) distance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eigen::{psd_sqrt, symmetric_eigen};
use crate::codec::{quantize, RGB_CLASSES};
use crate::page::PageTree;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub use crate::render::pixel_histogram;

/// Normalized counts over the 512 RGB classes (index `rgb_index − 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorHistogram(pub Vec<f64>);

impl ColorHistogram {
    pub fn zeros() -> Self {
        ColorHistogram(vec![0.0; RGB_CLASSES])
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistogramKind {
    Bg,
    Text,
    Pixel,
}

impl HistogramKind {
    pub const ALL: [HistogramKind; 3] = [HistogramKind::Bg, HistogramKind::Text, HistogramKind::Pixel];
}

/// Histogram of a styled page: background colors of all elements, text
/// colors of text elements (all zeros if there are none), or rendered
/// pixels. Alpha is ignored.
pub fn histogram(page: &PageTree, kind: HistogramKind) -> Result<ColorHistogram> {
    let styles = page.styles()?;
    let colors: Vec<_> = match kind {
        HistogramKind::Bg => styles.iter().map(|s| s.background).collect(),
        HistogramKind::Text => styles.iter().filter_map(|s| s.text).collect(),
        HistogramKind::Pixel => return Ok(pixel_histogram(&crate::render::render_page(page)?)),
    };
    let mut h = ColorHistogram::zeros();
    for c in &colors {
        h.0[quantize(*c).rgb_index() - 1] += 1.0;
    }
    if !colors.is_empty() {
        let n = colors.len() as f64;
        h.0.iter_mut().for_each(|v| *v /= n);
    }
    Ok(h)
}

/// Mean and (unbiased) covariance of a set of histograms.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    pub cov: Tensor,
}

impl GaussianStats {
    pub fn fit(samples: &[ColorHistogram]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Data(format!(
                "a Gaussian fit needs at least 2 pages, got {}",
                samples.len()
            )));
        }
        let d = samples[0].0.len();
        if samples.iter().any(|s| s.0.len() != d) {
            return Err(Error::shape("GaussianStats::fit", "histograms of different lengths"));
        }
        let n = samples.len() as f64;
        let mut mean = vec![0.0; d];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(&s.0) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        // accumulate only over bins that vary, the rest stay exactly zero
        let active: Vec<usize> = (0..d)
            .filter(|&i| samples.iter().any(|s| s.0[i] != samples[0].0[i]))
            .collect();
        let mut cov = Tensor::zeros(&[d, d]);
        for s in samples {
            for &i in &active {
                let di = s.0[i] - mean[i];
                for &j in &active {
                    cov.row_mut(i)[j] += di * (s.0[j] - mean[j]);
                }
            }
        }
        cov.data_mut().iter_mut().for_each(|v| *v /= n - 1.0);
        Ok(GaussianStats { mean, cov })
    }
}

fn sub_matrix(m: &Tensor, idx: &[usize]) -> Tensor {
    let k = idx.len();
    let mut out = Tensor::zeros(&[k, k]);
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            out.row_mut(a)[b] = m.row(i)[j];
        }
    }
    out
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa^½ Σb Σa^½)^½)`.
///
/// Dimensions whose variance is zero in both inputs have zero covariance
/// rows and columns and add nothing to the trace term, so the matrix part is
/// computed on the remaining dimensions only.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    let d = a.mean.len();
    if b.mean.len() != d || a.cov.shape() != [d, d] || b.cov.shape() != [d, d] {
        return Err(Error::shape("frechet_distance", "statistics of different dimensions"));
    }
    let finite = |s: &GaussianStats| s.mean.iter().chain(s.cov.data()).all(|v| v.is_finite());
    if !finite(a) || !finite(b) {
        return Err(Error::Numeric("non-finite statistics".into()));
    }
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y).powi(2)).sum();
    let support: Vec<usize> = (0..d)
        .filter(|&i| a.cov.row(i)[i] != 0.0 || b.cov.row(i)[i] != 0.0)
        .collect();
    if support.is_empty() {
        return Ok(mean_term);
    }
    let sa = sub_matrix(&a.cov, &support);
    let sb = sub_matrix(&b.cov, &support);
    let trace = |m: &Tensor| (0..m.rows()).map(|i| m.row(i)[i]).sum::<f64>();
    let root_a = psd_sqrt(&sa)?;
    let mut inner = root_a.matmul(&sb)?.matmul(&root_a)?;
    let sym = inner.transpose();
    for (x, y) in inner.data_mut().iter_mut().zip(sym.data()) {
        *x = 0.5 * (*x + y);
    }
    let (values, _) = symmetric_eigen(&inner)?;
    let cross: f64 = values.iter().map(|l| l.max(0.0).sqrt()).sum();
    Ok(mean_term + trace(&sa) + trace(&sb) - 2.0 * cross)
}

/// Splits the indices of the (aligned) page lists into two seeded random
/// halves, takes the first half from `generated` and the second from `real`,
/// and returns the Fréchet distance between their fitted Gaussians.
pub fn fcd_protocol(generated: &[ColorHistogram], real: &[ColorHistogram], seed: u64) -> Result<f64> {
    if generated.len() != real.len() {
        return Err(Error::Data(format!(
            "{} generated pages for {} real pages",
            generated.len(),
            real.len()
        )));
    }
    let n = real.len();
    if n < 4 {
        return Err(Error::Data(format!("FCD needs at least 4 pages (2 per half), got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (left, right) = order.split_at(n / 2);
    let g: Vec<ColorHistogram> = left.iter().map(|&i| generated[i].clone()).collect();
    let r: Vec<ColorHistogram> = right.iter().map(|&i| real[i].clone()).collect();
    frechet_distance(&GaussianStats::fit(&g)?, &GaussianStats::fit(&r)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn stats(mean: Vec<f64>, cov: Tensor) -> GaussianStats {
        GaussianStats { mean, cov }
    }

    #[test]
    fn closed_forms() {
        let a = stats(vec![0.0, 0.0, 0.0], Tensor::identity(3));
        let b = stats(vec![1.0, 2.0, -2.0], Tensor::identity(3));
        assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-8);
        assert!((frechet_distance(&a, &b).unwrap() - 9.0).abs() < 1e-6);
        let s4 = stats(vec![0.0], Tensor::from_rows(&[vec![4.0]]).unwrap());
        let s1 = stats(vec![0.0], Tensor::from_rows(&[vec![1.0]]).unwrap());
        assert!((frechet_distance(&s4, &s1).unwrap() - 1.0).abs() < 1e-6);
    }

    fn random_hists(seed: u64, n: usize) -> Vec<ColorHistogram> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut h = ColorHistogram::zeros();
                for _ in 0..10 {
                    h.0[rng.random_range(0..12)] += 0.1;
                }
                h
            })
            .collect()
    }

    #[test]
    fn symmetric_and_zero_on_self() {
        let a = GaussianStats::fit(&random_hists(1, 30)).unwrap();
        let b = GaussianStats::fit(&random_hists(2, 30)).unwrap();
        let (ab, ba) = (frechet_distance(&a, &b).unwrap(), frechet_distance(&b, &a).unwrap());
        assert!((ab - ba).abs() < 1e-8);
        assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-8);
        for i in 0..512 {
            for j in 0..512 {
                assert!((a.cov.row(i)[j] - a.cov.row(j)[i]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn protocol_is_seeded() {
        let h = random_hists(3, 20);
        let x = fcd_protocol(&h, &h, 5).unwrap();
        assert_eq!(x, fcd_protocol(&h, &h, 5).unwrap());
        assert!(fcd_protocol(&h[..3], &h[..3], 5).is_err());
        assert!(GaussianStats::fit(&h[..1]).is_err());
    }

    #[test]
    fn page_histograms() {
        use crate::page::test_util::small_tree;
        let page = small_tree();
        let bg = histogram(&page, HistogramKind::Bg).unwrap();
        assert_eq!(bg.0[511], 1.0);
        let text = histogram(&page, HistogramKind::Text).unwrap();
        assert_eq!(text.0[0], 1.0);
        let bare = crate::page::PageTree {
            id: "x".into(),
            elements: vec![page.elements[0].clone()],
        };
        assert_eq!(histogram(&bare, HistogramKind::Text).unwrap().total(), 0.0);
    }
}
