//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Sweeps stop once the off-diagonal Frobenius norm drops below this value
/// (scaled up by `‖A‖_F` for matrices larger than 1 in norm).
pub const OFF_DIAGONAL_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

fn off_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Eigenvalues and eigenvectors (as columns of the returned matrix) of a
/// symmetric matrix.
pub fn symmetric_eigen(m: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let (n, cols) = (m.rows(), m.cols());
    if !m.is_matrix() || n != cols {
        return Err(Error::shape("symmetric_eigen", format!("{:?} is not square", m.shape())));
    }
    if m.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite matrix entry".into()));
    }
    let mut a = m.data().to_vec();
    let mut v = Tensor::identity(n).into_data();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = OFF_DIAGONAL_TOL * norm.max(1.0);
    let mut sweeps = 0;
    while off_norm(&a, n) >= tol {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numeric(format!(
                "Jacobi did not converge in {MAX_SWEEPS} sweeps (off-diagonal {:e})",
                off_norm(&a, n)
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    Ok((values, Tensor::matrix(n, n, v)?))
}

/// `V · diag(f(λ)) · Vᵀ`.
fn spectral_map(vectors: &Tensor, values: &[f64], f: impl Fn(f64) -> f64) -> Tensor {
    let n = values.len();
    let mut scaled = vectors.clone();
    for r in 0..n {
        for (c, &l) in values.iter().enumerate() {
            scaled.row_mut(r)[c] *= f(l);
        }
    }
    scaled.matmul(&vectors.transpose()).expect("square")
}

/// Principal square root of a symmetric positive semi-definite matrix;
/// negative eigenvalues (round-off) are clamped to zero.
pub fn psd_sqrt(m: &Tensor) -> Result<Tensor> {
    let (values, vectors) = symmetric_eigen(m)?;
    Ok(spectral_map(&vectors, &values, |l| l.max(0.0).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Tensor::matrix(n, n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut m = b.matmul(&b.transpose()).unwrap();
        for i in 0..n {
            m.row_mut(i)[i] += 1e-3;
        }
        m
    }

    #[test]
    fn reconstructs_spectrum() {
        let m = Tensor::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (mut values, _) = symmetric_eigen(&m).unwrap();
        values.sort_by(f64::total_cmp);
        assert!((values[0] - 1.0).abs() < 1e-12 && (values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn square_roots_of_random_spd() {
        for (n, seed) in [(1, 1), (5, 2), (16, 3), (64, 4)] {
            let m = random_spd(n, seed);
            let r = psd_sqrt(&m).unwrap();
            let rr = r.matmul(&r).unwrap();
            let diff: f64 = rr.data().iter().zip(m.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(diff <= 1e-6 * m.frobenius_norm(), "n={n}: {diff}");
        }
    }

    #[test]
    fn rejects_non_finite() {
        let m = Tensor::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(matches!(symmetric_eigen(&m), Err(Error::Numeric(_))));
    }
}
