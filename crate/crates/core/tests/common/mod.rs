#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use whitekit::EmbeddingMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut *rng))
}

/// Haar-ish random orthogonal matrix via Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let g = gaussian(d, d, rng);
    let mut q = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        let mut v = g.column(j).to_owned();
        for _ in 0..2 {
            for k in 0..j {
                let proj = v.dot(&q.column(k));
                v.scaled_add(-proj, &q.column(k));
            }
        }
        let norm = v.dot(&v).sqrt();
        q.column_mut(j).assign(&(v / norm));
    }
    q
}

/// `n x d` data drawn with covariance `Q diag(lambda) Q^T`, eigenvalues
/// log-uniform in [0.1, 10], plus a random offset.
pub fn random_spd_data(n: usize, d: usize, rng: &mut ChaCha8Rng) -> EmbeddingMatrix {
    let q = random_orthogonal(d, rng);
    let lambda: Array1<f64> = Array1::from_shape_simple_fn(d, || 10f64.powf(rng.random_range(-1.0..1.0)));
    let mixing = (&q * &lambda.mapv(f64::sqrt)).dot(&q.t());
    let offset: Array1<f64> = Array1::from_shape_simple_fn(d, || rng.random_range(-5.0..5.0));
    EmbeddingMatrix::new(gaussian(n, d, rng).dot(&mixing) + &offset).unwrap()
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Brute-force Spearman: rank of v_i = #{v_j < v_i} + (#{v_j == v_i} + 1) / 2,
/// then the textbook Pearson formula on the ranks.
pub fn brute_spearman(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let less = v.iter().filter(|&&y| y < x).count() as f64;
                let equal = v.iter().filter(|&&y| y == x).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
