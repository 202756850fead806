//! Fixtures and independent reference implementations for integration tests.
#![allow(dead_code)]

use icaglot::EmbeddingSet64;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i}")).collect()
}

pub fn set(m: DMatrix<f64>) -> EmbeddingSet64 {
    EmbeddingSet64::new(labels(m.nrows()), m).expect("valid fixture")
}

pub fn gaussian(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng))
}

/// Unit-variance Laplace draws by inverse CDF.
pub fn laplace(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(n, d, |_, _| {
        let u: f64 = rng.random::<f64>() - 0.5;
        -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    })
}

/// Haar orthogonal matrix via QR with the sign of `diag(R)` removed.
pub fn orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let qr = gaussian(d, d, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.sum() / m.nrows() as f64).collect()
}

/// Two-pass Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    num / (va * vb).sqrt()
}

pub fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

/// Amari index of a square matrix `p`: 0 iff `p` is a scaled permutation.
/// Normalized to `[0, 1]`.
pub fn amari_index(p: &DMatrix<f64>) -> f64 {
    let d = p.nrows();
    let a = p.map(f64::abs);
    let mut total = 0.0;
    for i in 0..d {
        let row = a.row(i);
        total += row.sum() / row.max() - 1.0;
    }
    for j in 0..d {
        let col = a.column(j);
        total += col.sum() / col.max() - 1.0;
    }
    total / (2.0 * d as f64 * (d as f64 - 1.0))
}

/// Crawford–Ferguson criterion by the defining quadruple sums.
pub fn cf_brute(y: &DMatrix<f64>, kappa: f64) -> f64 {
    let (n, d) = y.shape();
    let mut rows = 0.0;
    for i in 0..n {
        for j in 0..d {
            for l in 0..d {
                if l != j {
                    rows += y[(i, j)].powi(2) * y[(i, l)].powi(2);
                }
            }
        }
    }
    let mut cols = 0.0;
    for j in 0..d {
        for i in 0..n {
            for k in 0..n {
                if k != i {
                    cols += y[(i, j)].powi(2) * y[(k, j)].powi(2);
                }
            }
        }
    }
    (1.0 - kappa) * rows + kappa * cols
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn mean_top(mut v: Vec<f64>, k: usize) -> f64 {
    v.sort_by(|a, b| b.total_cmp(a));
    let k = k.min(v.len());
    v[..k].iter().sum::<f64>() / k as f64
}

/// CSLS argmax by enumerating every query/target pair.
pub fn csls_brute(queries: &DMatrix<f64>, targets: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let q: Vec<Vec<f64>> = queries.row_iter().map(|r| r.iter().copied().collect()).collect();
    let t: Vec<Vec<f64>> = targets.row_iter().map(|r| r.iter().copied().collect()).collect();
    let cos: Vec<Vec<f64>> = q.iter().map(|x| t.iter().map(|y| cosine(x, y)).collect()).collect();
    let r_t: Vec<f64> = cos.iter().map(|row| mean_top(row.clone(), k)).collect();
    let r_s: Vec<f64> = (0..t.len())
        .map(|j| mean_top(cos.iter().map(|row| row[j]).collect(), k))
        .collect();
    (0..q.len())
        .map(|i| {
            let mut best = 0;
            let mut score = f64::NEG_INFINITY;
            for j in 0..t.len() {
                let s = 2.0 * cos[i][j] - r_t[i] - r_s[j];
                if s > score {
                    best = j;
                    score = s;
                }
            }
            best
        })
        .collect()
}

/// Ranks with ties averaged, by counting.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// `∫ f(z) φ(z) dz` by composite Simpson on `[-lim, lim]`.
pub fn gaussian_expectation(f: impl Fn(f64) -> f64, lim: f64, intervals: usize) -> f64 {
    let h = 2.0 * lim / intervals as f64;
    let phi = |z: f64| (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let g = |z: f64| f(z) * phi(z);
    let mut s = g(-lim) + g(lim);
    for i in 1..intervals {
        let z = -lim + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(z);
    }
    s * h / 3.0
}

/// Logarithm of `cosh` without overflow.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}
