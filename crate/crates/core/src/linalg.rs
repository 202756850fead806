//! Dense helpers shared by the transforms.

use nalgebra::{DMatrix, DVector, SVD};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Real;

pub(crate) fn column_means<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    let n = T::from_count(m.nrows());
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// `MᵀM / n`.
pub(crate) fn gram_over_n<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    m.tr_mul(m) / T::from_count(m.nrows())
}

pub(crate) fn max_identity_deviation<T: Real>(g: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// `max |MᵀM − I|`.
pub(crate) fn orthogonality_error<T: Real>(m: &DMatrix<T>) -> T {
    max_identity_deviation(&m.tr_mul(m))
}

/// Nearest orthogonal matrix `U Vᵀ` from the SVD `A = U S Vᵀ`.
///
/// For square `W` this equals `(W Wᵀ)^{-1/2} W`, the symmetric decorrelation
/// used by FastICA, without forming the inverse square root explicitly.
pub(crate) fn polar_orthogonal<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    u * v_t
}

/// Extends the orthonormal columns of `thin` (`d × r`) to a `d × d` orthogonal matrix.
pub(crate) fn complete_orthonormal_basis<T: Real>(thin: &DMatrix<T>) -> DMatrix<T> {
    let d = thin.nrows();
    let mut cols: Vec<DVector<T>> = thin.column_iter().map(|c| c.into_owned()).collect();
    for e in 0..d {
        if cols.len() == d {
            break;
        }
        let mut v = DVector::zeros(d);
        v[e] = T::one();
        // Two Gram-Schmidt passes against everything kept so far.
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dot(&v);
                v.axpy(-proj, c, T::one());
            }
        }
        let norm = v.norm();
        if norm > T::lit(0.5) {
            cols.push(v / norm);
        }
    }
    DMatrix::from_columns(&cols)
}

/// Row-major fill with independent `N(0, std²)` draws.
pub(crate) fn normal_matrix<T: Real, R: Rng>(
    rows: usize,
    cols: usize,
    std: f64,
    rng: &mut R,
) -> DMatrix<T> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let z: f64 = StandardNormal.sample(rng);
            m[(i, j)] = T::lit(z * std);
        }
    }
    m
}

/// Haar-distributed orthogonal matrix from the QR factorization of a Gaussian matrix.
pub(crate) fn random_orthogonal<T: Real, R: Rng>(d: usize, rng: &mut R) -> DMatrix<T> {
    let g: DMatrix<T> = normal_matrix(d, d, 1.0, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < T::zero() {
            let mut col = q.column_mut(j);
            col.neg_mut();
        }
    }
    q
}

/// Flips each column so that its largest-magnitude entry (first on ties) is positive.
pub(crate) fn canonical_column_signs<T: Real>(m: &mut DMatrix<T>) {
    for mut col in m.column_iter_mut() {
        let mut best = T::zero();
        let mut sign_negative = false;
        for v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign_negative = *v < T::zero();
            }
        }
        if sign_negative {
            col.neg_mut();
        }
    }
}

/// Columns of `m` reordered as `order[k]` → new column `k`.
pub(crate) fn select_columns<T: Real>(m: &DMatrix<T>, order: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), order.len(), |i, k| m[(i, order[k])])
}

/// Pearson correlation between two equally long slices; 0 when either is constant.
pub(crate) fn pearson<T: Real>(a: &[T], b: &[T]) -> T {
    let n = T::from_count(a.len());
    let ma = a.iter().copied().fold(T::zero(), |s, v| s + v) / n;
    let mb = b.iter().copied().fold(T::zero(), |s, v| s + v) / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == T::zero() || sbb == T::zero() {
        return T::zero();
    }
    sab / (saa * sbb).sqrt()
}
