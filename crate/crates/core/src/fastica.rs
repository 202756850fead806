//! Symmetric fixed-point FastICA on whitened data.
//!
//! The unmixing matrix `W` (rows `w_k`) is updated in parallel,
//!
//! ```text
//! w_k ← E[z g(w_kᵀz)] − E[g′(w_kᵀz)] w_k,     W ← (W Wᵀ)^{-1/2} W
//! ```
//!
//! until `max_k |1 − |⟨w_k_new, w_k_old⟩|| < tol`. The returned rotation is
//! `R = Wᵀ`, so that the sources are `S = Z R`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedstore::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg;
use crate::nongauss::{self, Contrast};
use crate::whitening::{self, LinearMap};
use crate::Real;

/// Whiteness tolerance checked on the input.
pub const INPUT_WHITENESS_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// All components updated together, then decorrelated symmetrically.
    #[default]
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaConfig {
    pub contrast: Contrast,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub strategy: Strategy,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self { contrast: Contrast::Logcosh, max_iter: 10_000, tol: 1e-10, seed: 0, strategy: Strategy::Symmetric }
    }
}

impl IcaConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::invalid("tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IcaResult<T: Real> {
    /// Orthogonal `d × d` rotation `R` with `S = Z R`.
    pub rotation: LinearMap<T>,
    pub sources: EmbeddingSet<T>,
    pub converged: bool,
    pub iterations_used: usize,
}

/// `g` and `g′` evaluated elementwise.
fn nonlinearity<T: Real>(contrast: Contrast, u: T) -> (T, T) {
    match contrast {
        Contrast::Logcosh => {
            let t = u.tanh();
            (t, T::one() - t * t)
        }
        Contrast::Gauss => {
            let u2 = u * u;
            let e = (-u2 / T::lit(2.0)).exp();
            (u * e, (T::one() - u2) * e)
        }
    }
}

pub fn fast_ica<T: Real>(z: &EmbeddingSet<T>, cfg: &IcaConfig) -> Result<IcaResult<T>> {
    cfg.validate()?;
    let report = whitening::whiteness_report(z, INPUT_WHITENESS_TOLERANCE);
    if report.passed != Some(true) {
        return Err(Error::invalid(format!(
            "fast_ica needs whitened input (max |cov − I| = {:e}, max |mean| = {:e})",
            report.metrics["max_gram_deviation"], report.metrics["max_column_mean"]
        )));
    }
    let x = z.matrix();
    let (n, d) = x.shape();
    let inv_n = T::one() / T::from_count(n);
    let tol = T::lit(cfg.tol);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init: DMatrix<T> = linalg::normal_matrix(d, d, 1.0, &mut rng);
    let mut w = linalg::polar_orthogonal(&init);

    let mut converged = false;
    let mut iterations_used = 0;
    let mut g = DMatrix::<T>::zeros(n, d);
    for it in 1..=cfg.max_iter {
        iterations_used = it;
        // Column k holds w_kᵀ z_i over all rows i.
        let proj = x * w.transpose();
        let mut gp_mean = vec![T::zero(); d];
        for k in 0..d {
            let mut acc = T::zero();
            for i in 0..n {
                let (gv, gpv) = nonlinearity(cfg.contrast, proj[(i, k)]);
                g[(i, k)] = gv;
                acc += gpv;
            }
            gp_mean[k] = acc * inv_n;
        }
        let mut w_new = g.tr_mul(x) * inv_n;
        for k in 0..d {
            for j in 0..d {
                w_new[(k, j)] -= gp_mean[k] * w[(k, j)];
            }
        }
        let w_new = linalg::polar_orthogonal(&w_new);

        let overlap = &w_new * w.transpose();
        let lim = (0..d)
            .map(|k| (T::one() - overlap[(k, k)].abs()).abs())
            .fold(T::zero(), |a, b| a.max(b));
        w = w_new;
        if lim < tol {
            converged = true;
            break;
        }
    }

    let r = w.transpose();
    let rotation = LinearMap::rotation(r)?;
    let mut sources = rotation.apply(z)?;
    let meta = sources.meta_mut();
    meta.whitened = true;
    meta.centered = true;
    meta.provenance = whitening::provenance(z.meta(), "fast-ica");
    Ok(IcaResult { rotation, sources, converged, iterations_used })
}

/// Column order (by descending skewness after flipping) and per-column sign.
///
/// Ties keep the original column order.
pub fn skewness_order<T: Real>(set: &EmbeddingSet<T>) -> Result<(Vec<usize>, Vec<bool>)> {
    let d = set.ncols();
    let mut skew = Vec::with_capacity(d);
    let mut flip = Vec::with_capacity(d);
    for j in 0..d {
        let s = nongauss::column_skewness(set, j)?;
        flip.push(s < T::zero());
        skew.push(s.abs());
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| skew[b].partial_cmp(&skew[a]).expect("finite").then(a.cmp(&b)));
    Ok((order, flip))
}

fn reorder_columns<T: Real>(m: &DMatrix<T>, order: &[usize], flip: &[bool]) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), order.len(), |i, k| {
        let j = order[k];
        if flip[j] {
            -m[(i, j)]
        } else {
            m[(i, j)]
        }
    })
}

/// Flips sources to nonnegative skewness and sorts them by descending skewness,
/// applying the same signed permutation to the rotation's columns.
pub fn fix_signs_and_sort<T: Real>(result: IcaResult<T>) -> Result<IcaResult<T>> {
    let (order, flip) = skewness_order(&result.sources)?;
    let matrix = reorder_columns(&result.rotation.matrix, &order, &flip);
    let rotation = LinearMap { matrix, ..result.rotation };
    let mut meta = result.sources.meta().clone();
    meta.axes_signed_sorted = true;
    let sources = result.sources.derive(reorder_columns(result.sources.matrix(), &order, &flip), meta)?;
    Ok(IcaResult { rotation, sources, ..result })
}

/// Same signed sort applied to an arbitrary set and the map that produced it.
pub fn fix_signs_and_sort_set<T: Real>(
    set: &EmbeddingSet<T>,
    map: &LinearMap<T>,
) -> Result<(EmbeddingSet<T>, LinearMap<T>)> {
    let (order, flip) = skewness_order(set)?;
    let mut meta = set.meta().clone();
    meta.axes_signed_sorted = true;
    let out = set.derive(reorder_columns(set.matrix(), &order, &flip), meta)?;
    let matrix = reorder_columns(&map.matrix, &order, &flip);
    Ok((out, LinearMap { matrix, ..map.clone() }))
}
