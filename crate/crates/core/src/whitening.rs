//! Centering and the whitening family.
//!
//! With the centered data `X` and `Σ = XᵀX/n = U D² Uᵀ`:
//!
//! | transform   | output          | whitened |
//! |-------------|-----------------|----------|
//! | PCA whiten  | `Z = X U D⁻¹`   | yes      |
//! | ZCA whiten  | `X U D⁻¹ Uᵀ`    | yes      |
//! | PCA rotate  | `X U = Z D`     | no       |
//!
//! The decomposition is taken from the SVD of `X / √n`, not from `Σ`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::embedstore::{EmbeddingSet, Meta};
use crate::error::{Error, Result};
use crate::linalg;
use crate::report::EvalReport;
use crate::Real;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    CenterOnly,
    PcaWhiten,
    ZcaWhiten,
    PcaRotate,
    Rotation,
    Translation,
}

/// `x ↦ (x − mean) · matrix`, applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap<T: Real> {
    pub kind: MapKind,
    pub mean: DVector<T>,
    pub matrix: DMatrix<T>,
}

#[derive(Serialize, Deserialize)]
struct LinearMapRepr {
    kind: MapKind,
    mean: Vec<f64>,
    matrix: Vec<Vec<f64>>,
}

impl<T: Real> Serialize for LinearMap<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LinearMapRepr {
            kind: self.kind,
            mean: self.mean.iter().map(|v| v.as_f64()).collect(),
            matrix: self
                .matrix
                .row_iter()
                .map(|r| r.iter().map(|v| v.as_f64()).collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for LinearMap<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = LinearMapRepr::deserialize(d)?;
        let rows = repr.matrix.len();
        let cols = repr.matrix.first().map_or(0, Vec::len);
        if repr.matrix.iter().any(|r| r.len() != cols) {
            return Err(D::Error::custom("ragged matrix"));
        }
        if repr.mean.len() != rows {
            return Err(D::Error::custom(format!(
                "mean has {} entries for a {rows}-row matrix",
                repr.mean.len()
            )));
        }
        Ok(LinearMap {
            kind: repr.kind,
            mean: DVector::from_iterator(rows, repr.mean.into_iter().map(T::lit)),
            matrix: DMatrix::from_fn(rows, cols, |i, j| T::lit(repr.matrix[i][j])),
        })
    }
}

impl<T: Real> LinearMap<T> {
    pub fn new(kind: MapKind, mean: DVector<T>, matrix: DMatrix<T>) -> Result<Self> {
        if mean.len() != matrix.nrows() {
            return Err(Error::invalid(format!(
                "mean of length {} for a map with {} inputs",
                mean.len(),
                matrix.nrows()
            )));
        }
        Ok(Self { kind, mean, matrix })
    }

    /// A square orthogonal map with zero mean. Fails unless `MᵀM = I` within 1e-8.
    pub fn rotation(matrix: DMatrix<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::invalid("rotation matrix must be square"));
        }
        let err = linalg::orthogonality_error(&matrix);
        if err > T::lit(1e-8) {
            return Err(Error::Numerical(format!(
                "rotation is not orthogonal (max |MᵀM − I| = {err:e})"
            )));
        }
        Ok(Self { kind: MapKind::Rotation, mean: DVector::zeros(matrix.nrows()), matrix })
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply_matrix(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "map expects {} columns, input has {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut shifted = x.clone();
        for mut row in shifted.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(shifted * &self.matrix)
    }

    pub fn apply(&self, set: &EmbeddingSet<T>) -> Result<EmbeddingSet<T>> {
        let out = self.apply_matrix(set.matrix())?;
        let mut meta = set.meta().clone();
        match self.kind {
            MapKind::CenterOnly => meta.centered = true,
            MapKind::PcaWhiten | MapKind::ZcaWhiten => {
                meta.centered = true;
                meta.whitened = true;
            }
            MapKind::PcaRotate => meta.whitened = false,
            MapKind::Rotation => {}
            MapKind::Translation => {
                meta.centered = false;
                meta.whitened = false;
            }
        }
        meta.axes_signed_sorted = false;
        set.derive(out, meta)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// `Σ = U D² Uᵀ` with `D` descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition<T: Real> {
    /// `d × d` orthogonal; column `i` pairs with `singular_values[i]`.
    pub u: DMatrix<T>,
    pub singular_values: DVector<T>,
    pub rank: usize,
}

impl<T: Real> SpectralDecomposition<T> {
    pub fn covariance(&self) -> DMatrix<T> {
        let d2 = self.singular_values.map(|s| s * s);
        &self.u * DMatrix::from_diagonal(&d2) * self.u.transpose()
    }
}

/// What to do when the centered data are rank deficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankPolicy {
    #[default]
    Strict,
    /// Keep only the leading `rank` principal directions.
    Truncate,
}

pub(crate) fn provenance(set_meta: &Meta, step: &str) -> String {
    if set_meta.provenance.is_empty() {
        step.to_string()
    } else {
        format!("{} | {step}", set_meta.provenance)
    }
}

/// Subtracts the column means.
pub fn center<T: Real>(set: &EmbeddingSet<T>) -> Result<(EmbeddingSet<T>, LinearMap<T>)> {
    let mean = linalg::column_means(set.matrix());
    let map = LinearMap::new(
        MapKind::CenterOnly,
        mean,
        DMatrix::identity(set.ncols(), set.ncols()),
    )?;
    let mut out = set.matrix().clone();
    for mut row in out.row_iter_mut() {
        row -= map.mean.transpose();
    }
    let meta = Meta {
        centered: true,
        provenance: provenance(set.meta(), "center"),
        ..set.meta().clone()
    };
    Ok((set.derive(out, meta)?, map))
}

fn require_centered<T: Real>(set: &EmbeddingSet<T>) -> Result<()> {
    let means = linalg::column_means(set.matrix());
    let scale = set.matrix().amax().max(T::one());
    let worst = means.amax();
    let tol = T::lit(1e-8).max(T::eps() * T::lit(1e3));
    if worst > tol * scale {
        return Err(Error::invalid(format!(
            "input is not centered (max |column mean| = {worst:e}); center it first"
        )));
    }
    Ok(())
}

/// Principal directions and standard deviations of centered data.
pub fn spectral<T: Real>(
    setc: &EmbeddingSet<T>,
    policy: RankPolicy,
) -> Result<SpectralDecomposition<T>> {
    require_centered(setc)?;
    let x = setc.matrix();
    let (n, d) = x.shape();
    let scaled = x / T::from_count(n).sqrt();

    let (mut u, values) = if n >= d {
        let svd = SVD::new(scaled, false, true);
        let v_t = svd.v_t.expect("v_t requested");
        (v_t.transpose(), svd.singular_values)
    } else {
        // Fewer rows than columns: the thin SVD of Xᵀ spans at most n directions,
        // the rest of the basis carries singular value zero.
        let svd = SVD::new(scaled.transpose(), true, false);
        let thin = svd.u.expect("u requested");
        let u = linalg::complete_orthonormal_basis(&thin);
        let mut values = DVector::zeros(d);
        values.rows_mut(0, n).copy_from(&svd.singular_values);
        (u, values)
    };

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite").then(a.cmp(&b)));
    u = linalg::select_columns(&u, &order);
    linalg::canonical_column_signs(&mut u);
    let singular_values = DVector::from_iterator(order.len(), order.iter().map(|&i| values[i]));

    let cutoff = T::lit(RANK_TOLERANCE) * singular_values.max();
    let rank = singular_values.iter().filter(|s| **s > cutoff).count();
    if rank < d && policy == RankPolicy::Strict {
        return Err(Error::RankDeficient { rank, dim: d });
    }
    Ok(SpectralDecomposition { u, singular_values, rank })
}

/// `Z = X U D⁻¹`, columns by descending variance of the input.
pub fn pca_whiten<T: Real>(
    setc: &EmbeddingSet<T>,
    policy: RankPolicy,
) -> Result<(EmbeddingSet<T>, LinearMap<T>)> {
    let spec = spectral(setc, policy)?;
    let r = spec.rank;
    let inv = DMatrix::from_diagonal(&spec.singular_values.rows(0, r).map(|s| T::one() / s));
    let a = spec.u.columns(0, r) * inv;
    let map = LinearMap::new(MapKind::PcaWhiten, DVector::zeros(setc.ncols()), a)?;
    let mut out = map.apply(setc)?;
    out.meta_mut().provenance = provenance(setc.meta(), "pca-whiten");
    Ok((out, map))
}

/// `Y = X Σ^{-1/2}` with `Σ^{-1/2} = U D⁻¹ Uᵀ`. Requires full rank.
pub fn zca_whiten<T: Real>(setc: &EmbeddingSet<T>) -> Result<(EmbeddingSet<T>, LinearMap<T>)> {
    let spec = spectral(setc, RankPolicy::Strict)?;
    let inv = DMatrix::from_diagonal(&spec.singular_values.map(|s| T::one() / s));
    let m = &spec.u * inv * spec.u.transpose();
    let map = LinearMap::new(MapKind::ZcaWhiten, DVector::zeros(setc.ncols()), m)?;
    let mut out = map.apply(setc)?;
    out.meta_mut().provenance = provenance(setc.meta(), "zca-whiten");
    Ok((out, map))
}

/// Unwhitened rotation into the principal directions, `X U`.
pub fn pca_rotate<T: Real>(
    setc: &EmbeddingSet<T>,
    policy: RankPolicy,
) -> Result<(EmbeddingSet<T>, LinearMap<T>)> {
    let spec = spectral(setc, policy)?;
    let map = LinearMap::new(MapKind::PcaRotate, DVector::zeros(setc.ncols()), spec.u)?;
    let mut out = map.apply(setc)?;
    out.meta_mut().centered = true;
    out.meta_mut().provenance = provenance(setc.meta(), "pca-rotate");
    Ok((out, map))
}

/// Checks `YᵀY/n = I` and zero column means, both against `tol`.
pub fn whiteness_report<T: Real>(set: &EmbeddingSet<T>, tol: f64) -> EvalReport {
    let m = set.matrix();
    let gram_dev = linalg::max_identity_deviation(&linalg::gram_over_n(m)).as_f64();
    let mean_dev = linalg::column_means(m).amax().as_f64();
    let mut report = EvalReport::new("whiteness")
        .metric("max_gram_deviation", gram_dev)
        .metric("max_column_mean", mean_dev)
        .metric("tol", tol);
    if gram_dev > tol {
        report.flags.push("covariance".into());
    }
    if mean_dev > tol {
        report.flags.push("mean".into());
    }
    report.passed = Some(report.flags.is_empty());
    report
}

/// Whether `set` passes [`whiteness_report`] at `tol`.
pub fn is_whitened<T: Real>(set: &EmbeddingSet<T>, tol: f64) -> bool {
    whiteness_report(set, tol).passed == Some(true)
}
