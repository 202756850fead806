//! Per-axis non-Gaussianity measures.
//!
//! For a standardized column `x` (mean 0, variance 1):
//!
//! * skewness `E[x³]`
//! * excess kurtosis `E[x⁴] − 3`
//! * logcosh gap `(E[log cosh x] − E[log cosh z])²`
//! * gauss gap `(E[−exp(−x²/2)] − E[−exp(−z²/2)])²`
//!
//! where `z ~ N(0, 1)`. Expectations are population sample means (divide by `n`).
//! Columns further than [`STANDARDIZE_TOLERANCE`] from mean 0 / variance 1 are
//! standardized first, and the result is flagged.

use serde::{Deserialize, Serialize};

use crate::embedstore::EmbeddingSet;
use crate::error::{Error, Result};
use crate::report::{EvalReport, Table};
use crate::Real;

/// `E[log cosh z]` for standard normal `z`.
pub const LOGCOSH_GAUSSIAN_MEAN: f64 = 0.374567207491438;
/// `E[−exp(−z²/2)] = −1/√2` for standard normal `z`.
pub const GAUSS_GAUSSIAN_MEAN: f64 = -std::f64::consts::FRAC_1_SQRT_2;

pub const STANDARDIZE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contrast {
    #[default]
    Logcosh,
    Gauss,
}

impl Contrast {
    /// `G(x)`.
    pub fn value<T: Real>(self, x: T) -> T {
        match self {
            Contrast::Logcosh => log_cosh(x),
            Contrast::Gauss => -(-(x * x) / T::lit(2.0)).exp(),
        }
    }

    /// `E[G(z)]` for standard normal `z`.
    pub fn gaussian_mean(self) -> f64 {
        match self {
            Contrast::Logcosh => LOGCOSH_GAUSSIAN_MEAN,
            Contrast::Gauss => GAUSS_GAUSSIAN_MEAN,
        }
    }
}

impl std::str::FromStr for Contrast {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logcosh" => Ok(Contrast::Logcosh),
            "gauss" | "exp" => Ok(Contrast::Gauss),
            other => Err(Error::invalid(format!("unknown contrast {other:?}"))),
        }
    }
}

/// Overflow-free `log cosh x = |x| + log(1 + e^{−2|x|}) − log 2`.
pub fn log_cosh<T: Real>(x: T) -> T {
    let a = x.abs();
    a + (-(a + a)).exp().ln_1p() - T::ln_2()
}

/// A column rescaled to mean 0 / variance 1 if it was not already close.
struct Standardized<T> {
    values: Vec<T>,
    rescaled: bool,
}

fn standardized_column<T: Real>(set: &EmbeddingSet<T>, j: usize) -> Result<Standardized<T>> {
    let col = set.matrix().column(j);
    let n = T::from_count(col.len());
    let mean = col.sum() / n;
    let var = col.iter().map(|v| (*v - mean) * (*v - mean)).fold(T::zero(), |a, b| a + b) / n;
    if var <= T::zero() {
        return Err(Error::invalid(format!("axis {j} has zero variance")));
    }
    let tol = T::lit(STANDARDIZE_TOLERANCE);
    let raw_var = col.iter().map(|v| *v * *v).fold(T::zero(), |a, b| a + b) / n;
    if mean.abs() <= tol && (raw_var - T::one()).abs() <= tol {
        return Ok(Standardized { values: col.iter().copied().collect(), rescaled: false });
    }
    let sd = var.sqrt();
    Ok(Standardized { values: col.iter().map(|v| (*v - mean) / sd).collect(), rescaled: true })
}

fn mean_of<T: Real>(values: impl Iterator<Item = T>, n: usize) -> T {
    values.fold(T::zero(), |a, b| a + b) / T::from_count(n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisMoments<T> {
    pub axis: usize,
    pub skewness: T,
    pub excess_kurtosis: T,
}

/// Third moment and fourth moment minus 3 per column, plus whether any
/// column had to be standardized.
pub fn axis_moments<T: Real>(y: &EmbeddingSet<T>) -> Result<(Vec<AxisMoments<T>>, bool)> {
    let mut rescaled = false;
    let mut out = Vec::with_capacity(y.ncols());
    for j in 0..y.ncols() {
        let col = standardized_column(y, j)?;
        rescaled |= col.rescaled;
        let n = col.values.len();
        let skewness = mean_of(col.values.iter().map(|v| *v * *v * *v), n);
        let fourth = mean_of(col.values.iter().map(|v| (*v * *v) * (*v * *v)), n);
        out.push(AxisMoments { axis: j, skewness, excess_kurtosis: fourth - T::lit(3.0) });
    }
    Ok((out, rescaled))
}

/// Sample skewness of one column, standardizing as needed.
pub(crate) fn column_skewness<T: Real>(y: &EmbeddingSet<T>, j: usize) -> Result<T> {
    let col = standardized_column(y, j)?;
    let n = col.values.len();
    Ok(mean_of(col.values.iter().map(|v| *v * *v * *v), n))
}

/// `(mean G(x) − E G(z))²` per column.
pub fn contrast_gap<T: Real>(y: &EmbeddingSet<T>, contrast: Contrast) -> Result<(Vec<T>, bool)> {
    let mut rescaled = false;
    let reference = T::lit(contrast.gaussian_mean());
    let mut out = Vec::with_capacity(y.ncols());
    for j in 0..y.ncols() {
        let col = standardized_column(y, j)?;
        rescaled |= col.rescaled;
        let n = col.values.len();
        let diff = mean_of(col.values.iter().map(|v| contrast.value(*v)), n) - reference;
        out.push(diff * diff);
    }
    Ok((out, rescaled))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisRecord<T> {
    pub axis: usize,
    pub skewness: T,
    pub excess_kurtosis: T,
    pub logcosh_gap: T,
    pub gauss_gap: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisDiagnostics<T> {
    pub axes: Vec<AxisRecord<T>>,
    /// Some column was not within tolerance of mean 0 / variance 1.
    pub standardized_internally: bool,
}

fn summarize(mut values: Vec<f64>) -> Summary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    values.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    };
    Summary { mean, median }
}

impl<T: Real> AxisDiagnostics<T> {
    fn column(&self, f: impl Fn(&AxisRecord<T>) -> T) -> Vec<f64> {
        self.axes.iter().map(|r| f(r).as_f64()).collect()
    }

    pub fn skewness_summary(&self) -> Summary {
        summarize(self.column(|r| r.skewness))
    }

    pub fn kurtosis_summary(&self) -> Summary {
        summarize(self.column(|r| r.excess_kurtosis))
    }

    pub fn logcosh_summary(&self) -> Summary {
        summarize(self.column(|r| r.logcosh_gap))
    }

    pub fn gauss_summary(&self) -> Summary {
        summarize(self.column(|r| r.gauss_gap))
    }

    /// One row per axis.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["axis", "skewness", "excess_kurtosis", "logcosh_gap", "gauss_gap"]);
        for r in &self.axes {
            t.push(vec![
                r.axis.to_string(),
                r.skewness.as_f64().to_string(),
                r.excess_kurtosis.as_f64().to_string(),
                r.logcosh_gap.as_f64().to_string(),
                r.gauss_gap.as_f64().to_string(),
            ]);
        }
        t
    }

    /// Mean and median of each measure.
    pub fn summary_report(&self) -> EvalReport {
        let mut r = EvalReport::new("nongaussianity");
        for (name, s) in [
            ("skewness", self.skewness_summary()),
            ("excess_kurtosis", self.kurtosis_summary()),
            ("logcosh_gap", self.logcosh_summary()),
            ("gauss_gap", self.gauss_summary()),
        ] {
            r.metrics.insert(format!("{name}_mean"), s.mean);
            r.metrics.insert(format!("{name}_median"), s.median);
        }
        r.metrics.insert("axes".into(), self.axes.len() as f64);
        if self.standardized_internally {
            r.flags.push("standardized_internally".into());
        }
        r.table = Some(self.to_table());
        r
    }
}

/// All four measures for every axis.
pub fn diagnose<T: Real>(y: &EmbeddingSet<T>) -> Result<AxisDiagnostics<T>> {
    let (moments, r1) = axis_moments(y)?;
    let (logcosh, _) = contrast_gap(y, Contrast::Logcosh)?;
    let (gauss, _) = contrast_gap(y, Contrast::Gauss)?;
    let axes = moments
        .into_iter()
        .zip(logcosh)
        .zip(gauss)
        .map(|((m, lc), g)| AxisRecord {
            axis: m.axis,
            skewness: m.skewness,
            excess_kurtosis: m.excess_kurtosis,
            logcosh_gap: lc,
            gauss_gap: g,
        })
        .collect();
    Ok(AxisDiagnostics { axes, standardized_internally: r1 })
}
