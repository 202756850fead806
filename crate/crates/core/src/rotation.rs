//! Crawford–Ferguson parsimony criteria and orthogonal rotation toward them.
//!
//! ```text
//! f_κ(Y) = (1−κ) Σ_i Σ_j Σ_{k≠j} y_ij² y_ik²  +  κ Σ_k Σ_i Σ_{j≠i} y_ik² y_jk²
//! ```
//!
//! Both double sums are evaluated through `Σ_{k≠j} a_j a_k = (Σ a)² − Σ a²`.
//! Minimization over orthogonal `R` uses gradient projection with an SVD
//! retraction and Armijo backtracking.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedstore::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg;
use crate::whitening::{self, LinearMap};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CfPreset {
    Quartimax,
    Varimax,
    Parsimax,
    Facparsimony,
    Custom(f64),
}

impl CfPreset {
    /// `κ` for an `n × d` matrix.
    pub fn kappa(self, n: usize, d: usize) -> f64 {
        match self {
            CfPreset::Quartimax => 0.0,
            CfPreset::Varimax => 1.0 / n as f64,
            CfPreset::Parsimax => (d as f64 - 1.0) / (n as f64 + d as f64 - 2.0),
            CfPreset::Facparsimony => 1.0,
            CfPreset::Custom(k) => k,
        }
    }

    pub const NAMED: [CfPreset; 4] =
        [CfPreset::Quartimax, CfPreset::Varimax, CfPreset::Parsimax, CfPreset::Facparsimony];

    pub fn name(self) -> &'static str {
        match self {
            CfPreset::Quartimax => "quartimax",
            CfPreset::Varimax => "varimax",
            CfPreset::Parsimax => "parsimax",
            CfPreset::Facparsimony => "facparsimony",
            CfPreset::Custom(_) => "custom",
        }
    }
}

impl std::str::FromStr for CfPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quartimax" => Ok(CfPreset::Quartimax),
            "varimax" => Ok(CfPreset::Varimax),
            "parsimax" => Ok(CfPreset::Parsimax),
            "facparsimony" => Ok(CfPreset::Facparsimony),
            other => match other.parse::<f64>() {
                Ok(k) => Ok(CfPreset::Custom(k)),
                Err(_) => Err(Error::invalid(format!(
                    "unknown rotation preset {other:?} (quartimax|varimax|parsimax|facparsimony|<kappa>)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfCriterion {
    pub kappa: f64,
    pub preset: CfPreset,
}

impl CfCriterion {
    pub fn new(preset: CfPreset, n: usize, d: usize) -> Result<Self> {
        let kappa = preset.kappa(n, d);
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::invalid(format!("kappa must lie in [0, 1], got {kappa}")));
        }
        Ok(Self { kappa, preset })
    }

    pub fn for_set<T: Real>(preset: CfPreset, set: &EmbeddingSet<T>) -> Result<Self> {
        Self::new(preset, set.nrows(), set.ncols())
    }
}

fn squared<T: Real>(y: &DMatrix<T>) -> DMatrix<T> {
    y.map(|v| v * v)
}

fn criterion_of<T: Real>(y: &DMatrix<T>, kappa: T) -> T {
    let sq = squared(y);
    let mut rows = T::zero();
    for r in sq.row_iter() {
        let s = r.sum();
        rows += s * s - r.iter().map(|a| *a * *a).fold(T::zero(), |p, q| p + q);
    }
    let mut cols = T::zero();
    for c in sq.column_iter() {
        let s = c.sum();
        cols += s * s - c.iter().map(|a| *a * *a).fold(T::zero(), |p, q| p + q);
    }
    (T::one() - kappa) * rows + kappa * cols
}

/// `∂f_κ/∂Y = 4 Y ∘ [(1−κ)(rowsum − Y²) + κ(colsum − Y²)]`.
fn criterion_gradient<T: Real>(y: &DMatrix<T>, kappa: T) -> DMatrix<T> {
    let sq = squared(y);
    let row_sums: Vec<T> = sq.row_iter().map(|r| r.sum()).collect();
    let col_sums: Vec<T> = sq.column_iter().map(|c| c.sum()).collect();
    let four = T::lit(4.0);
    DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| {
        let a = sq[(i, j)];
        four * y[(i, j)] * ((T::one() - kappa) * (row_sums[i] - a) + kappa * (col_sums[j] - a))
    })
}

/// Exact `f_κ(Y)` in `O(nd)`.
pub fn cf_value<T: Real>(y: &EmbeddingSet<T>, crit: &CfCriterion) -> T {
    criterion_of(y.matrix(), T::lit(crit.kappa))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotateOptions {
    pub max_iter: usize,
    /// Threshold on the projected-gradient Frobenius norm of `f_κ(YR) / f_κ(Y)`.
    pub tol: f64,
    pub seed: u64,
    /// Random orthogonal starts in addition to the identity start.
    pub starts: usize,
}

impl Default for RotateOptions {
    fn default() -> Self {
        Self { max_iter: 1000, tol: 1e-8, seed: 0, starts: 1 }
    }
}

/// Initial step of the backtracking line search.
pub const INITIAL_STEP: f64 = 1.0;
pub const STEP_SHRINK: f64 = 0.5;
pub const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone)]
pub struct CfRotation<T: Real> {
    pub set: EmbeddingSet<T>,
    pub map: LinearMap<T>,
    pub value: T,
    pub converged: bool,
    pub iterations: usize,
    /// `f_κ(Y R_t)` after each accepted step of the winning start, starting at `R_0`.
    pub trace: Vec<T>,
}

struct StartOutcome<T: Real> {
    rotation: DMatrix<T>,
    value: T,
    converged: bool,
    iterations: usize,
    trace: Vec<T>,
}

fn run_start<T: Real>(
    y: &DMatrix<T>,
    kappa: T,
    scale: T,
    mut t: DMatrix<T>,
    opts: &RotateOptions,
) -> StartOutcome<T> {
    let tol = T::lit(opts.tol);
    let half = T::lit(0.5);
    let mut l = y * &t;
    let mut f = criterion_of(&l, kappa);
    let mut trace = vec![f];
    let mut step = T::lit(INITIAL_STEP);
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        let g = y.tr_mul(&criterion_gradient(&l, kappa)) * scale;
        let m = t.tr_mul(&g);
        let sym = (&m + m.transpose()) * half;
        let gp = &g - &t * sym;
        let s = gp.norm();
        if s <= tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut accepted = None;
        let mut trial = step;
        for _ in 0..=MAX_HALVINGS {
            let candidate = linalg::polar_orthogonal(&(&t - &gp * trial));
            let lc = y * &candidate;
            let fc = criterion_of(&lc, kappa);
            if (fc * scale) < (f * scale) - half * s * s * trial {
                accepted = Some((candidate, lc, fc));
                break;
            }
            trial *= T::lit(STEP_SHRINK);
        }
        let Some((candidate, lc, fc)) = accepted else {
            // No descent at the smallest step: stationary to working precision.
            break;
        };
        t = candidate;
        l = lc;
        f = fc;
        trace.push(f);
        step = trial + trial;
    }
    StartOutcome { rotation: t, value: f, converged, iterations, trace }
}

/// Orthogonal `R` minimizing `f_κ(Y R)`, starting from the identity and from
/// `opts.starts` seeded random rotations; the lowest final criterion wins.
pub fn cf_rotate<T: Real>(
    y: &EmbeddingSet<T>,
    crit: &CfCriterion,
    opts: &RotateOptions,
) -> Result<CfRotation<T>> {
    if opts.max_iter < 1 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    let x = y.matrix();
    let d = x.ncols();
    let kappa = T::lit(crit.kappa);
    let f0 = criterion_of(x, kappa);
    let scale = if f0 > T::zero() { T::one() / f0 } else { T::one() };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = run_start(x, kappa, scale, DMatrix::identity(d, d), opts);
    for _ in 0..opts.starts {
        let init: DMatrix<T> = linalg::random_orthogonal(d, &mut rng);
        let outcome = run_start(x, kappa, scale, init, opts);
        if outcome.value < best.value {
            best = outcome;
        }
    }

    let map = LinearMap::rotation(best.rotation)?;
    let mut set = map.apply(y)?;
    set.meta_mut().provenance = whitening::provenance(y.meta(), &format!("cf-rotate {}", crit.preset.name()));
    Ok(CfRotation {
        set,
        map,
        value: best.value,
        converged: best.converged,
        iterations: best.iterations,
        trace: best.trace,
    })
}
