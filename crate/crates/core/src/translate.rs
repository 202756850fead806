//! Supervised cross-lingual baselines and nearest-neighbor retrieval.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::axisalign::{self, TranslationLexicon};
use crate::embedstore::{normalize_rows, EmbeddingSet};
use crate::error::{Error, Result};
use crate::whitening::{self, LinearMap, MapKind};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrievalMethod {
    #[default]
    Csls,
    CosineKnn,
}

impl std::str::FromStr for RetrievalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csls" => Ok(Self::Csls),
            "cosine-knn" | "knn" | "cosine" => Ok(Self::CosineKnn),
            other => Err(Error::invalid(format!("unknown retrieval method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub method: RetrievalMethod,
    pub csls_k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { method: RetrievalMethod::Csls, csls_k: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    #[default]
    LeastSquares,
    Procrustes,
}

impl std::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ls" | "least-squares" => Ok(Self::LeastSquares),
            "procrustes" | "orthogonal" => Ok(Self::Procrustes),
            other => Err(Error::invalid(format!("unknown fit method {other:?}"))),
        }
    }
}

fn check_pairing<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::invalid(format!(
            "{} source rows paired with {} target rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::invalid("no paired rows"));
    }
    Ok(())
}

/// Source and target rows stacked in lexicon order.
pub fn paired_rows<T: Real>(
    a: &EmbeddingSet<T>,
    b: &EmbeddingSet<T>,
    lex: &TranslationLexicon,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let ia = a.label_index();
    let ib = b.label_index();
    let mut ra = Vec::with_capacity(lex.len());
    let mut rb = Vec::with_capacity(lex.len());
    for p in &lex.pairs {
        match (ia.get(p.source.as_str()), ib.get(p.target.as_str())) {
            (Some(&i), Some(&j)) => {
                ra.push(i);
                rb.push(j);
            }
            _ => {
                return Err(Error::invalid(format!(
                    "pair ({}, {}) does not resolve in both sets",
                    p.source, p.target
                )))
            }
        }
    }
    let x = DMatrix::from_fn(ra.len(), a.ncols(), |i, j| a.matrix()[(ra[i], j)]);
    let y = DMatrix::from_fn(rb.len(), b.ncols(), |i, j| b.matrix()[(rb[i], j)]);
    Ok((x, y))
}

/// Minimum-norm minimizer of `‖XW − Y‖_F` via the SVD pseudo-inverse.
pub fn fit_least_squares<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>) -> Result<LinearMap<T>> {
    check_pairing(x, y)?;
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * T::eps() * T::from_count(x.nrows().max(x.ncols()));
    let w = svd
        .solve(y, cutoff)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;
    LinearMap::new(MapKind::Translation, DVector::zeros(x.ncols()), w)
}

/// Orthogonal `W = U Vᵀ` from the SVD `XᵀY = U Σ Vᵀ`.
pub fn fit_procrustes<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>) -> Result<LinearMap<T>> {
    check_pairing(x, y)?;
    if x.ncols() != y.ncols() {
        return Err(Error::invalid(format!(
            "orthogonal map needs equal dimensions, got {} and {}",
            x.ncols(),
            y.ncols()
        )));
    }
    let svd = x.tr_mul(y).svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::Numerical("SVD did not return singular vectors".into()));
    };
    LinearMap::new(MapKind::Translation, DVector::zeros(x.ncols()), u * v_t)
}

pub fn fit<T: Real>(method: FitMethod, x: &DMatrix<T>, y: &DMatrix<T>) -> Result<LinearMap<T>> {
    match method {
        FitMethod::LeastSquares => fit_least_squares(x, y),
        FitMethod::Procrustes => fit_procrustes(x, y),
    }
}

/// `‖XW − Y‖_F²`.
pub fn residual<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>, w: &DMatrix<T>) -> T {
    (x * w - y).norm_squared()
}

/// Centers each set, then scales every row to unit norm.
pub fn preprocess_supervised<T: Real>(
    x: &EmbeddingSet<T>,
    y: &EmbeddingSet<T>,
) -> Result<(EmbeddingSet<T>, EmbeddingSet<T>)> {
    let prep = |s: &EmbeddingSet<T>| -> Result<EmbeddingSet<T>> {
        let (c, _) = whitening::center(s)?;
        normalize_rows(&c)
    };
    Ok((prep(x)?, prep(y)?))
}

fn unit_rows<T: Real>(m: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let norm = row.norm();
        if norm == T::zero() || !norm.is_finite() {
            return Err(Error::invalid(format!("{what} row {i} cannot be normalized")));
        }
        row /= norm;
    }
    Ok(out)
}

fn mean_of_top<T: Real>(mut values: Vec<T>, k: usize) -> T {
    let k = k.min(values.len());
    if k < values.len() {
        values.select_nth_unstable_by(k - 1, |a, b| b.partial_cmp(a).expect("finite cosine"));
    }
    values[..k].iter().copied().fold(T::zero(), |s, v| s + v) / T::from_count(k)
}

/// Index of the best target for every query row. Rows are compared by cosine;
/// CSLS penalizes hub targets by their mean similarity to the `csls_k` nearest
/// queries (or all queries when there are fewer).
pub fn csls_retrieve<T: Real>(
    queries: &DMatrix<T>,
    targets: &DMatrix<T>,
    cfg: &RetrievalConfig,
) -> Result<Vec<usize>> {
    if cfg.csls_k < 1 {
        return Err(Error::invalid("csls_k must be at least 1"));
    }
    if targets.nrows() == 0 {
        return Err(Error::invalid("no targets to retrieve from"));
    }
    if queries.ncols() != targets.ncols() {
        return Err(Error::invalid(format!(
            "queries have {} columns, targets {}",
            queries.ncols(),
            targets.ncols()
        )));
    }
    if cfg.method == RetrievalMethod::Csls && cfg.csls_k > targets.nrows() {
        return Err(Error::invalid(format!(
            "csls_k = {} exceeds the {} available targets",
            cfg.csls_k,
            targets.nrows()
        )));
    }
    let q = unit_rows(queries, "query")?;
    let t = unit_rows(targets, "target")?;
    let cos = &q * t.transpose();
    let nq = cos.nrows();
    let nt = cos.ncols();
    let two = T::lit(2.0);

    let (r_t, r_s): (Vec<T>, Vec<T>) = match cfg.method {
        RetrievalMethod::CosineKnn => (vec![T::zero(); nq], vec![T::zero(); nt]),
        RetrievalMethod::Csls => {
            let r_t = (0..nq)
                .into_par_iter()
                .map(|i| mean_of_top(cos.row(i).iter().copied().collect(), cfg.csls_k))
                .collect();
            let r_s = (0..nt)
                .into_par_iter()
                .map(|j| mean_of_top(cos.column(j).iter().copied().collect(), cfg.csls_k))
                .collect();
            (r_t, r_s)
        }
    };
    let best = (0..nq)
        .into_par_iter()
        .map(|i| {
            let mut arg = 0;
            let mut top = T::zero();
            for j in 0..nt {
                let score = match cfg.method {
                    RetrievalMethod::CosineKnn => cos[(i, j)],
                    RetrievalMethod::Csls => two * cos[(i, j)] - r_t[i] - r_s[j],
                };
                if j == 0 || score > top {
                    arg = j;
                    top = score;
                }
            }
            arg
        })
        .collect();
    Ok(best)
}

/// Source label → accepted target labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldDictionary {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl GoldDictionary {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut entries: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (s, t) in pairs {
            entries.entry(s.into()).or_default().insert(t.into());
        }
        Self { entries }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_pairs(axisalign::load_pairs(path)?))
    }

    pub fn get(&self, source: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(source)
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Fraction of unique sources whose prediction is an accepted translation.
/// When a source occurs more than once, its first prediction counts.
pub fn top1_accuracy(predictions: &[(String, String)], gold: &GoldDictionary) -> Result<f64> {
    let mut seen: HashMap<&str, bool> = HashMap::new();
    for (source, predicted) in predictions {
        let accepted = gold
            .get(source)
            .ok_or_else(|| Error::invalid(format!("no gold entry for {source:?}")))?;
        seen.entry(source.as_str()).or_insert_with(|| accepted.contains(predicted));
    }
    if seen.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    let correct = seen.values().filter(|c| **c).count();
    Ok(correct as f64 / seen.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub source: String,
    pub predicted: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationOutcome {
    pub predictions: Vec<Prediction>,
    pub accuracy: f64,
    /// Gold sources absent from the source vocabulary.
    pub skipped: usize,
}

/// Retrieves a translation for every gold source present in `mapped`, among
/// all rows of `targets`.
pub fn evaluate_translation<T: Real>(
    mapped: &EmbeddingSet<T>,
    targets: &EmbeddingSet<T>,
    gold: &GoldDictionary,
    cfg: &RetrievalConfig,
) -> Result<TranslationOutcome> {
    if mapped.ncols() != targets.ncols() {
        return Err(Error::invalid(format!(
            "mapped source has {} columns, target {}",
            mapped.ncols(),
            targets.ncols()
        )));
    }
    let index = mapped.label_index();
    let mut sources = Vec::new();
    let mut rows = Vec::new();
    let mut skipped = 0;
    for s in gold.sources() {
        match index.get(s) {
            Some(&r) => {
                sources.push(s.to_string());
                rows.push(r);
            }
            None => skipped += 1,
        }
    }
    if sources.is_empty() {
        return Err(Error::invalid("no gold source word is in the source vocabulary"));
    }
    let queries = DMatrix::from_fn(rows.len(), mapped.ncols(), |i, j| mapped.matrix()[(rows[i], j)]);
    let best = csls_retrieve(&queries, targets.matrix(), cfg)?;
    let pairs: Vec<(String, String)> = sources
        .into_iter()
        .zip(best)
        .map(|(s, j)| (s, targets.labels()[j].clone()))
        .collect();
    let accuracy = top1_accuracy(&pairs, gold)?;
    let predictions = pairs
        .into_iter()
        .map(|(source, predicted)| {
            let correct = gold.get(&source).is_some_and(|g| g.contains(&predicted));
            Prediction { source, predicted, correct }
        })
        .collect();
    Ok(TranslationOutcome { predictions, accuracy, skipped })
}

pub fn write_predictions_csv(predictions: &[Prediction], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["source", "predicted", "correct"])?;
    for p in predictions {
        out.write_record([p.source.as_str(), p.predicted.as_str(), if p.correct { "true" } else { "false" }])?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_predictions_csv(predictions: &[Prediction], path: impl AsRef<Path>) -> Result<()> {
    write_predictions_csv(predictions, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        linalg::normal_matrix(rows, cols, 1.0, &mut rng)
    }

    #[test]
    fn least_squares_identity_and_planted() {
        let x = gaussian(30, 4, 1);
        let w = fit_least_squares(&x, &x).unwrap();
        assert!((w.matrix.clone() - DMatrix::identity(4, 4)).amax() < 1e-10);
        let w0 = gaussian(4, 3, 2);
        let w = fit_least_squares(&x, &(&x * &w0)).unwrap();
        assert!((w.matrix - w0).amax() < 1e-8);
    }

    #[test]
    fn least_squares_rank_deficient_is_minimum_norm() {
        let x = dmatrix![1.0, 1.0; 2.0, 2.0; 3.0, 3.0];
        let y = dmatrix![2.0; 4.0; 6.0];
        let w = fit_least_squares(&x, &y).unwrap();
        assert!((w.matrix - dmatrix![1.0; 1.0]).amax() < 1e-10);
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r: DMatrix<f64> = linalg::random_orthogonal(5, &mut rng);
        let x = gaussian(40, 5, 4);
        let w = fit_procrustes(&x, &(&x * &r)).unwrap();
        assert!((w.matrix.clone() - r).amax() < 1e-8);
        assert!(linalg::orthogonality_error(&w.matrix) < 1e-8);
        let w = fit_procrustes(&x, &x).unwrap();
        assert!((w.matrix - DMatrix::identity(5, 5)).amax() < 1e-10);
    }

    #[test]
    fn fits_beat_random_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian(50, 4, 6);
        let noise = gaussian(50, 4, 7) * 0.3;
        let y = &x * gaussian(4, 4, 8) + noise;
        let ls = fit_least_squares(&x, &y).unwrap();
        let pr = fit_procrustes(&x, &y).unwrap();
        let r_ls = residual(&x, &y, &ls.matrix);
        let r_pr = residual(&x, &y, &pr.matrix);
        assert!(r_ls <= r_pr);
        for _ in 0..50 {
            let cand: DMatrix<f64> = linalg::normal_matrix(4, 4, 1.0, &mut rng);
            assert!(r_ls <= residual(&x, &y, &cand));
            let rot: DMatrix<f64> = linalg::random_orthogonal(4, &mut rng);
            assert!(r_pr <= residual(&x, &y, &rot) + 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let x = gaussian(5, 3, 1);
        assert!(fit_least_squares(&x, &gaussian(4, 3, 2)).is_err());
        assert!(fit_procrustes(&x, &gaussian(5, 2, 2)).is_err());
    }

    #[test]
    fn preprocess_hand_example() {
        let set = EmbeddingSet::from_rows(&[vec![1.0, 1.0], vec![3.0, 3.0]]).unwrap();
        let (p, _) = preprocess_supervised(&set, &set).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((p.matrix() - dmatrix![-h, -h; h, h]).amax() < 1e-12);
        let (again, _) = preprocess_supervised(&p, &p).unwrap();
        assert!((again.matrix() - p.matrix()).amax() < 1e-12);
    }

    #[test]
    fn preprocess_random() {
        let set = EmbeddingSet::new((0..25).map(|i| i.to_string()).collect(), gaussian(25, 6, 9)).unwrap();
        let (p, _) = preprocess_supervised(&set, &set).unwrap();
        for row in p.matrix().row_iter() {
            assert!((row.norm() - 1.0).abs() < 1e-12);
        }
        let (c, _) = whitening::center(&set).unwrap();
        assert!(linalg::column_means(c.matrix()).amax() < 1e-10);
    }

    #[test]
    fn single_target_and_self_retrieval() {
        let q = gaussian(6, 3, 10);
        let t = gaussian(1, 3, 11);
        let cfg = RetrievalConfig { method: RetrievalMethod::Csls, csls_k: 1 };
        assert_eq!(csls_retrieve(&q, &t, &cfg).unwrap(), vec![0; 6]);
        assert_eq!(csls_retrieve(&q, &q, &cfg).unwrap(), (0..6).collect::<Vec<_>>());
        let knn = RetrievalConfig { method: RetrievalMethod::CosineKnn, csls_k: 1 };
        assert_eq!(csls_retrieve(&q, &q, &knn).unwrap(), (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn k_larger_than_targets_is_rejected() {
        let q = gaussian(3, 2, 1);
        assert!(csls_retrieve(&q, &q, &RetrievalConfig::default()).is_err());
    }

    #[test]
    fn retrieval_ignores_target_scale() {
        let q = gaussian(10, 4, 12);
        let t = gaussian(15, 4, 13);
        let cfg = RetrievalConfig { method: RetrievalMethod::Csls, csls_k: 3 };
        assert_eq!(csls_retrieve(&q, &t, &cfg).unwrap(), csls_retrieve(&q, &(t.clone() * 7.5), &cfg).unwrap());
    }

    #[test]
    fn accuracy_counts_unique_sources() {
        let gold = GoldDictionary::from_pairs([("a", "x"), ("a", "y"), ("b", "z")]);
        let p = |s: &str, t: &str| (s.to_string(), t.to_string());
        assert_eq!(top1_accuracy(&[p("a", "y"), p("b", "z")], &gold).unwrap(), 1.0);
        assert_eq!(top1_accuracy(&[p("a", "z"), p("b", "x")], &gold).unwrap(), 0.0);
        assert_eq!(top1_accuracy(&[p("a", "x"), p("a", "z"), p("b", "x")], &gold).unwrap(), 0.5);
        assert!(top1_accuracy(&[p("c", "x")], &gold).is_err());
    }

    #[test]
    fn evaluation_end_to_end() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let labels: Vec<String> = (0..12).map(|i| format!("s{i}")).collect();
        let tlabels: Vec<String> = (0..12).map(|i| format!("t{i}")).collect();
        let m = DMatrix::from_fn(12, 5, |_, _| rng.random::<f64>() - 0.5);
        let src = EmbeddingSet::new(labels.clone(), m.clone()).unwrap();
        let tgt = EmbeddingSet::new(tlabels.clone(), m).unwrap();
        let mut pairs: Vec<(String, String)> = labels.iter().cloned().zip(tlabels).collect();
        pairs.push(("missing".into(), "t0".into()));
        let gold = GoldDictionary::from_pairs(pairs);
        let cfg = RetrievalConfig { method: RetrievalMethod::Csls, csls_k: 3 };
        let out = evaluate_translation(&src, &tgt, &gold, &cfg).unwrap();
        assert_eq!(out.accuracy, 1.0);
        assert_eq!(out.skipped, 1);
        let mut buf = Vec::new();
        write_predictions_csv(&out.predictions, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("source,predicted,correct\n"));
        assert_eq!(text.lines().count(), 13);
    }
}
