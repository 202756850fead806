//! Aligning the axes of two independently transformed embedding sets.
//!
//! Translation pairs link rows of a source set to rows of a target set. The
//! (weighted) Pearson correlation between every source axis and every target
//! axis over those pairs is matched greedily, highest first, and the target
//! columns are permuted into source order.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::embedstore::EmbeddingSet;
use crate::error::{Error, ParseErrorKind, Result};
use crate::linalg;
use crate::whitening;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    #[default]
    Uniform,
    /// `1 / (k_s · k_t)` where `k_s` and `k_t` count how often the pair's
    /// source and target labels occur in the filtered pair list.
    InverseFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconPair {
    pub source: String,
    pub target: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TranslationLexicon {
    pub pairs: Vec<LexiconPair>,
}

impl TranslationLexicon {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs `(label, label)` for every label the two sets share, in source order.
    pub fn identity<T: Real>(a: &EmbeddingSet<T>, b: &EmbeddingSet<T>) -> Result<Self> {
        let raw: Vec<(String, String)> =
            a.labels().iter().map(|l| (l.clone(), l.clone())).collect();
        build_lexicon(&raw, a, b, Weighting::Uniform)
    }
}

/// Reads two whitespace-separated labels per line. Extra columns are ignored.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let mut toks = line.split_ascii_whitespace();
        match (toks.next(), toks.next()) {
            (None, _) => continue,
            (Some(s), Some(t)) => pairs.push((s.to_string(), t.to_string())),
            (Some(_), None) => {
                return Err(Error::Parse {
                    line: i + 1,
                    kind: ParseErrorKind::MalformedRecord("expected \"<source> <target>\"".into()),
                })
            }
        }
    }
    Ok(pairs)
}

/// Keeps the pairs whose labels occur in both sets and assigns weights.
pub fn build_lexicon<T: Real>(
    raw_pairs: &[(String, String)],
    a: &EmbeddingSet<T>,
    b: &EmbeddingSet<T>,
    weighting: Weighting,
) -> Result<TranslationLexicon> {
    let ia = a.label_index();
    let ib = b.label_index();
    let kept: Vec<&(String, String)> = raw_pairs
        .iter()
        .filter(|(s, t)| ia.contains_key(s.as_str()) && ib.contains_key(t.as_str()))
        .collect();
    if kept.is_empty() {
        return Err(Error::invalid("no translation pair has both labels in vocabulary"));
    }
    let mut src_count: HashMap<&str, usize> = HashMap::new();
    let mut tgt_count: HashMap<&str, usize> = HashMap::new();
    for (s, t) in &kept {
        *src_count.entry(s.as_str()).or_default() += 1;
        *tgt_count.entry(t.as_str()).or_default() += 1;
    }
    let pairs = kept
        .into_iter()
        .map(|(s, t)| {
            let weight = match weighting {
                Weighting::Uniform => 1.0,
                Weighting::InverseFrequency => {
                    1.0 / (src_count[s.as_str()] * tgt_count[t.as_str()]) as f64
                }
            };
            LexiconPair { source: s.clone(), target: t.clone(), weight }
        })
        .collect();
    Ok(TranslationLexicon { pairs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCorrelation<T: Real> {
    /// `d_A × d_B`.
    pub matrix: DMatrix<T>,
    /// Axes with zero weighted variance; their rows/columns are 0.
    pub degenerate_source: Vec<usize>,
    pub degenerate_target: Vec<usize>,
}

fn weighted_centered<T: Real>(m: &DMatrix<T>, w: &[T], total: T) -> (DMatrix<T>, Vec<T>, Vec<bool>) {
    let (rows, cols) = m.shape();
    let mut out = m.clone();
    let mut ss = Vec::with_capacity(cols);
    let mut degenerate = Vec::with_capacity(cols);
    let eps = T::eps() * T::lit(100.0);
    for j in 0..cols {
        let mut mean = T::zero();
        let mut scale = T::zero();
        for i in 0..rows {
            mean += w[i] * m[(i, j)];
            scale = scale.max(m[(i, j)].abs());
        }
        mean /= total;
        let mut s = T::zero();
        for i in 0..rows {
            let v = m[(i, j)] - mean;
            out[(i, j)] = v;
            s += w[i] * v * v;
        }
        degenerate.push(s <= (eps * scale) * (eps * scale) * total);
        ss.push(s);
    }
    (out, ss, degenerate)
}

/// Weighted Pearson correlation of every source axis with every target axis
/// over the lexicon's pair rows.
pub fn cross_correlation<T: Real>(
    a: &EmbeddingSet<T>,
    b: &EmbeddingSet<T>,
    lex: &TranslationLexicon,
) -> Result<CrossCorrelation<T>> {
    let distinct: BTreeSet<(&str, &str)> =
        lex.pairs.iter().map(|p| (p.source.as_str(), p.target.as_str())).collect();
    if distinct.len() < 3 {
        return Err(Error::invalid(format!(
            "cross-correlation needs at least 3 distinct pairs, got {}",
            distinct.len()
        )));
    }
    if let Some(p) = lex.pairs.iter().find(|p| !(p.weight.is_finite() && p.weight > 0.0)) {
        return Err(Error::invalid(format!("pair ({}, {}) has weight {}", p.source, p.target, p.weight)));
    }
    let ia = a.label_index();
    let ib = b.label_index();
    let mut rows_a = Vec::with_capacity(lex.len());
    let mut rows_b = Vec::with_capacity(lex.len());
    for p in &lex.pairs {
        let (Some(&ra), Some(&rb)) = (ia.get(p.source.as_str()), ib.get(p.target.as_str())) else {
            return Err(Error::invalid(format!(
                "pair ({}, {}) does not resolve in both sets",
                p.source, p.target
            )));
        };
        rows_a.push(ra);
        rows_b.push(rb);
    }
    let m = lex.len();
    let xa = DMatrix::from_fn(m, a.ncols(), |i, j| a.matrix()[(rows_a[i], j)]);
    let xb = DMatrix::from_fn(m, b.ncols(), |i, j| b.matrix()[(rows_b[i], j)]);
    let w: Vec<T> = lex.pairs.iter().map(|p| T::lit(p.weight)).collect();
    let total = w.iter().copied().fold(T::zero(), |s, v| s + v);

    let (ca, ssa, dega) = weighted_centered(&xa, &w, total);
    let (cb, ssb, degb) = weighted_centered(&xb, &w, total);
    let mut weighted_a = ca;
    for (i, mut row) in weighted_a.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let cov = weighted_a.tr_mul(&cb);
    let one = T::one();
    let matrix = DMatrix::from_fn(a.ncols(), b.ncols(), |j, k| {
        if dega[j] || degb[k] {
            T::zero()
        } else {
            (cov[(j, k)] / (ssa[j] * ssb[k]).sqrt()).clamp(-one, one)
        }
    });
    let flagged = |d: &[bool]| d.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i).collect();
    Ok(CrossCorrelation {
        matrix,
        degenerate_source: flagged(&dega),
        degenerate_target: flagged(&degb),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Rank by the signed correlation.
    #[default]
    Signed,
    /// Rank by `|correlation|`; negatively correlated matches are flipped.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisMatch {
    pub source: usize,
    pub target: usize,
    pub correlation: f64,
    /// The target column is negated when applied.
    #[serde(default)]
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisMatching {
    pub source_dim: usize,
    pub target_dim: usize,
    /// In selection order.
    pub triples: Vec<AxisMatch>,
    pub unmatched_source: Vec<usize>,
    pub unmatched_target: Vec<usize>,
}

impl AxisMatching {
    fn from_triples(source_dim: usize, target_dim: usize, triples: Vec<AxisMatch>) -> Self {
        let used_s: BTreeSet<usize> = triples.iter().map(|t| t.source).collect();
        let used_t: BTreeSet<usize> = triples.iter().map(|t| t.target).collect();
        Self {
            source_dim,
            target_dim,
            unmatched_source: (0..source_dim).filter(|i| !used_s.contains(i)).collect(),
            unmatched_target: (0..target_dim).filter(|i| !used_t.contains(i)).collect(),
            triples,
        }
    }

    pub fn for_source(&self, source: usize) -> Option<&AxisMatch> {
        self.triples.iter().find(|t| t.source == source)
    }

    /// The same pairs with source and target roles swapped.
    pub fn inverse(&self) -> Self {
        let triples = self
            .triples
            .iter()
            .map(|t| AxisMatch { source: t.target, target: t.source, ..*t })
            .collect();
        Self::from_triples(self.target_dim, self.source_dim, triples)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn score<T: Real>(v: T, mode: MatchMode) -> T {
    match mode {
        MatchMode::Signed => v,
        MatchMode::Absolute => v.abs(),
    }
}

/// Repeatedly takes the largest remaining entry whose row and column are both
/// unused, until `min(d_A, d_B)` pairs are chosen. Ties go to the smaller
/// `(row, column)`.
pub fn greedy_match<T: Real>(corr: &DMatrix<T>, mode: MatchMode) -> AxisMatching {
    let (rows, cols) = corr.shape();
    let mut entries: Vec<(usize, usize)> =
        (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).collect();
    entries.sort_by(|&(i1, j1), &(i2, j2)| {
        score(corr[(i2, j2)], mode)
            .partial_cmp(&score(corr[(i1, j1)], mode))
            .expect("finite correlations")
            .then((i1, j1).cmp(&(i2, j2)))
    });
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    let want = rows.min(cols);
    let mut triples = Vec::with_capacity(want);
    for (i, j) in entries {
        if triples.len() == want {
            break;
        }
        if row_used[i] || col_used[j] {
            continue;
        }
        row_used[i] = true;
        col_used[j] = true;
        let c = corr[(i, j)];
        triples.push(AxisMatch {
            source: i,
            target: j,
            correlation: c.as_f64(),
            flipped: mode == MatchMode::Absolute && c < T::zero(),
        });
    }
    AxisMatching::from_triples(rows, cols, triples)
}

/// Maximum-total-score assignment (Hungarian algorithm), offered for
/// comparison with the greedy rule. Triples are listed by descending score.
pub fn optimal_match<T: Real>(corr: &DMatrix<T>, mode: MatchMode) -> AxisMatching {
    let (rows, cols) = corr.shape();
    let transpose = rows > cols;
    // Work on an n × m cost matrix with n ≤ m.
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    let cost = |i: usize, j: usize| -> f64 {
        let v = if transpose { corr[(j, i)] } else { corr[(i, j)] };
        -score(v, mode).as_f64()
    };
    // Potentials formulation with 1-based sentinels.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut triples: Vec<AxisMatch> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| {
            let (s, t) = if transpose { (j - 1, p[j] - 1) } else { (p[j] - 1, j - 1) };
            let c = corr[(s, t)];
            AxisMatch {
                source: s,
                target: t,
                correlation: c.as_f64(),
                flipped: mode == MatchMode::Absolute && c < T::zero(),
            }
        })
        .collect();
    triples.sort_by(|a, b| {
        let (sa, sb) = match mode {
            MatchMode::Signed => (a.correlation, b.correlation),
            MatchMode::Absolute => (a.correlation.abs(), b.correlation.abs()),
        };
        sb.total_cmp(&sa).then((a.source, a.target).cmp(&(b.source, b.target)))
    });
    AxisMatching::from_triples(rows, cols, triples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FillMode {
    /// Unmatched source positions are omitted from the output.
    #[default]
    Drop,
    /// Unmatched source positions become zero columns.
    ZeroFill,
}

/// Reorders target columns so that the target axis matched to source axis `s`
/// lands at position `s`. Surplus target axes are discarded.
pub fn apply_matching<T: Real>(
    b: &EmbeddingSet<T>,
    matching: &AxisMatching,
    fill: FillMode,
) -> Result<EmbeddingSet<T>> {
    if b.ncols() != matching.target_dim {
        return Err(Error::invalid(format!(
            "matching expects {} target axes, set has {}",
            matching.target_dim,
            b.ncols()
        )));
    }
    let mut by_source: Vec<Option<&AxisMatch>> = vec![None; matching.source_dim];
    let mut target_seen = vec![false; matching.target_dim];
    for t in &matching.triples {
        if t.source >= matching.source_dim || t.target >= matching.target_dim {
            return Err(Error::invalid(format!("matching pair ({}, {}) out of range", t.source, t.target)));
        }
        if by_source[t.source].is_some() || target_seen[t.target] {
            return Err(Error::invalid(format!("axis used twice in matching pair ({}, {})", t.source, t.target)));
        }
        by_source[t.source] = Some(t);
        target_seen[t.target] = true;
    }
    if matching.triples.len() != matching.source_dim.min(matching.target_dim) {
        return Err(Error::invalid("matching does not cover min(d_A, d_B) axes"));
    }
    let src = b.matrix();
    let mut columns = Vec::new();
    for slot in by_source {
        match slot {
            Some(t) => {
                let col = src.column(t.target);
                columns.push(if t.flipped { -col } else { col.into_owned() });
            }
            None if fill == FillMode::ZeroFill => columns.push(nalgebra::DVector::zeros(b.nrows())),
            None => {}
        }
    }
    let matrix = DMatrix::from_columns(&columns);
    let mut meta = b.meta().clone();
    meta.provenance = whitening::provenance(b.meta(), "apply-matching");
    b.derive(matrix, meta)
}

/// Source-axis order by descending mean matched correlation across several
/// matchings sharing one source. Ties go to the lower axis index.
pub fn reorder_by_mean_correlation(matchings: &[AxisMatching]) -> Result<Vec<usize>> {
    let Some(first) = matchings.first() else {
        return Err(Error::invalid("no matchings given"));
    };
    let axes: BTreeSet<usize> = first.triples.iter().map(|t| t.source).collect();
    let mut mean = Vec::with_capacity(axes.len());
    for &axis in &axes {
        let mut sum = 0.0;
        for (k, m) in matchings.iter().enumerate() {
            let t = m.for_source(axis).ok_or_else(|| {
                Error::invalid(format!("source axis {axis} missing from matching {k}"))
            })?;
            sum += t.correlation;
        }
        mean.push((axis, sum / matchings.len() as f64));
    }
    for (k, m) in matchings.iter().enumerate() {
        if m.triples.iter().any(|t| !axes.contains(&t.source)) {
            return Err(Error::invalid(format!("matching {k} covers a source axis the others lack")));
        }
    }
    mean.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(mean.into_iter().map(|(axis, _)| axis).collect())
}

/// Column `k` of the output is column `order[k]` of the input.
pub fn permute_columns<T: Real>(set: &EmbeddingSet<T>, order: &[usize]) -> Result<EmbeddingSet<T>> {
    if let Some(bad) = order.iter().find(|&&j| j >= set.ncols()) {
        return Err(Error::invalid(format!("axis {bad} out of range")));
    }
    let mut meta = set.meta().clone();
    meta.axes_signed_sorted = false;
    set.derive(linalg::select_columns(set.matrix(), order), meta)
}

/// Bounded number of redraws when a sample is numerically singular.
pub const RANDOM_TRANSFORM_RETRIES: usize = 16;

/// `Q = M · diag(l) · N` with `M_ij, N_ij ~ N(0, 1/d)` and `l_i ~ Exp(1)`.
///
/// Draw order from a `ChaCha8Rng` seeded with `seed`: `M` row-major, then
/// `l`, then `N` row-major. A draw whose condition number is not finite
/// (smallest singular value ≤ 1e-12 of the largest) is discarded and the
/// stream continues.
pub fn random_transform<T: Real>(d: usize, seed: u64) -> Result<DMatrix<T>> {
    if d < 1 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = (1.0 / d as f64).sqrt();
    for _ in 0..RANDOM_TRANSFORM_RETRIES {
        let m: DMatrix<T> = linalg::normal_matrix(d, d, std, &mut rng);
        let l: Vec<T> = (0..d).map(|_| T::lit(Exp1.sample(&mut rng))).collect();
        let n: DMatrix<T> = linalg::normal_matrix(d, d, std, &mut rng);
        let q = m * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(l)) * n;
        let sv = q.singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        if hi.is_finite() && lo > hi * T::lit(1e-12) {
            return Ok(q);
        }
    }
    Err(Error::Numerical("random transform stayed singular after all retries".into()))
}
