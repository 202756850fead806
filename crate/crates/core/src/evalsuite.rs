//! Interpretability and low-dimensional sufficiency evaluations: word
//! intrusion scored by DistRatio, top-k component truncation, analogy
//! accuracy and word-similarity rank correlation.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedstore::{normalize_rows, EmbeddingSet};
use crate::error::{Error, ParseErrorKind, Result};
use crate::report::{EvalReport, Table};
use crate::Real;

/// Keeps the `k` largest-magnitude entries of every row and zeroes the rest.
/// On equal magnitudes the lower axis index is kept.
pub fn truncate_top_k<T: Real>(set: &EmbeddingSet<T>, k: usize) -> Result<EmbeddingSet<T>> {
    let d = set.ncols();
    if k < 1 || k > d {
        return Err(Error::invalid(format!("k = {k} outside 1..={d}")));
    }
    if k == d {
        return Ok(set.clone());
    }
    let mut m = set.matrix().clone();
    let mut order: Vec<usize> = Vec::with_capacity(d);
    for mut row in m.row_iter_mut() {
        order.clear();
        order.extend(0..d);
        order.sort_by(|&a, &b| {
            row[b].abs().partial_cmp(&row[a].abs()).expect("finite entries").then(a.cmp(&b))
        });
        for &j in &order[k..] {
            row[j] = T::zero();
        }
    }
    set.derive(m, set.meta().clone())
}

fn ranked_rows<T: Real>(m: &DMatrix<T>, axis: usize) -> Vec<usize> {
    let col = m.column(axis);
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| col[b].partial_cmp(&col[a]).expect("finite entries").then(a.cmp(&b)));
    idx
}

/// Labels of the `k` rows with the largest component on `axis`, descending.
/// Equal values keep row order.
pub fn top_words<T: Real>(set: &EmbeddingSet<T>, axis: usize, k: usize) -> Result<Vec<String>> {
    Ok(top_rows(set, axis, k)?.into_iter().map(|i| set.labels()[i].clone()).collect())
}

pub fn top_rows<T: Real>(set: &EmbeddingSet<T>, axis: usize, k: usize) -> Result<Vec<usize>> {
    if axis >= set.ncols() {
        return Err(Error::invalid(format!("axis {axis} out of range for {} axes", set.ncols())));
    }
    let mut rows = ranked_rows(set.matrix(), axis);
    rows.truncate(k);
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrusionConfig {
    pub k_top: usize,
    pub runs: usize,
    /// Candidates rank in this lower fraction on the evaluated axis...
    pub lower_quantile: f64,
    /// ...and in this upper fraction on at least one other axis.
    pub upper_quantile: f64,
    pub seed: u64,
    /// Score on row-normalized embeddings.
    pub normalize: bool,
}

impl Default for IntrusionConfig {
    fn default() -> Self {
        Self { k_top: 5, runs: 10, lower_quantile: 0.5, upper_quantile: 0.1, seed: 0, normalize: true }
    }
}

impl IntrusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_top < 2 {
            return Err(Error::invalid("k_top must be at least 2"));
        }
        if self.runs < 1 {
            return Err(Error::invalid("runs must be at least 1"));
        }
        for (name, q) in [("lower_quantile", self.lower_quantile), ("upper_quantile", self.upper_quantile)] {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::invalid(format!("{name} = {q} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Which rows play top word and intruder for every axis and run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntrusionSelection {
    /// `top[a]`: the `k_top` highest rows on axis `a`.
    pub top: Vec<Vec<usize>>,
    /// `intruders[r][a]`: the intruder row for axis `a` in run `r`.
    pub intruders: Vec<Vec<usize>>,
}

/// Rows eligible as intruders for each axis.
pub fn intruder_pools<T: Real>(m: &DMatrix<T>, cfg: &IntrusionConfig) -> Result<Vec<Vec<usize>>> {
    let (n, d) = m.shape();
    let upper = ((n as f64 * cfg.upper_quantile).ceil() as usize).min(n);
    let lower = ((n as f64 * cfg.lower_quantile).floor() as usize).min(n);
    let ranks: Vec<Vec<usize>> = (0..d)
        .map(|a| {
            let mut rank = vec![0; n];
            for (r, i) in ranked_rows(m, a).into_iter().enumerate() {
                rank[i] = r;
            }
            rank
        })
        .collect();
    let mut pools = Vec::with_capacity(d);
    for a in 0..d {
        let pool: Vec<usize> = (0..n)
            .filter(|&i| ranks[a][i] >= n - lower)
            .filter(|&i| (0..d).any(|b| b != a && ranks[b][i] < upper))
            .collect();
        if pool.is_empty() {
            return Err(Error::invalid(format!("axis {a} has no eligible intruder")));
        }
        pools.push(pool);
    }
    Ok(pools)
}

fn working_matrix<T: Real>(set: &EmbeddingSet<T>, normalize: bool) -> Result<DMatrix<T>> {
    if normalize {
        Ok(normalize_rows(set)?.into_parts().1)
    } else {
        Ok(set.matrix().clone())
    }
}

/// Draws top words and intruders for every run. Intruders are drawn
/// uniformly from each axis's pool, run by run and axis by axis.
pub fn select_intrusion<T: Real>(set: &EmbeddingSet<T>, cfg: &IntrusionConfig) -> Result<IntrusionSelection> {
    cfg.validate()?;
    if set.ncols() < 2 {
        return Err(Error::invalid("word intrusion needs at least 2 axes"));
    }
    if set.nrows() <= cfg.k_top {
        return Err(Error::invalid(format!("{} rows cannot supply {} top words and an intruder", set.nrows(), cfg.k_top)));
    }
    let m = working_matrix(set, cfg.normalize)?;
    let pools = intruder_pools(&m, cfg)?;
    let top = (0..m.ncols())
        .map(|a| {
            let mut r = ranked_rows(&m, a);
            r.truncate(cfg.k_top);
            r
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let intruders = (0..cfg.runs)
        .map(|_| pools.iter().map(|p| p[rng.random_range(0..p.len())]).collect())
        .collect();
    Ok(IntrusionSelection { top, intruders })
}

fn distance<T: Real>(m: &DMatrix<T>, i: usize, j: usize) -> T {
    let mut s = T::zero();
    for c in 0..m.ncols() {
        let v = m[(i, c)] - m[(j, c)];
        s += v * v;
    }
    s.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrusionScore {
    pub dist_ratio: f64,
    /// InterDist / IntraDist per axis, averaged over runs.
    pub per_axis: Vec<f64>,
}

/// DistRatio of fixed selections on the rows of `m`.
pub fn dist_ratio<T: Real>(m: &DMatrix<T>, sel: &IntrusionSelection) -> Result<IntrusionScore> {
    let d = sel.top.len();
    if sel.intruders.is_empty() || sel.intruders.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("intruder table does not match the axes"));
    }
    let n = m.nrows();
    if sel.top.iter().flatten().chain(sel.intruders.iter().flatten()).any(|&i| i >= n) {
        return Err(Error::invalid("selection refers to a row outside the set"));
    }
    let intra: Vec<T> = sel
        .top
        .par_iter()
        .map(|top| {
            let mut acc = RunningMean::default();
            for (x, &i) in top.iter().enumerate() {
                for (y, &j) in top.iter().enumerate() {
                    if x != y {
                        acc.push(distance(m, i, j));
                    }
                }
            }
            acc.mean
        })
        .collect();
    if let Some(a) = intra.iter().position(|v| *v == T::zero()) {
        return Err(Error::Numerical(format!("top words of axis {a} coincide; IntraDist is 0")));
    }
    let mut per_axis = vec![RunningMean::<f64>::default(); d];
    let mut total = RunningMean::default();
    for intruders in &sel.intruders {
        let ratios: Vec<f64> = (0..d)
            .into_par_iter()
            .map(|a| {
                let mut inter = RunningMean::default();
                for &i in &sel.top[a] {
                    inter.push(distance(m, i, intruders[a]));
                }
                (inter.mean / intra[a]).as_f64()
            })
            .collect();
        let mut over_axes = RunningMean::default();
        for (acc, &r) in per_axis.iter_mut().zip(&ratios) {
            acc.push(r);
            over_axes.push(r);
        }
        total.push(over_axes.mean);
    }
    Ok(IntrusionScore {
        dist_ratio: total.mean,
        per_axis: per_axis.into_iter().map(|a| a.mean).collect(),
    })
}

/// Incremental mean; exact when every sample is equal.
#[derive(Debug, Clone, Copy)]
struct RunningMean<T> {
    mean: T,
    count: usize,
}

impl<T: Real> Default for RunningMean<T> {
    fn default() -> Self {
        Self { mean: T::zero(), count: 0 }
    }
}

impl<T: Real> RunningMean<T> {
    fn push(&mut self, x: T) {
        self.count += 1;
        self.mean += (x - self.mean) / T::from_count(self.count);
    }
}

/// Word-intrusion DistRatio averaged over axes and runs.
pub fn word_intrusion<T: Real>(set: &EmbeddingSet<T>, cfg: &IntrusionConfig) -> Result<IntrusionScore> {
    let sel = select_intrusion(set, cfg)?;
    dist_ratio(&working_matrix(set, cfg.normalize)?, &sel)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogyQuery {
    pub w1: String,
    pub w2: String,
    pub w3: String,
    pub w4: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogySection {
    pub name: String,
    pub queries: Vec<AnalogyQuery>,
}

/// Google analogy format: `: section` headers followed by four labels per line.
pub fn read_analogies(reader: impl BufRead) -> Result<Vec<AnalogySection>> {
    let mut sections: Vec<AnalogySection> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix(':') {
            sections.push(AnalogySection { name: name.trim().to_string(), queries: Vec::new() });
            continue;
        }
        let toks: Vec<&str> = trimmed.split_ascii_whitespace().collect();
        let bad = |msg: &str| Error::Parse { line: i + 1, kind: ParseErrorKind::MalformedRecord(msg.into()) };
        let [w1, w2, w3, w4] = toks[..] else {
            return Err(bad("expected four labels"));
        };
        if w1 == w2 || w1 == w3 || w1 == w4 || w2 == w3 || w2 == w4 || w3 == w4 {
            return Err(bad("analogy labels must be distinct"));
        }
        if sections.is_empty() {
            sections.push(AnalogySection { name: String::new(), queries: Vec::new() });
        }
        let q = AnalogyQuery { w1: w1.into(), w2: w2.into(), w3: w3.into(), w4: w4.into() };
        sections.last_mut().expect("section exists").queries.push(q);
    }
    Ok(sections)
}

pub fn load_analogies(path: impl AsRef<Path>) -> Result<Vec<AnalogySection>> {
    read_analogies(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogyOptions {
    pub topn: usize,
    /// Remove `w1`, `w2`, `w3` from the candidates.
    pub exclude_queries: bool,
}

impl Default for AnalogyOptions {
    fn default() -> Self {
        Self { topn: 10, exclude_queries: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub score: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

impl TaskScore {
    pub fn report(&self, task: &str, k: usize) -> EvalReport {
        EvalReport {
            k: Some(k),
            score: Some(self.score),
            skipped: Some(self.skipped),
            ..EvalReport::new(task)
        }
        .metric("evaluated", self.evaluated as f64)
    }
}

/// Fraction of queries whose `w4` is among the `topn` rows most cosine-similar
/// to `w3 + w2 − w1`, after truncating rows to `k_components` entries and
/// normalizing them. Queries with a label outside the vocabulary are skipped.
pub fn analogy_eval<T: Real>(
    set: &EmbeddingSet<T>,
    queries: &[AnalogyQuery],
    k_components: usize,
    opts: &AnalogyOptions,
) -> Result<TaskScore> {
    if opts.topn < 1 {
        return Err(Error::invalid("topn must be at least 1"));
    }
    let m = normalize_rows(&truncate_top_k(set, k_components)?)?.into_parts().1;
    let index = set.label_index();
    let resolved: Vec<[usize; 4]> = queries
        .iter()
        .filter_map(|q| {
            Some([
                *index.get(q.w1.as_str())?,
                *index.get(q.w2.as_str())?,
                *index.get(q.w3.as_str())?,
                *index.get(q.w4.as_str())?,
            ])
        })
        .collect();
    let skipped = queries.len() - resolved.len();
    let hits = resolved
        .par_iter()
        .filter(|&&[a, b, c, want]| {
            let v: DVector<T> = (m.row(c) + m.row(b) - m.row(a)).transpose();
            let scores = &m * v;
            let mut better = 0;
            let target = scores[want];
            for (j, s) in scores.iter().enumerate() {
                if j == want || (opts.exclude_queries && (j == a || j == b || j == c)) {
                    continue;
                }
                if *s > target || (*s == target && j < want) {
                    better += 1;
                }
            }
            better < opts.topn
        })
        .count();
    let score = if resolved.is_empty() { 0.0 } else { hits as f64 / resolved.len() as f64 };
    Ok(TaskScore { score, evaluated: resolved.len(), skipped })
}

pub type SimilarityPair = (String, String, f64);

/// `label label score` per line. Blank lines and lines starting with `#` are ignored.
pub fn read_similarity(reader: impl BufRead) -> Result<Vec<SimilarityPair>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_ascii_whitespace().collect();
        let [a, b, s] = toks[..] else {
            return Err(Error::Parse {
                line: i + 1,
                kind: ParseErrorKind::MalformedRecord("expected \"<label> <label> <score>\"".into()),
            });
        };
        let score: f64 = s.parse().map_err(|_| Error::Parse { line: i + 1, kind: ParseErrorKind::NonNumeric(s.to_string()) })?;
        if !score.is_finite() {
            return Err(Error::Parse { line: i + 1, kind: ParseErrorKind::NonFinite(s.to_string()) });
        }
        out.push((a.to_string(), b.to_string(), score));
    }
    Ok(out)
}

pub fn load_similarity(path: impl AsRef<Path>) -> Result<Vec<SimilarityPair>> {
    read_similarity(BufReader::new(File::open(path)?))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    crate::linalg::pearson(&average_ranks(a), &average_ranks(b))
}

/// Spearman ρ between human scores and cosine similarities of truncated rows.
pub fn similarity_eval<T: Real>(
    set: &EmbeddingSet<T>,
    pairs: &[SimilarityPair],
    k_components: usize,
) -> Result<TaskScore> {
    let m = truncate_top_k(set, k_components)?.into_parts().1;
    let index: HashMap<&str, usize> = set.label_index();
    let resolved: Vec<(usize, usize, f64)> = pairs
        .iter()
        .filter_map(|(a, b, s)| Some((*index.get(a.as_str())?, *index.get(b.as_str())?, *s)))
        .collect();
    if resolved.len() < 3 {
        return Err(Error::invalid(format!("only {} similarity pairs are in vocabulary", resolved.len())));
    }
    let mut cosines = Vec::with_capacity(resolved.len());
    for &(i, j, _) in &resolved {
        let (x, y) = (m.row(i), m.row(j));
        let denom = x.norm() * y.norm();
        if denom == T::zero() {
            return Err(Error::invalid(format!("zero row for pair ({}, {})", set.labels()[i], set.labels()[j])));
        }
        cosines.push((x.dot(&y) / denom).as_f64());
    }
    let human: Vec<f64> = resolved.iter().map(|r| r.2).collect();
    Ok(TaskScore {
        score: spearman(&cosines, &human),
        evaluated: resolved.len(),
        skipped: pairs.len() - resolved.len(),
    })
}

/// Axis names and top entries: `[word]` for the maximal row of each axis.
pub fn top_axis_report<T: Real>(set: &EmbeddingSet<T>, per_axis: usize) -> Result<EvalReport> {
    let mut table = Table::new(["axis", "name", "rank", "label", "value"]);
    for a in 0..set.ncols() {
        let rows = top_rows(set, a, per_axis.max(1))?;
        let name = format!("[{}]", set.labels()[rows[0]]);
        for (r, &i) in rows.iter().take(per_axis).enumerate() {
            table.push(vec![
                a.to_string(),
                name.clone(),
                (r + 1).to_string(),
                set.labels()[i].clone(),
                set.matrix()[(i, a)].as_f64().to_string(),
            ]);
        }
    }
    Ok(EvalReport { k: Some(per_axis), table: Some(table), ..EvalReport::new("top-axes") })
}
