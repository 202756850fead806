//! The embedding data model and its persistence.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseErrorKind, Result};
use crate::Real;

/// State flags carried alongside a matrix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub centered: bool,
    pub whitened: bool,
    pub axes_signed_sorted: bool,
    pub provenance: String,
}

/// `n` labeled rows of `d` components each.
///
/// Labels may repeat. Construction checks that the shape is at least 2×1,
/// that there is one label per row and that every component is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<T: Real> {
    labels: Vec<String>,
    matrix: DMatrix<T>,
    meta: Meta,
}

impl<T: Real> EmbeddingSet<T> {
    pub fn new(labels: Vec<String>, matrix: DMatrix<T>) -> Result<Self> {
        Self::with_meta(labels, matrix, Meta::default())
    }

    pub fn with_meta(labels: Vec<String>, matrix: DMatrix<T>, meta: Meta) -> Result<Self> {
        if labels.len() != matrix.nrows() {
            return Err(Error::invalid(format!(
                "{} labels for {} rows",
                labels.len(),
                matrix.nrows()
            )));
        }
        if matrix.nrows() < 2 {
            return Err(Error::invalid("an embedding set needs at least 2 rows"));
        }
        if matrix.ncols() < 1 {
            return Err(Error::invalid("an embedding set needs at least 1 column"));
        }
        if let Some(pos) = matrix.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % matrix.nrows(), pos / matrix.nrows());
            return Err(Error::invalid(format!(
                "non-finite component at row {i} ({}), column {j}",
                labels[i]
            )));
        }
        Ok(Self { labels, matrix, meta })
    }

    /// Builds a set from row slices, labelling rows `"0"`, `"1"`, ...
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("ragged rows"));
        }
        let matrix = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        let labels = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(labels, matrix)
    }

    /// Same labels, new matrix and flags. The row count must not change.
    pub fn derive(&self, matrix: DMatrix<T>, meta: Meta) -> Result<Self> {
        Self::with_meta(self.labels.clone(), matrix, meta)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut Meta {
        &mut self.meta
    }

    pub fn into_parts(self) -> (Vec<String>, DMatrix<T>, Meta) {
        (self.labels, self.matrix, self.meta)
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Maps each label to the row of its first occurrence.
    pub fn label_index(&self) -> HashMap<&str, usize> {
        let mut index = HashMap::with_capacity(self.labels.len());
        for (i, l) in self.labels.iter().enumerate() {
            index.entry(l.as_str()).or_insert(i);
        }
        index
    }

    pub fn row_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Relative corpus frequencies `p(w)` keyed by item.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyTable {
    entries: HashMap<String, f64>,
}

impl FrequencyTable {
    pub fn new(entries: HashMap<String, f64>) -> Result<Self> {
        if let Some((w, p)) = entries
            .iter()
            .find(|(_, p)| !p.is_finite() || **p < 0.0 || **p > 1.0)
        {
            return Err(Error::invalid(format!(
                "frequency of {w:?} is {p}, expected a value in [0, 1]"
            )));
        }
        if !entries.values().any(|p| *p > 0.0) {
            return Err(Error::invalid("frequency table has no positive entry"));
        }
        Ok(Self { entries })
    }

    /// Normalizes raw counts to relative frequencies.
    pub fn from_counts(counts: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let counts: Vec<_> = counts.into_iter().collect();
        if counts.iter().any(|(_, c)| !c.is_finite() || *c < 0.0) {
            return Err(Error::invalid("counts must be finite and nonnegative"));
        }
        let total: f64 = counts.iter().map(|(_, c)| c).sum();
        if total <= 0.0 {
            return Err(Error::invalid("frequency table has no positive entry"));
        }
        Self::new(counts.into_iter().map(|(w, c)| (w, c / total)).collect())
    }

    /// Reads `item value` lines; values are normalized to sum to one.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut counts = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut toks = line.split_ascii_whitespace();
            let Some(item) = toks.next() else { continue };
            let lineno = i + 1;
            let value = toks.next().ok_or(Error::Parse {
                line: lineno,
                kind: ParseErrorKind::MalformedRecord("expected \"<item> <frequency>\"".into()),
            })?;
            let value: f64 = value.parse().map_err(|_| Error::Parse {
                line: lineno,
                kind: ParseErrorKind::NonNumeric(value.to_string()),
            })?;
            counts.push((item.to_string(), value));
        }
        Self::from_counts(counts)
    }

    pub fn get(&self, item: &str) -> Option<f64> {
        self.entries.get(item).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn parse_error(line: usize, kind: ParseErrorKind) -> Error {
    Error::Parse { line, kind }
}

/// Reads a word2vec text file: a `"<rows> <dims>"` header followed by one
/// `label c1 ... cd` line per row. Blank lines are ignored.
pub fn load_embeddings<T: Real>(path: impl AsRef<Path>) -> Result<EmbeddingSet<T>> {
    let file = File::open(path.as_ref())?;
    read_embeddings(BufReader::new(file))
}

pub fn read_embeddings<T: Real>(reader: impl BufRead) -> Result<EmbeddingSet<T>> {
    let mut lines = reader.lines().enumerate();
    let (n, d) = loop {
        let Some((i, line)) = lines.next() else {
            return Err(parse_error(1, ParseErrorKind::MalformedHeader));
        };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_ascii_whitespace().collect();
        match toks.as_slice() {
            [n, d] => match (n.parse::<usize>(), d.parse::<usize>()) {
                (Ok(n), Ok(d)) => break (n, d),
                _ => return Err(parse_error(i + 1, ParseErrorKind::MalformedHeader)),
            },
            _ => return Err(parse_error(i + 1, ParseErrorKind::MalformedHeader)),
        }
    };

    let mut labels = Vec::with_capacity(n);
    let mut data: Vec<T> = Vec::with_capacity(n * d);
    let mut last_line = 1;
    for (i, line) in lines {
        let lineno = i + 1;
        last_line = lineno;
        let line = line?;
        let mut toks = line.split_ascii_whitespace();
        let Some(label) = toks.next() else { continue };
        if labels.len() == n {
            return Err(parse_error(
                lineno,
                ParseErrorKind::CountMismatch { expected: n, found: n + 1 },
            ));
        }
        let start = data.len();
        for tok in toks {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_error(lineno, ParseErrorKind::NonNumeric(tok.to_string())))?;
            if !v.is_finite() {
                return Err(parse_error(lineno, ParseErrorKind::NonFinite(tok.to_string())));
            }
            data.push(T::lit(v));
        }
        let found = data.len() - start;
        if found != d {
            return Err(parse_error(lineno, ParseErrorKind::RowLength { expected: d, found }));
        }
        labels.push(label.to_string());
    }
    if labels.len() != n {
        return Err(parse_error(
            last_line,
            ParseErrorKind::CountMismatch { expected: n, found: labels.len() },
        ));
    }
    let matrix = DMatrix::from_row_slice(n, d, &data);
    EmbeddingSet::new(labels, matrix)
}

/// Writes the word2vec text format. Components use the shortest decimal that
/// parses back to the same `f64`.
pub fn save_embeddings<T: Real>(set: &EmbeddingSet<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_embeddings(set, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_embeddings<T: Real>(set: &EmbeddingSet<T>, w: &mut impl Write) -> Result<()> {
    if let Some(bad) = set
        .labels()
        .iter()
        .find(|l| l.is_empty() || l.chars().any(char::is_whitespace))
    {
        return Err(Error::invalid(format!(
            "label {bad:?} cannot be written in word2vec text format"
        )));
    }
    writeln!(w, "{} {}", set.nrows(), set.ncols())?;
    let m = set.matrix();
    for (i, label) in set.labels().iter().enumerate() {
        write!(w, "{label}")?;
        for j in 0..m.ncols() {
            write!(w, " {}", m[(i, j)].as_f64())?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Output of [`resample_vocabulary`].
#[derive(Debug, Clone)]
pub struct Resampled<T: Real> {
    pub set: EmbeddingSet<T>,
    /// Distinct labels produced by the weighted draws.
    pub unique_drawn: usize,
    /// Labels appended once each to reach the requested number of distinct labels.
    pub padded: usize,
}

/// Frequency-weighted resampling with replacement, then padding by frequency.
///
/// Rows are drawn `draws` times with probability proportional to `p(w)^alpha`.
/// If fewer than `pad_to_unique` distinct rows were drawn, rows never drawn
/// are appended once each in descending `p(w)` order (ties by row order)
/// until that many distinct rows are present. Drawn rows come first in draw
/// order; sampling uses inverse-CDF lookups on a `ChaCha8Rng` seeded with `seed`.
pub fn resample_vocabulary<T: Real>(
    set: &EmbeddingSet<T>,
    freq: &FrequencyTable,
    alpha: f64,
    draws: usize,
    pad_to_unique: usize,
    seed: u64,
) -> Result<Resampled<T>> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!("alpha must be >= 0, got {alpha}")));
    }
    let n = set.nrows();
    if pad_to_unique > n {
        return Err(Error::invalid(format!(
            "pad_to_unique {pad_to_unique} exceeds vocabulary size {n}"
        )));
    }
    let p: Vec<f64> = set
        .labels()
        .iter()
        .map(|l| {
            freq.get(l)
                .ok_or_else(|| Error::invalid(format!("label {l:?} missing from frequency table")))
        })
        .collect::<Result<_>>()?;

    let mut cumulative = Vec::with_capacity(n);
    let mut total = 0.0;
    for &pw in &p {
        total += pw.powf(alpha);
        cumulative.push(total);
    }
    if draws > 0 && total <= 0.0 {
        return Err(Error::invalid("all sampling weights are zero"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(draws);
    let mut seen = vec![false; n];
    for _ in 0..draws {
        let u = rng.random::<f64>() * total;
        // First index whose cumulative weight exceeds u; zero-weight rows are never chosen.
        let idx = cumulative.partition_point(|&c| c <= u).min(n - 1);
        picked.push(idx);
        seen[idx] = true;
    }
    let unique_drawn = seen.iter().filter(|s| **s).count();

    let mut padded = 0;
    if unique_drawn < pad_to_unique {
        let mut remaining: Vec<usize> = (0..n).filter(|i| !seen[*i]).collect();
        remaining.sort_by(|a, b| p[*b].total_cmp(&p[*a]).then(a.cmp(b)));
        let need = pad_to_unique - unique_drawn;
        picked.extend(remaining.into_iter().take(need));
        padded = need;
    }

    let d = set.ncols();
    let src = set.matrix();
    let matrix = DMatrix::from_fn(picked.len(), d, |i, j| src[(picked[i], j)]);
    let labels = picked.iter().map(|&i| set.labels()[i].clone()).collect();
    let meta = Meta {
        provenance: format!(
            "{} | resampled alpha={alpha} draws={draws} pad_to_unique={pad_to_unique} seed={seed}",
            set.meta().provenance
        ),
        ..Meta::default()
    };
    Ok(Resampled { set: EmbeddingSet::with_meta(labels, matrix, meta)?, unique_drawn, padded })
}

/// Scales every row to unit Euclidean norm.
pub fn normalize_rows<T: Real>(set: &EmbeddingSet<T>) -> Result<EmbeddingSet<T>> {
    let mut m = set.matrix().clone();
    for (i, mut row) in m.row_iter_mut().enumerate() {
        let norm = row.norm();
        if norm == T::zero() {
            return Err(Error::invalid(format!(
                "row {i} ({}) has zero norm",
                set.labels()[i]
            )));
        }
        row /= norm;
    }
    set.derive(m, set.meta().clone())
}
