//! Static SVG heatmaps with CSV sidecars.
//!
//! Cells use a blue–white–red diverging scale: `-bound` maps to `#2166ac`,
//! `0` to `#ffffff` and `+bound` to `#b2182b`, linearly in RGB on each side.

use std::fmt::Write as _;
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::embedstore::EmbeddingSet;
use crate::error::{Error, ParseErrorKind, Result};
use crate::Real;

pub const NEGATIVE: [u8; 3] = [0x21, 0x66, 0xac];
pub const MIDPOINT: [u8; 3] = [0xff, 0xff, 0xff];
pub const POSITIVE: [u8; 3] = [0xb2, 0x18, 0x2b];

const CELL: usize = 24;
const CHAR_WIDTH: usize = 7;
const PAD: usize = 6;

/// Hex color of `value` on a scale symmetric about 0 with the given bound.
/// Values beyond the bound saturate; a zero bound paints everything white.
pub fn diverging_color(value: f64, bound: f64) -> String {
    let t = if bound > 0.0 { (value / bound).clamp(-1.0, 1.0) } else { 0.0 };
    let end = if t < 0.0 { NEGATIVE } else { POSITIVE };
    let a = t.abs();
    let mix = |i: usize| (MIDPOINT[i] as f64 + (end[i] as f64 - MIDPOINT[i] as f64) * a).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(0), mix(1), mix(2))
}

pub fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// A labeled grid of values.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: DMatrix<f64>,
}

impl Heatmap {
    pub fn new(row_labels: Vec<String>, col_labels: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != row_labels.len() || values.ncols() != col_labels.len() {
            return Err(Error::invalid(format!(
                "{}×{} values with {} row and {} column labels",
                values.nrows(),
                values.ncols(),
                row_labels.len(),
                col_labels.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("heatmap values must be finite"));
        }
        Ok(Self { row_labels, col_labels, values })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_svg(&self, bound: f64) -> String {
        let label_w = self.row_labels.iter().map(|l| l.chars().count()).max().unwrap_or(0) * CHAR_WIDTH + 2 * PAD;
        let header_h = 2 * CELL;
        let (rows, cols) = self.values.shape();
        let width = label_w + cols * CELL + PAD;
        let height = header_h + rows * CELL + CELL;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
        );
        for (j, label) in self.col_labels.iter().enumerate() {
            let x = label_w + j * CELL + CELL / 2;
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
                header_h - PAD,
                xml_escape(label)
            );
        }
        for (i, label) in self.row_labels.iter().enumerate() {
            let y = header_h + i * CELL;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                label_w - PAD,
                y + CELL / 2 + 4,
                xml_escape(label)
            );
            for j in 0..cols {
                let v = self.values[(i, j)];
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="{}"><title>{}</title></rect>"#,
                    label_w + j * CELL,
                    diverging_color(v, bound),
                    v
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">scale: -{bound} blue, 0 white, +{bound} red</text>"#,
            PAD,
            header_h + rows * CELL + CELL - PAD,
        );
        s.push_str("</svg>\n");
        s
    }

    /// Header `label,<col labels…>`, then one row per row label.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["label".to_string()];
        header.extend(self.col_labels.iter().cloned());
        w.write_record(&header)?;
        for (i, label) in self.row_labels.iter().enumerate() {
            let mut rec = vec![label.clone()];
            rec.extend(self.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("utf-8 csv"))
    }

    pub fn read_csv(reader: impl BufRead) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let col_labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut row_labels = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != col_labels.len() + 1 {
                return Err(Error::Parse {
                    line: i + 2,
                    kind: ParseErrorKind::RowLength { expected: col_labels.len() + 1, found: rec.len() },
                });
            }
            row_labels.push(rec[0].to_string());
            for tok in rec.iter().skip(1) {
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: i + 2,
                    kind: ParseErrorKind::NonNumeric(tok.to_string()),
                })?;
                values.push(v);
            }
        }
        let m = DMatrix::from_row_slice(row_labels.len(), col_labels.len(), &values);
        Self::new(row_labels, col_labels, m)
    }

    /// Writes the SVG and a CSV next to it (same stem, `.csv`).
    pub fn write(&self, svg_path: impl AsRef<Path>, bound: f64) -> Result<PathBuf> {
        let svg_path = svg_path.as_ref();
        fs::write(svg_path, self.to_svg(bound))?;
        let csv_path = svg_path.with_extension("csv");
        fs::write(&csv_path, self.to_csv()?)?;
        Ok(csv_path)
    }
}

/// Selected rows and axes of a set, scaled to the largest magnitude shown.
pub fn heatmap_of<T: Real>(set: &EmbeddingSet<T>, axes: &[usize], rows: &[String]) -> Result<Heatmap> {
    if axes.is_empty() || rows.is_empty() {
        return Err(Error::invalid("heatmap needs at least one row and one axis"));
    }
    if let Some(a) = axes.iter().find(|&&a| a >= set.ncols()) {
        return Err(Error::invalid(format!("axis {a} out of range for {} axes", set.ncols())));
    }
    let index = set.label_index();
    let mut idx = Vec::with_capacity(rows.len());
    for label in rows {
        match index.get(label.as_str()) {
            Some(&i) => idx.push(i),
            None => return Err(Error::invalid(format!("unknown label {label:?}"))),
        }
    }
    let m = DMatrix::from_fn(idx.len(), axes.len(), |i, j| set.matrix()[(idx[i], axes[j])].as_f64());
    Heatmap::new(rows.to_vec(), axes.iter().map(|a| a.to_string()).collect(), m)
}

pub fn render_heatmap<T: Real>(
    set: &EmbeddingSet<T>,
    axes: &[usize],
    rows: &[String],
    out: impl AsRef<Path>,
) -> Result<Heatmap> {
    let h = heatmap_of(set, axes, rows)?;
    h.write(out, h.max_abs())?;
    Ok(h)
}

/// Correlation grid on a scale fixed to `[-1, 1]`.
pub fn render_corr_grid<T: Real>(corr: &DMatrix<T>, out: impl AsRef<Path>) -> Result<Heatmap> {
    let m = corr.map(|v| v.as_f64());
    let h = Heatmap::new(
        (0..m.nrows()).map(|i| i.to_string()).collect(),
        (0..m.ncols()).map(|j| j.to_string()).collect(),
        m,
    )?;
    h.write(out, 1.0)?;
    Ok(h)
}
