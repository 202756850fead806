//! Ordered transform chains over an embedding file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::embedstore::{load_embeddings, normalize_rows, save_embeddings, EmbeddingSet};
use crate::error::{Error, Result};
use crate::evalsuite::truncate_top_k;
use crate::fastica::{fast_ica, fix_signs_and_sort_set, IcaConfig};
use crate::rotation::{cf_rotate, CfCriterion, CfPreset, RotateOptions};
use crate::whitening::{self, LinearMap, RankPolicy};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Center,
    Pca,
    Zca,
    Ica,
    Rotate(CfPreset),
    FixSigns,
    Normalize,
    Truncate(usize),
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Center => f.write_str("center"),
            Step::Pca => f.write_str("pca"),
            Step::Zca => f.write_str("zca"),
            Step::Ica => f.write_str("ica"),
            Step::Rotate(CfPreset::Custom(k)) => write!(f, "rotate({k})"),
            Step::Rotate(p) => write!(f, "rotate({})", p.name()),
            Step::FixSigns => f.write_str("fix-signs"),
            Step::Normalize => f.write_str("normalize"),
            Step::Truncate(k) => write!(f, "truncate({k})"),
        }
    }
}

/// Accepts `name`, `name(arg)` and `name:arg`.
impl FromStr for Step {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = if let Some(open) = s.find('(') {
            let inner = s[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::invalid(format!("unbalanced parentheses in step {s:?}")))?;
            (&s[..open], Some(inner.trim()))
        } else if let Some((n, a)) = s.split_once(':') {
            (n, Some(a.trim()))
        } else {
            (s, None)
        };
        let step = match (name, arg) {
            ("center", None) => Step::Center,
            ("pca", None) => Step::Pca,
            ("zca", None) => Step::Zca,
            ("ica", None) => Step::Ica,
            ("rotate", None) => Step::Rotate(CfPreset::Varimax),
            ("rotate", Some(p)) => Step::Rotate(p.parse()?),
            ("fix-signs", None) => Step::FixSigns,
            ("normalize", None) => Step::Normalize,
            ("truncate", Some(k)) => Step::Truncate(
                k.parse().map_err(|_| Error::invalid(format!("truncate needs a count, got {k:?}")))?,
            ),
            _ => return Err(Error::invalid(format!("unknown step {s:?}"))),
        };
        Ok(step)
    }
}

impl Serialize for Step {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Step {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma-separated step list such as `center,pca,ica,fix-signs`.
pub fn parse_steps(s: &str) -> Result<Vec<Step>> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].parse()?);
                start = i + 1;
            }
            _ => {}
        }
    }
    if !s[start..].trim().is_empty() {
        out.push(s[start..].parse()?);
    }
    Ok(out)
}

/// Checks ordering rules: whitening needs prior centering, at most one
/// whitening, `ica` only on currently whitened data, `fix-signs` only after
/// `ica` or `rotate`.
pub fn validate_steps(steps: &[Step]) -> Result<()> {
    if steps.is_empty() {
        return Err(Error::invalid("pipeline has no steps"));
    }
    let mut centered = false;
    let mut whitened = false;
    let mut whitenings = 0;
    let mut rotated = false;
    for (i, step) in steps.iter().enumerate() {
        let fail = |msg: &str| Err(Error::invalid(format!("step {} ({step}): {msg}", i + 1)));
        match step {
            Step::Center => centered = true,
            Step::Pca | Step::Zca => {
                if !centered {
                    return fail("whitening requires a preceding center step");
                }
                whitenings += 1;
                if whitenings > 1 {
                    return fail("at most one whitening step is allowed");
                }
                whitened = true;
            }
            Step::Ica => {
                if !whitened {
                    return fail("ica requires whitened input (add center and pca or zca before it)");
                }
                rotated = true;
            }
            Step::Rotate(_) => rotated = true,
            Step::FixSigns => {
                if !rotated {
                    return fail("fix-signs must follow ica or rotate");
                }
            }
            Step::Normalize | Step::Truncate(_) => {
                centered = false;
                whitened = false;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub steps: Vec<Step>,
    pub input: PathBuf,
    pub output: PathBuf,
    /// Where the map chain goes; defaults to `<output>.maps.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maps: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl PipelineSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn maps_path(&self) -> PathBuf {
        self.maps.clone().unwrap_or_else(|| {
            let mut p = self.output.clone().into_os_string();
            p.push(".maps.json");
            PathBuf::from(p)
        })
    }
}

/// One executed step. Nonlinear steps carry no map.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StepRecord<T: Real> {
    pub step: Step,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub map: Option<LinearMap<T>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iterations: Option<usize>,
}

impl<T: Real> StepRecord<T> {
    fn new(step: Step, map: Option<LinearMap<T>>) -> Self {
        Self { step, map, converged: None, iterations: None }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput<T: Real> {
    pub set: EmbeddingSet<T>,
    pub chain: Vec<StepRecord<T>>,
}

impl<T: Real> PipelineOutput<T> {
    pub fn chain_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.chain)?)
    }
}

/// Applies `steps` in order. `seed` drives every randomized step.
pub fn run_steps<T: Real>(input: &EmbeddingSet<T>, steps: &[Step], seed: u64) -> Result<PipelineOutput<T>> {
    validate_steps(steps)?;
    let mut set = input.clone();
    let mut chain: Vec<StepRecord<T>> = Vec::with_capacity(steps.len());
    for &step in steps {
        let record = match step {
            Step::Center => {
                let (out, map) = whitening::center(&set)?;
                set = out;
                StepRecord::new(step, Some(map))
            }
            Step::Pca => {
                let (out, map) = whitening::pca_whiten(&set, RankPolicy::Strict)?;
                set = out;
                StepRecord::new(step, Some(map))
            }
            Step::Zca => {
                let (out, map) = whitening::zca_whiten(&set)?;
                set = out;
                StepRecord::new(step, Some(map))
            }
            Step::Ica => {
                let r = fast_ica(&set, &IcaConfig::with_seed(seed))?;
                set = r.sources;
                StepRecord { converged: Some(r.converged), iterations: Some(r.iterations_used), ..StepRecord::new(step, Some(r.rotation)) }
            }
            Step::Rotate(preset) => {
                let crit = CfCriterion::for_set(preset, &set)?;
                let r = cf_rotate(&set, &crit, &RotateOptions { seed, ..RotateOptions::default() })?;
                set = r.set;
                StepRecord { converged: Some(r.converged), iterations: Some(r.iterations), ..StepRecord::new(step, Some(r.map)) }
            }
            Step::FixSigns => {
                let identity = LinearMap::rotation(nalgebra::DMatrix::identity(set.ncols(), set.ncols()))?;
                let (out, signed) = fix_signs_and_sort_set(&set, &identity)?;
                set = out;
                StepRecord::new(step, Some(signed))
            }
            Step::Normalize => {
                set = normalize_rows(&set)?;
                StepRecord::new(step, None)
            }
            Step::Truncate(k) => {
                set = truncate_top_k(&set, k)?;
                StepRecord::new(step, None)
            }
        };
        chain.push(record);
    }
    Ok(PipelineOutput { set, chain })
}

/// Loads the input, runs the steps, and writes the output set and map chain.
pub fn run_pipeline(spec: &PipelineSpec) -> Result<PipelineOutput<f64>> {
    validate_steps(&spec.steps)?;
    let input: EmbeddingSet<f64> = load_embeddings(&spec.input)?;
    let out = run_steps(&input, &spec.steps, spec.seed)?;
    save_embeddings(&out.set, &spec.output)?;
    fs::write(spec.maps_path(), out.chain_json()? + "\n")?;
    Ok(out)
}
