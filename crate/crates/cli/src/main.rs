use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use icaglot::axisalign::{self, FillMode, MatchMode, TranslationLexicon, Weighting};
use icaglot::embedstore::{self, load_embeddings, save_embeddings};
use icaglot::evalsuite::{self, AnalogyOptions, IntrusionConfig};
use icaglot::fastica::{self, IcaConfig};
use icaglot::nongauss::{self, Contrast};
use icaglot::pipeline::{self, PipelineSpec};
use icaglot::report::Table;
use icaglot::rotation::{self, CfCriterion, CfPreset, RotateOptions};
use icaglot::translate::{self, FitMethod, GoldDictionary, RetrievalConfig, RetrievalMethod};
use icaglot::whitening::{self, RankPolicy};
use icaglot::{EmbeddingSet64, Error, EvalReport, FrequencyTable, LinearMap64, Result};

#[derive(Parser)]
#[command(name = "icaglot", version, about = "Independent semantic axes for word embeddings")]
struct Cli {
    /// Seed for every randomized step [default: 0, or the pipeline spec's seed].
    #[arg(long, global = true, env = "ICAGLOT_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate an embedding file and print its shape.
    Load {
        input: PathBuf,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Re-write an embedding file, optionally row-normalized.
    Save {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        normalize: bool,
    },
    /// Frequency-weighted vocabulary resampling.
    Resample {
        #[arg(long)]
        input: PathBuf,
        /// "label value" lines, counts or probabilities.
        #[arg(long)]
        freq: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        pad_to: usize,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Center and whiten (or only rotate) an embedding set.
    Whiten {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = WhitenMethod::Pca)]
        method: WhitenMethod,
        /// Keep only the leading directions of rank-deficient input.
        #[arg(long)]
        truncate_rank: bool,
        /// LinearMap JSON including the centering mean.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// FastICA rotation of whitened input.
    Ica {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "logcosh")]
        contrast: Contrast,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Leave signs and order as the optimizer returned them.
        #[arg(long)]
        no_fix_signs: bool,
        #[arg(long)]
        map: Option<PathBuf>,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Crawford–Ferguson orthogonal rotation.
    Rotate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// quartimax, varimax, parsimax, facparsimony or a kappa in [0, 1].
        #[arg(long, default_value = "varimax")]
        preset: CfPreset,
        #[arg(long, default_value_t = 1)]
        starts: usize,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        fix_signs: bool,
        #[arg(long)]
        map: Option<PathBuf>,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Per-axis skewness, kurtosis and contrast gaps.
    Measure {
        #[arg(long)]
        input: PathBuf,
        /// Per-axis CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also check whiteness at this tolerance.
        #[arg(long)]
        whiteness_tol: Option<f64>,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Match target axes to source axes by cross-correlation.
    Align {
        #[command(flatten)]
        pair: PairArgs,
        /// Target set with columns reordered into source order.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = MatchArg::Signed)]
        mode: MatchArg,
        /// Maximum-total assignment instead of greedy selection.
        #[arg(long)]
        optimal: bool,
        /// Zero-fill unmatched source positions instead of dropping them.
        #[arg(long)]
        zero_fill: bool,
        #[arg(long)]
        matching: Option<PathBuf>,
        #[arg(long)]
        corr_csv: Option<PathBuf>,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Fit a supervised map from source to target rows.
    TranslateFit {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, default_value = "ls")]
        method: FitMethod,
        /// Skip centering and row normalization.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        map: PathBuf,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Top-1 translation accuracy by nearest-neighbor retrieval.
    TranslateEval {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Map applied to source rows; without it rows are compared as is.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        raw: bool,
        #[arg(long, default_value = "csls")]
        retrieval: RetrievalMethod,
        #[arg(long, env = "ICAGLOT_CSLS_K", default_value_t = 10)]
        csls_k: usize,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Word-intrusion DistRatio.
    EvalIntrusion {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        k_top: usize,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// Use the rows as given instead of normalizing them.
        #[arg(long)]
        raw: bool,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Analogy top-n accuracy after top-k truncation.
    EvalAnalogy {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        /// Components kept per row; defaults to all.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, env = "ICAGLOT_TOPN", default_value_t = 10)]
        topn: usize,
        /// Allow the three query words as answers.
        #[arg(long)]
        include_queries: bool,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Spearman correlation with human similarity ratings.
    EvalSimilarity {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        out: ReportOut,
    },
    /// SVG heatmap of selected rows and axes, with a CSV sidecar.
    PlotHeatmap {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        axes: Vec<usize>,
        /// Row labels; defaults to the top rows of every selected axis.
        #[arg(long, value_delimiter = ',')]
        rows: Vec<String>,
        #[arg(long, default_value_t = 5)]
        top_per_axis: usize,
        /// Row-normalize before selecting.
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// SVG grid of source/target axis cross-correlations.
    PlotCorr {
        #[command(flatten)]
        pair: PairArgs,
        /// Limit to the leading axes of both sets.
        #[arg(long)]
        axes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Name each axis by its top row and list the leading rows.
    TopAxes {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        per_axis: usize,
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Run a chain of steps.
    Pipeline {
        /// JSON spec with steps, input, output, maps, seed.
        #[arg(long, conflicts_with_all = ["input", "steps"])]
        spec: Option<PathBuf>,
        #[arg(long, requires = "steps")]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// e.g. center,pca,ica,fix-signs
        #[arg(long)]
        steps: Option<String>,
        #[arg(long)]
        maps: Option<PathBuf>,
        #[command(flatten)]
        out: ReportOut,
    },
}

#[derive(Args)]
struct ReportOut {
    /// JSON report path; stdout when absent.
    #[arg(long = "out")]
    path: Option<PathBuf>,
}

impl ReportOut {
    fn emit(&self, report: &EvalReport) -> Result<()> {
        match &self.path {
            Some(p) => report.write_json(p),
            None => {
                println!("{}", report.to_json()?);
                Ok(())
            }
        }
    }
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Two-column translation pairs; identical labels when absent.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    inverse_frequency: bool,
}

impl PairArgs {
    fn load(&self) -> Result<(EmbeddingSet64, EmbeddingSet64, TranslationLexicon)> {
        let a = load_embeddings(&self.source)?;
        let b = load_embeddings(&self.target)?;
        let weighting = if self.inverse_frequency { Weighting::InverseFrequency } else { Weighting::Uniform };
        let raw = match &self.lexicon {
            Some(p) => axisalign::load_pairs(p)?,
            None => a.labels().iter().map(|l| (l.clone(), l.clone())).collect(),
        };
        let lex = axisalign::build_lexicon(&raw, &a, &b, weighting)?;
        Ok((a, b, lex))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WhitenMethod {
    Center,
    Pca,
    Zca,
    PcaRotate,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchArg {
    Signed,
    Absolute,
}

fn save_map(map: &LinearMap64, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => map.save(p),
        None => Ok(()),
    }
}

/// Prepends the centering mean to a map fitted on centered data.
fn with_mean(center: &LinearMap64, map: LinearMap64) -> Result<LinearMap64> {
    LinearMap64::new(map.kind, center.mean.clone(), map.matrix)
}

fn run(cli: Cli) -> Result<()> {
    let seed_flag = cli.seed;
    let seed = seed_flag.unwrap_or(0);
    match cli.command {
        Command::Load { input, out } => {
            let set = load_embeddings::<f64>(&input)?;
            out.emit(
                &EvalReport::new("load")
                    .metric("rows", set.nrows() as f64)
                    .metric("dims", set.ncols() as f64),
            )
        }
        Command::Save { input, output, normalize } => {
            let mut set = load_embeddings::<f64>(&input)?;
            if normalize {
                set = embedstore::normalize_rows(&set)?;
            }
            save_embeddings(&set, &output)
        }
        Command::Resample { input, freq, alpha, draws, pad_to, output, out } => {
            let set = load_embeddings::<f64>(&input)?;
            let freq = FrequencyTable::load(&freq)?;
            let r = embedstore::resample_vocabulary(&set, &freq, alpha, draws, pad_to, seed)?;
            save_embeddings(&r.set, &output)?;
            out.emit(
                &EvalReport::new("resample")
                    .metric("rows", r.set.nrows() as f64)
                    .metric("unique_drawn", r.unique_drawn as f64)
                    .metric("padded", r.padded as f64),
            )
        }
        Command::Whiten { input, output, method, truncate_rank, map } => {
            let set = load_embeddings::<f64>(&input)?;
            let policy = if truncate_rank { RankPolicy::Truncate } else { RankPolicy::Strict };
            let (c, center) = whitening::center(&set)?;
            let (out, m) = match method {
                WhitenMethod::Center => (c, center.clone()),
                WhitenMethod::Pca => whitening::pca_whiten(&c, policy)?,
                WhitenMethod::Zca => whitening::zca_whiten(&c)?,
                WhitenMethod::PcaRotate => whitening::pca_rotate(&c, policy)?,
            };
            save_embeddings(&out, &output)?;
            save_map(&with_mean(&center, m)?, map.as_deref())
        }
        Command::Ica { input, output, contrast, max_iter, tol, no_fix_signs, map, out } => {
            let z = load_embeddings::<f64>(&input)?;
            let cfg = IcaConfig { contrast, max_iter, tol, seed, ..IcaConfig::default() };
            let mut r = fastica::fast_ica(&z, &cfg)?;
            if !no_fix_signs {
                r = fastica::fix_signs_and_sort(r)?;
            }
            save_embeddings(&r.sources, &output)?;
            save_map(&r.rotation, map.as_deref())?;
            let mut report = EvalReport::new("ica").metric("iterations", r.iterations_used as f64);
            report.passed = Some(r.converged);
            if !r.converged {
                report.flags.push("not-converged".into());
            }
            out.emit(&report)
        }
        Command::Rotate { input, output, preset, starts, max_iter, tol, fix_signs, map, out } => {
            let set = load_embeddings::<f64>(&input)?;
            let crit = CfCriterion::for_set(preset, &set)?;
            let opts = RotateOptions { max_iter, tol, seed, starts };
            let r = rotation::cf_rotate(&set, &crit, &opts)?;
            let (rotated, m) = if fix_signs {
                fastica::fix_signs_and_sort_set(&r.set, &r.map)?
            } else {
                (r.set.clone(), r.map.clone())
            };
            save_embeddings(&rotated, &output)?;
            save_map(&m, map.as_deref())?;
            let mut report = EvalReport::new("rotate")
                .metric("kappa", crit.kappa)
                .metric("criterion", r.value)
                .metric("iterations", r.iterations as f64);
            report.passed = Some(r.converged);
            out.emit(&report)
        }
        Command::Measure { input, csv, whiteness_tol, out } => {
            let set = load_embeddings::<f64>(&input)?;
            let diag = nongauss::diagnose(&set)?;
            if let Some(p) = csv {
                diag.to_table().write_csv(fs::File::create(p)?)?;
            }
            let mut report = diag.summary_report();
            if let Some(tol) = whiteness_tol {
                let w = whitening::whiteness_report(&set, tol);
                report.metrics.extend(w.metrics);
                report.flags.extend(w.flags);
                report.passed = w.passed;
            }
            out.emit(&report)
        }
        Command::Align { pair, output, mode, optimal, zero_fill, matching, corr_csv, out } => {
            let (a, b, lex) = pair.load()?;
            let corr = axisalign::cross_correlation(&a, &b, &lex)?;
            let mode = match mode {
                MatchArg::Signed => MatchMode::Signed,
                MatchArg::Absolute => MatchMode::Absolute,
            };
            let m = if optimal {
                axisalign::optimal_match(&corr.matrix, mode)
            } else {
                axisalign::greedy_match(&corr.matrix, mode)
            };
            if let Some(p) = output {
                let fill = if zero_fill { FillMode::ZeroFill } else { FillMode::Drop };
                save_embeddings(&axisalign::apply_matching(&b, &m, fill)?, &p)?;
            }
            if let Some(p) = matching {
                fs::write(p, m.to_json()? + "\n")?;
            }
            if let Some(p) = corr_csv {
                let h = icaglot::plot::Heatmap::new(
                    (0..corr.matrix.nrows()).map(|i| i.to_string()).collect(),
                    (0..corr.matrix.ncols()).map(|j| j.to_string()).collect(),
                    corr.matrix.clone(),
                )?;
                fs::write(p, h.to_csv()?)?;
            }
            let mut table = Table::new(["source", "target", "correlation", "flipped"]);
            for t in &m.triples {
                table.push(vec![t.source.to_string(), t.target.to_string(), t.correlation.to_string(), t.flipped.to_string()]);
            }
            let mean = m.triples.iter().map(|t| t.correlation).sum::<f64>() / m.triples.len().max(1) as f64;
            let mut report = EvalReport {
                score: Some(mean),
                table: Some(table),
                ..EvalReport::new("align")
            }
            .metric("pairs", lex.len() as f64)
            .metric("matched", m.triples.len() as f64);
            for (what, axes) in [("degenerate-source", &corr.degenerate_source), ("degenerate-target", &corr.degenerate_target)] {
                if !axes.is_empty() {
                    report.flags.push(format!("{what}:{axes:?}"));
                }
            }
            out.emit(&report)
        }
        Command::TranslateFit { source, target, dict, method, raw, map, out } => {
            let mut a = load_embeddings::<f64>(&source)?;
            let mut b = load_embeddings::<f64>(&target)?;
            if !raw {
                (a, b) = translate::preprocess_supervised(&a, &b)?;
            }
            let lex = axisalign::build_lexicon(&axisalign::load_pairs(&dict)?, &a, &b, Weighting::Uniform)?;
            let (x, y) = translate::paired_rows(&a, &b, &lex)?;
            let w = translate::fit(method, &x, &y)?;
            w.save(&map)?;
            out.emit(
                &EvalReport::new("translate-fit")
                    .metric("pairs", lex.len() as f64)
                    .metric("residual", translate::residual(&x, &y, &w.matrix)),
            )
        }
        Command::TranslateEval { source, target, gold, map, raw, retrieval, csls_k, predictions, out } => {
            let mut a = load_embeddings::<f64>(&source)?;
            let mut b = load_embeddings::<f64>(&target)?;
            if !raw {
                (a, b) = translate::preprocess_supervised(&a, &b)?;
            }
            if let Some(p) = map {
                a = LinearMap64::load(&p)?.apply(&a)?;
            }
            let gold = GoldDictionary::load(&gold)?;
            let cfg = RetrievalConfig { method: retrieval, csls_k };
            let res = translate::evaluate_translation(&a, &b, &gold, &cfg)?;
            if let Some(p) = predictions {
                translate::save_predictions_csv(&res.predictions, &p)?;
            }
            out.emit(&EvalReport {
                score: Some(res.accuracy),
                skipped: Some(res.skipped),
                k: Some(1),
                ..EvalReport::new("translate-eval")
            }
            .metric("evaluated", res.predictions.len() as f64))
        }
        Command::EvalIntrusion { input, k_top, runs, raw, out } => {
            let set = load_embeddings::<f64>(&input)?;
            let cfg = IntrusionConfig { k_top, runs, seed, normalize: !raw, ..IntrusionConfig::default() };
            let s = evalsuite::word_intrusion(&set, &cfg)?;
            let mut table = Table::new(["axis", "dist_ratio"]);
            for (a, r) in s.per_axis.iter().enumerate() {
                table.push(vec![a.to_string(), r.to_string()]);
            }
            out.emit(&EvalReport {
                k: Some(k_top),
                score: Some(s.dist_ratio),
                skipped: Some(0),
                table: Some(table),
                ..EvalReport::new("word-intrusion")
            })
        }
        Command::EvalAnalogy { input, questions, k, topn, include_queries, out } => {
            let set = load_embeddings::<f64>(&input)?;
            let k = k.unwrap_or(set.ncols());
            let sections = evalsuite::load_analogies(&questions)?;
            let opts = AnalogyOptions { topn, exclude_queries: !include_queries };
            let mut table = Table::new(["section", "score", "evaluated", "skipped"]);
            let mut all = Vec::new();
            for s in &sections {
                let r = evalsuite::analogy_eval(&set, &s.queries, k, &opts)?;
                table.push(vec![s.name.clone(), r.score.to_string(), r.evaluated.to_string(), r.skipped.to_string()]);
                all.extend(s.queries.iter().cloned());
            }
            let total = evalsuite::analogy_eval(&set, &all, k, &opts)?;
            let mut report = total.report("analogy", k).metric("topn", topn as f64);
            report.table = Some(table);
            if include_queries {
                report.flags.push("queries-included".into());
            }
            out.emit(&report)
        }
        Command::EvalSimilarity { input, pairs, k, out } => {
            let set = load_embeddings::<f64>(&input)?;
            let k = k.unwrap_or(set.ncols());
            let pairs = evalsuite::load_similarity(&pairs)?;
            out.emit(&evalsuite::similarity_eval(&set, &pairs, k)?.report("similarity", k))
        }
        Command::PlotHeatmap { input, axes, rows, top_per_axis, normalize, out } => {
            let mut set = load_embeddings::<f64>(&input)?;
            if normalize {
                set = embedstore::normalize_rows(&set)?;
            }
            let rows = if rows.is_empty() {
                let mut picked: Vec<String> = Vec::new();
                for &a in &axes {
                    for w in evalsuite::top_words(&set, a, top_per_axis)? {
                        if !picked.contains(&w) {
                            picked.push(w);
                        }
                    }
                }
                picked
            } else {
                rows
            };
            icaglot::plot::render_heatmap(&set, &axes, &rows, &out)?;
            Ok(())
        }
        Command::PlotCorr { pair, axes, out } => {
            let (a, b, lex) = pair.load()?;
            let mut corr = axisalign::cross_correlation(&a, &b, &lex)?.matrix;
            if let Some(k) = axes {
                let (r, c) = (k.min(corr.nrows()), k.min(corr.ncols()));
                corr = corr.view((0, 0), (r, c)).into_owned();
            }
            icaglot::plot::render_corr_grid(&corr, &out)?;
            Ok(())
        }
        Command::TopAxes { input, per_axis, normalize, csv, out } => {
            let mut set = load_embeddings::<f64>(&input)?;
            if normalize {
                set = embedstore::normalize_rows(&set)?;
            }
            let report = evalsuite::top_axis_report(&set, per_axis)?;
            if let Some(p) = csv {
                report.write_csv(p)?;
            }
            out.emit(&report)
        }
        Command::Pipeline { spec, input, output, steps, maps, out } => {
            let spec = match spec {
                Some(p) => {
                    let spec = PipelineSpec::load(p)?;
                    PipelineSpec { seed: seed_flag.unwrap_or(spec.seed), ..spec }
                }
                None => {
                    let input = input.ok_or_else(|| Error::invalid("--input or --spec is required"))?;
                    let output = output.ok_or_else(|| Error::invalid("--output is required"))?;
                    let steps = steps.ok_or_else(|| Error::invalid("--steps is required"))?;
                    PipelineSpec { steps: pipeline::parse_steps(&steps)?, input, output, maps, seed }
                }
            };
            let r = pipeline::run_pipeline(&spec)?;
            let mut report = EvalReport::new("pipeline")
                .metric("rows", r.set.nrows() as f64)
                .metric("dims", r.set.ncols() as f64);
            for rec in &r.chain {
                if rec.converged == Some(false) {
                    report.flags.push(format!("{}:not-converged", rec.step));
                }
            }
            out.emit(&report)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("icaglot: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
