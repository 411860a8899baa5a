//! Command-line commands: train, evaluate, ablate, report.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::data::EvalSplit;
use crate::error::{Error, Result};
use crate::evaluate::evaluate_model;
use crate::metrics::{tradeoff, MetricsReport};
use crate::pipeline::{build_model, fingerprint_path, load_dataset, VocabFingerprint};
use crate::training::{fit, load_checkpoint, save_checkpoint, EpochStats};
use crate::variant::Variant;

/// Environment variable that overrides the config seed.
pub const SEED_ENV: &str = "D2NN_SEED";

#[derive(Debug, Parser)]
#[command(name = "d2nn", version, about = "Accuracy- and diversity-aware news recommender")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write its checkpoint, epoch log, and resolved config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on a held-out split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Comma-separated cutoffs.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// Metrics CSV path; defaults to `metrics_<split>.csv` beside the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and test several variants with one seed.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated variant names.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        variants: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Merge metric CSVs into one table.
    Report {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: ReportFormat,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Md,
}

/// Seed precedence: flag, then environment, then config.
pub fn resolve_seed(flag: Option<u64>, cfg: &mut RunConfig) -> Result<()> {
    if let Some(s) = flag {
        cfg.seed = s;
    } else if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.seed = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            resolve_seed(seed, &mut cfg)?;
            train(&cfg, &out).map(|_| ())
        }
        Command::Evaluate {
            checkpoint,
            config,
            split,
            k,
            out,
            seed,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            resolve_seed(seed, &mut cfg)?;
            if let Some(k) = k {
                cfg.evaluation.metric_ks = k;
                cfg.validate()?;
            }
            let split: EvalSplit = split.parse()?;
            let report = evaluate(&cfg, &checkpoint, split)?;
            let out = out.unwrap_or_else(|| {
                let name = match split {
                    EvalSplit::Validation => "metrics_validation.csv",
                    EvalSplit::Test => "metrics_test.csv",
                };
                checkpoint.with_file_name(name)
            });
            report.write_csv(&out)?;
            println!("tradeoff {}", report.tradeoff);
            Ok(())
        }
        Command::Ablate {
            config,
            variants,
            out,
            seed,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            resolve_seed(seed, &mut cfg)?;
            let variants = variants
                .iter()
                .filter(|v| !v.trim().is_empty())
                .map(|v| v.parse())
                .collect::<Result<Vec<Variant>>>()?;
            let table = ablate(&cfg, &variants, &out)?;
            print!("{table}");
            Ok(())
        }
        Command::Report { inputs, format, out } => {
            let text = report(&inputs, format)?;
            match out {
                Some(p) => write(&p, &text),
                None => {
                    let mut so = std::io::stdout().lock();
                    so.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
                }
            }
        }
    }
}

/// Trains per `cfg` into `out`: `config.resolved.json` first, then
/// `epochs.csv` and `model.ckpt` updated after every epoch. The checkpoint
/// always holds the best epoch so far, so a failure mid-run leaves the last
/// good parameters in place.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    create_dir(out)?;
    write(&out.join("config.resolved.json"), &cfg.to_json())?;
    let dataset = load_dataset(cfg)?;
    let (model, mut store) = build_model(cfg, &dataset)?;
    let ckpt = out.join("model.ckpt");
    VocabFingerprint::of(&dataset.catalog).write(&fingerprint_path(&ckpt))?;
    let epochs_path = out.join("epochs.csv");
    let mut log = format!("{}\n", EpochStats::CSV_HEADER);
    write(&epochs_path, &log)?;
    let mut on_epoch = |stats: &EpochStats, store: &_, improved: bool| -> Result<()> {
        let _ = writeln!(log, "{}", stats.csv_row());
        write(&epochs_path, &log)?;
        if improved {
            save_checkpoint(store, &ckpt)?;
        }
        Ok(())
    };
    let report = fit(
        &model,
        &mut store,
        &dataset,
        &cfg.optimizer,
        &cfg.evaluation,
        cfg.seed,
        &mut on_epoch,
    )?;
    log::info!("kept epoch {} (validation auc {:.4})", report.best_epoch, report.best_val_auc);
    Ok(ckpt)
}

/// Rebuilds the model from `cfg`, loads `checkpoint` into it, and scores
/// `split`.
pub fn evaluate(cfg: &RunConfig, checkpoint: &Path, split: EvalSplit) -> Result<MetricsReport> {
    cfg.validate()?;
    let ckpt = load_checkpoint(checkpoint)?;
    let dataset = load_dataset(cfg)?;
    let fp_path = fingerprint_path(checkpoint);
    if fp_path.exists() && VocabFingerprint::read(&fp_path)? != VocabFingerprint::of(&dataset.catalog) {
        return Err(Error::Config(format!(
            "{} was trained on a different vocabulary than this config loads",
            checkpoint.display()
        )));
    }
    let (model, mut store) = build_model(cfg, &dataset)?;
    ckpt.apply_to(&mut store)?;
    evaluate_model(&model, &store, &dataset, split, &cfg.evaluation, cfg.seed)
}

pub const ABLATION_HEADER: &str = "variant,auc,mean_ndcg,mean_div,tradeoff";

/// Trains and tests each variant under `out/<variant>/`, then writes the
/// combined `ablation.csv`. Returns its contents.
pub fn ablate(cfg: &RunConfig, variants: &[Variant], out: &Path) -> Result<String> {
    if variants.is_empty() {
        return Err(Error::Config("no variants given".into()));
    }
    create_dir(out)?;
    let mut table = format!("{ABLATION_HEADER}\n");
    for v in variants {
        let mut c = cfg.clone();
        c.variant = *v;
        c.validate()?;
        let dir = out.join(v.file_stem());
        let ckpt = train(&c, &dir)?;
        let report = evaluate(&c, &ckpt, EvalSplit::Test)?;
        report.write_csv(out.join(format!("{}.csv", v.file_stem())))?;
        let _ = writeln!(
            table,
            "{v},{},{},{},{}",
            report.auc, report.mean_ndcg, report.mean_div, report.tradeoff
        );
    }
    write(&out.join("ablation.csv"), &table)?;
    Ok(table)
}

fn label_of(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    // Evaluation output sits in a run directory; name it after that.
    if stem.starts_with("metrics_") {
        if let Some(parent) = path.parent().and_then(|p| p.file_name()) {
            return parent.to_string_lossy().into_owned();
        }
    }
    stem
}

/// Merges metric CSVs into one row per input. A single CSV input passes
/// through unchanged in CSV mode.
pub fn report(inputs: &[PathBuf], format: ReportFormat) -> Result<String> {
    if inputs.is_empty() {
        return Err(Error::Config("no report inputs".into()));
    }
    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    let mut texts = Vec::new();
    for p in inputs {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let r = MetricsReport::from_csv(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        let label = label_of(p);
        if let Some((_, prev)) = rows.iter().find(|(l, _)| *l == label) {
            if prev != &r {
                return Err(Error::Config(format!("conflicting metric rows for {label}")));
            }
            continue;
        }
        if let Some((_, first)) = rows.first() {
            if first.ks != r.ks {
                return Err(Error::Config(format!("{} uses cutoffs {:?}, expected {:?}", p.display(), r.ks, first.ks)));
            }
        }
        texts.push(text);
        rows.push((label, r));
    }
    if format == ReportFormat::Csv && rows.len() == 1 {
        return Ok(texts.remove(0));
    }
    let ks = rows[0].1.ks.clone();
    let mut cols: Vec<String> = vec!["rmse".into(), "auc".into()];
    cols.extend(ks.iter().map(|k| format!("ndcg@{k}")));
    cols.extend(ks.iter().map(|k| format!("div@{k}")));
    cols.extend(["mean_ndcg", "mean_div", "tradeoff"].map(String::from));
    let values = |r: &MetricsReport| -> Vec<f64> {
        let mut v = vec![r.rmse, r.auc];
        v.extend(&r.ndcg);
        v.extend(&r.div);
        v.extend([r.mean_ndcg, r.mean_div, r.tradeoff]);
        v
    };
    let mut s = String::new();
    match format {
        ReportFormat::Csv => {
            let _ = writeln!(s, "variant,{}", cols.join(","));
            for (label, r) in &rows {
                let vals: Vec<String> = values(r).iter().map(f64::to_string).collect();
                let _ = writeln!(s, "{label},{}", vals.join(","));
            }
        }
        ReportFormat::Md => {
            let _ = writeln!(s, "| variant | {} |", cols.join(" | "));
            let _ = writeln!(s, "|---|{}", "---:|".repeat(cols.len()));
            for (label, r) in &rows {
                let vals: Vec<String> = values(r).iter().map(|v| format!("{v:.3}")).collect();
                let _ = writeln!(s, "| {label} | {} |", vals.join(" | "));
            }
        }
    }
    Ok(s)
}

/// Tradeoff recomputed from a report's own means.
pub fn recomputed_tradeoff(r: &MetricsReport) -> f64 {
    tradeoff(r.mean_ndcg, r.mean_div)
}
