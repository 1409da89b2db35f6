//! Cross-validation, ablation sweeps and on-disk artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::data::group_kfold;
use crate::error::{Error, Result};
use crate::metrics::{render_table, FoldReport};
use crate::scheduler::write_trajectory_csv;

use super::config::{ExperimentConfig, Strategy};
use super::train::{train_one_fold, FoldOutcome};

/// A fold that did not finish.
#[derive(Debug, Clone)]
pub struct FoldFailure {
    pub seed: u64,
    pub fold: usize,
    pub error: String,
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    /// Successful folds ordered by `(seed, fold)`.
    pub outcomes: Vec<FoldOutcome>,
    pub failures: Vec<FoldFailure>,
    /// Aggregate over every successful `(seed, fold)` run.
    pub report: FoldReport,
}

impl RunArtifacts {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    /// Mean over seeds of the post-warmup discard precision.
    pub fn discard_precision(&self) -> Option<f64> {
        let values: Vec<f64> = self
            .outcomes
            .iter()
            .filter_map(|o| o.discard_precision(self.config.warmup_epochs))
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    /// Writes the resolved config, metrics CSV, rendered table, discard
    /// summary, per-fold trajectories and checkpoints under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("trajectories"))?;
        fs::create_dir_all(dir.join("checkpoints"))?;
        fs::write(dir.join("config.toml"), self.config.to_toml_string()?)?;
        FoldReport::write_csv(
            std::slice::from_ref(&self.report),
            BufWriter::new(fs::File::create(dir.join("metrics.csv"))?),
        )?;
        fs::write(dir.join("report.txt"), self.render())?;

        let mut w = csv::Writer::from_path(dir.join("discards.csv"))?;
        w.write_record([
            "seed",
            "fold",
            "epoch",
            "seen",
            "seen_corrupted",
            "discarded",
            "discarded_corrupted",
        ])?;
        for o in &self.outcomes {
            for (e, d) in o.discards.iter().enumerate() {
                w.write_record([
                    o.seed.to_string(),
                    o.fold.to_string(),
                    e.to_string(),
                    d.seen.to_string(),
                    d.seen_corrupted.to_string(),
                    d.discarded.to_string(),
                    d.discarded_corrupted.to_string(),
                ])?;
            }
        }
        w.flush()?;

        for o in &self.outcomes {
            let stem = format!("s{}_f{}", o.seed, o.fold);
            write_trajectory_csv(
                BufWriter::new(fs::File::create(
                    dir.join("trajectories")
                        .join(format!("trajectory_{stem}.csv")),
                )?),
                &o.trajectory,
            )?;
            o.model.write_checkpoint(BufWriter::new(fs::File::create(
                dir.join("checkpoints").join(format!("model_{stem}.txt")),
            )?))?;
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = render_table(std::slice::from_ref(&self.report));
        writeln!(
            out,
            "\n{} fold runs over {} seed(s)",
            self.outcomes.len(),
            self.config.seeds.len()
        )
        .unwrap();
        if let Some(p) = self.discard_precision() {
            writeln!(out, "corrupted share of discarded samples: {p:.4}").unwrap();
        }
        for f in &self.failures {
            writeln!(out, "FAILED seed {} fold {}: {}", f.seed, f.fold, f.error).unwrap();
        }
        out
    }
}

/// Short display name for a configuration's strategy.
pub fn strategy_label(config: &ExperimentConfig) -> String {
    match config.strategy {
        Strategy::CrossEntropy => "cross_entropy".into(),
        Strategy::Acl => format!("acl(L={})", config.queue_length),
        Strategy::AclFixedAlpha(a) => format!("acl(L={},alpha={a})", config.queue_length),
    }
}

/// Group k-fold cross-validation for every configured seed. Folds run in
/// parallel; results are ordered by `(seed, fold)`.
pub fn run_cross_validation(config: &ExperimentConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &seed in &config.seeds {
        let dataset = config.load_dataset(seed)?;
        let plan = group_kfold(&dataset, config.folds, seed)?;
        jobs.push((seed, dataset, plan));
    }
    let tasks: Vec<(usize, usize)> = (0..jobs.len())
        .flat_map(|j| (0..config.folds).map(move |f| (j, f)))
        .collect();
    let results: Vec<(u64, usize, Result<FoldOutcome>)> = tasks
        .par_iter()
        .map(|&(j, fold)| {
            let (seed, dataset, plan) = &jobs[j];
            (
                *seed,
                fold,
                train_one_fold(config, dataset, plan, fold, *seed),
            )
        })
        .collect();

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (seed, fold, r) in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                warn!("seed {seed} fold {fold} failed: {e}");
                failures.push(FoldFailure {
                    seed,
                    fold,
                    error: e.to_string(),
                });
            }
        }
    }
    if outcomes.is_empty() {
        let first = failures
            .first()
            .map(|f| f.error.clone())
            .unwrap_or_default();
        return Err(Error::Data(format!(
            "every fold failed; first error: {first}"
        )));
    }
    let report = FoldReport::new(
        strategy_label(config),
        outcomes.iter().map(|o| o.metrics.values()).collect(),
        !failures.is_empty(),
    )?;
    info!(
        "{}: AUC {:.4} ± {:.4}",
        report.label, report.mean[4], report.std[4]
    );
    let artifacts = RunArtifacts {
        config: config.clone(),
        outcomes,
        failures,
        report,
    };
    if let Some(dir) = &config.output_dir {
        artifacts.write_to(dir)?;
    }
    Ok(artifacts)
}

/// One column of an `α` sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSetting {
    Fixed(f64),
    /// Use the model certainty `θ`.
    Theta,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AblationAxis {
    /// Queue lengths; a leading cross-entropy baseline column is always added.
    QueueLength(Vec<usize>),
    Alpha(Vec<AlphaSetting>),
}

impl AblationAxis {
    /// Lengths 16, 32, 64.
    pub fn default_queue_lengths() -> Self {
        AblationAxis::QueueLength(vec![16, 32, 64])
    }

    /// `α` ∈ {0, 1, 2} plus `θ`.
    pub fn default_alphas() -> Self {
        AblationAxis::Alpha(vec![
            AlphaSetting::Fixed(0.0),
            AlphaSetting::Fixed(1.0),
            AlphaSetting::Fixed(2.0),
            AlphaSetting::Theta,
        ])
    }

    /// `(column heading, config)` for each setting.
    pub fn settings(&self, base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
        let with = |strategy, queue_length| ExperimentConfig {
            strategy,
            queue_length,
            output_dir: None,
            ..base.clone()
        };
        match self {
            AblationAxis::QueueLength(lengths) => {
                let mut v = vec![(
                    "0 (baseline)".to_string(),
                    with(Strategy::CrossEntropy, base.queue_length),
                )];
                v.extend(
                    lengths
                        .iter()
                        .map(|&l| (l.to_string(), with(Strategy::Acl, l))),
                );
                v
            }
            AblationAxis::Alpha(alphas) => alphas
                .iter()
                .map(|a| match a {
                    AlphaSetting::Fixed(x) => (
                        format!("{x}"),
                        with(Strategy::AclFixedAlpha(*x), base.queue_length),
                    ),
                    AlphaSetting::Theta => {
                        ("theta".to_string(), with(Strategy::Acl, base.queue_length))
                    }
                })
                .collect(),
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            AblationAxis::QueueLength(_) => "Queue length L",
            AblationAxis::Alpha(_) => "Hyper-parameter alpha",
        }
    }
}

#[derive(Debug)]
pub struct AblationTable {
    pub title: String,
    pub columns: Vec<(String, RunArtifacts)>,
}

impl AblationTable {
    /// Two rows: the settings, then AUC as `mean±std` in percent.
    pub fn render(&self) -> String {
        let mut head = vec![self.title.clone()];
        let mut auc = vec!["AUC".to_string()];
        for (name, run) in &self.columns {
            head.push(name.clone());
            auc.push(format!(
                "{:.2}±{:.2}{}",
                100.0 * run.report.mean[4],
                100.0 * run.report.std[4],
                if run.is_complete() { "" } else { "*" }
            ));
        }
        let widths: Vec<usize> = head
            .iter()
            .zip(&auc)
            .map(|(a, b)| a.chars().count().max(b.chars().count()))
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = String::new();
        writeln!(out, "{}", line(&head)).unwrap();
        writeln!(
            out,
            "{}",
            "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))
        )
        .unwrap();
        writeln!(out, "{}", line(&auc)).unwrap();
        out
    }

    pub fn reports(&self) -> Vec<FoldReport> {
        self.columns
            .iter()
            .map(|(name, run)| FoldReport {
                label: name.clone(),
                ..run.report.clone()
            })
            .collect()
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        FoldReport::write_csv(
            &self.reports(),
            BufWriter::new(fs::File::create(dir.join("ablation.csv"))?),
        )?;
        fs::write(dir.join("ablation.txt"), self.render())?;
        for (i, (_, run)) in self.columns.iter().enumerate() {
            run.write_to(&setting_dir(dir, i))?;
        }
        Ok(())
    }
}

fn setting_dir(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("setting_{index}"))
}

/// One cross-validation per setting on `axis`.
pub fn run_ablation(base: &ExperimentConfig, axis: &AblationAxis) -> Result<AblationTable> {
    match axis {
        AblationAxis::QueueLength(v) if v.is_empty() || v.contains(&0) => {
            return Err(Error::Config("queue lengths must be positive".into()))
        }
        AblationAxis::Alpha(v) if v.is_empty() => {
            return Err(Error::Config("alpha axis is empty".into()))
        }
        _ => {}
    }
    let settings = axis.settings(base);
    for (_, cfg) in &settings {
        cfg.validate()?;
    }
    let runs: Vec<Result<RunArtifacts>> = settings
        .par_iter()
        .map(|(_, cfg)| run_cross_validation(cfg))
        .collect();
    let mut columns = Vec::with_capacity(runs.len());
    for ((name, _), run) in settings.into_iter().zip(runs) {
        columns.push((name, run?));
    }
    let table = AblationTable {
        title: axis.title().to_string(),
        columns,
    };
    if let Some(dir) = &base.output_dir {
        table.write_to(dir)?;
    }
    Ok(table)
}
