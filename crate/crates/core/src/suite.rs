//! Experiment suites: several run configurations, each repeated over seeds,
//! with CSV and summary export.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::config::{validate_seeds, ConfigError};
use crate::corpus::{generate, MultilingualCorpus};
use crate::par::Exec;
use crate::strategy::{SchedulerVariant, StrategyKind};
use crate::trainer::{
    pareto_points, train_baseline_on, train_pareto_md_on, write_pareto_csv, write_run_csv, write_weight_rows, RunRecord,
    NoObserver, TrainConfig, TrainError, WEIGHT_CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid suite: {0}")]
    Invalid(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("writing outputs: {0}")]
    Io(#[from] io::Error),
}

impl SuiteError {
    /// Whether the error is a configuration problem rather than a training failure.
    pub fn is_validation(&self) -> bool {
        match self {
            SuiteError::Config(_) | SuiteError::Invalid(_) => true,
            SuiteError::Train(e) => e.is_validation(),
            SuiteError::Io(_) => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    /// Single model with the temperature and data streams of this slot.
    Baseline { slot: usize },
    Mutual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteEntry {
    pub name: String,
    pub kind: EntryKind,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSuite {
    pub name: String,
    pub entries: Vec<SuiteEntry>,
    pub seeds: Vec<u64>,
}

pub const MAIN_ENTRIES: [&str; 5] = ["baseline-t1", "baseline-thigh", "vanilla-md", "bi-pmd", "auto-pmd"];

/// Baselines at `tau1` and `tau2`, vanilla mutual distillation at `tau1`
/// for both models, and bi/auto weighting with the two temperatures.
pub fn main_suite(base: &TrainConfig, seeds: &[u64]) -> ExperimentSuite {
    let with = |strategy: StrategyKind, tau2: f64| TrainConfig {
        strategy,
        tau2,
        ..base.clone()
    };
    let entry = |name: &str, kind, config| SuiteEntry {
        name: name.into(),
        kind,
        config,
    };
    ExperimentSuite {
        name: "main".into(),
        entries: vec![
            entry("baseline-t1", EntryKind::Baseline { slot: 0 }, base.clone()),
            entry("baseline-thigh", EntryKind::Baseline { slot: 1 }, base.clone()),
            entry("vanilla-md", EntryKind::Mutual, with(StrategyKind::Bi, base.tau1)),
            entry("bi-pmd", EntryKind::Mutual, with(StrategyKind::Bi, base.tau2)),
            entry("auto-pmd", EntryKind::Mutual, with(StrategyKind::Auto, base.tau2)),
        ],
        seeds: seeds.to_vec(),
    }
}

impl ExperimentSuite {
    pub fn validate(&self) -> Result<(), SuiteError> {
        validate_seeds(&self.seeds)?;
        if self.entries.is_empty() {
            return Err(SuiteError::Invalid("suite has no entries".into()));
        }
        let mut names: Vec<&str> = self.entries.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(SuiteError::Invalid("entry names must be unique".into()));
        }
        let corpus = &self.entries[0].config.corpus;
        for e in &self.entries {
            e.config.validate()?;
            if &e.config.corpus != corpus {
                return Err(SuiteError::Invalid(format!("entry {} uses a different corpus", e.name)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntryResult {
    pub name: String,
    /// One record per seed, in seed order.
    pub records: Vec<RunRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResults {
    pub name: String,
    pub entries: Vec<EntryResult>,
}

impl SuiteResults {
    pub fn entry(&self, name: &str) -> Option<&EntryResult> {
        self.entries.iter().find(|e| e.name == name)
    }
}

fn run_one(entry: &SuiteEntry, seed: u64, corpus: &MultilingualCorpus, exec: Exec) -> Result<RunRecord, TrainError> {
    let config = TrainConfig {
        seed,
        ..entry.config.clone()
    };
    let mut record = match entry.kind {
        EntryKind::Baseline { slot } => train_baseline_on(&config, slot, corpus)?,
        EntryKind::Mutual => train_pareto_md_on(&config, corpus, exec, &mut NoObserver)?,
    };
    record.name = entry.name.clone();
    log::info!("finished {} seed {seed}", entry.name);
    Ok(record)
}

/// Runs every (entry, seed) pair; independent runs execute concurrently
/// under [`Exec::Parallel`]. Results are in entry then seed order.
pub fn run_suite(suite: &ExperimentSuite, exec: Exec) -> Result<SuiteResults, SuiteError> {
    suite.validate()?;
    let corpus = generate(&suite.entries[0].config.corpus).map_err(TrainError::from)?;
    let jobs: Vec<(usize, u64)> = (0..suite.entries.len())
        .flat_map(|e| suite.seeds.iter().map(move |&s| (e, s)))
        .collect();
    let records = exec.map(jobs, |(e, s)| run_one(&suite.entries[e], s, &corpus, exec));
    let mut it = records.into_iter();
    let mut entries = Vec::new();
    for e in &suite.entries {
        let recs = it.by_ref().take(suite.seeds.len()).collect::<Result<Vec<_>, _>>()?;
        entries.push(EntryResult {
            name: e.name.clone(),
            records: recs,
        });
    }
    Ok(SuiteResults {
        name: suite.name.clone(),
        entries,
    })
}

fn create(dir: &Path, name: &str) -> io::Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean over seeds of each model's final dev CE averaged over `languages`.
pub fn seed_mean_ce(records: &[RunRecord], model: usize, languages: &[usize]) -> f64 {
    mean(&records.iter().map(|r| r.mean_dev_ce(model, languages)).collect::<Vec<_>>())
}

/// Summary table over final dev CE: one row per entry and model with
/// per-language, HRL, LRL and overall means across seeds.
pub fn summary_table(results: &SuiteResults) -> String {
    let mut out = String::new();
    let Some(first) = results.entries.first().and_then(|e| e.records.first()) else {
        return out;
    };
    let spec = &first.corpus;
    let (hrl, lrl) = (spec.high_resource(), spec.low_resource());
    let all: Vec<usize> = (0..spec.num_languages).collect();
    let _ = writeln!(out, "suite {}: final dev CE (nats), mean over seeds", results.name);
    let mut header = format!("{:<16} {:>5}", "run", "model");
    for l in &all {
        let _ = write!(header, " {:>8}", format!("lang{l}"));
    }
    let _ = write!(header, " {:>8} {:>8} {:>8}", "HRL", "LRL", "all");
    let _ = writeln!(out, "{header}");
    for e in &results.entries {
        let models = e.records.first().map_or(0, RunRecord::num_models);
        for m in 0..models {
            let mut row = format!("{:<16} {:>5}", e.name, m + 1);
            for &l in &all {
                let _ = write!(row, " {:>8.4}", seed_mean_ce(&e.records, m, &[l]));
            }
            let _ = write!(
                row,
                " {:>8.4} {:>8.4} {:>8.4}",
                seed_mean_ce(&e.records, m, &hrl),
                seed_mean_ce(&e.records, m, &lrl),
                seed_mean_ce(&e.records, m, &all)
            );
            let _ = writeln!(out, "{row}");
        }
    }
    out
}

/// Writes `<entry>.csv` per entry, `pareto-points.csv`,
/// `weight-evolution.csv` and `summary.txt` into `dir`.
pub fn write_suite_outputs(results: &SuiteResults, dir: &Path) -> Result<(), SuiteError> {
    fs::create_dir_all(dir)?;
    let mut all = Vec::new();
    for e in &results.entries {
        let mut w = create(dir, &format!("{}.csv", e.name))?;
        write_run_csv(&e.records, &mut w)?;
        w.flush()?;
        all.extend(e.records.iter().cloned());
    }
    let points = pareto_points(&all)?;
    let mut w = create(dir, "pareto-points.csv")?;
    write_pareto_csv(&points, &mut w)?;
    w.flush()?;
    let mut w = create(dir, "weight-evolution.csv")?;
    writeln!(w, "{WEIGHT_CSV_HEADER}")?;
    write_weight_rows(&all, &mut w)?;
    w.flush()?;
    fs::write(dir.join("summary.txt"), summary_table(results))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub model_means: [f64; 2],
}

/// One mutual run per value and seed with `alpha` replaced.
pub fn sweep_alpha(base: &TrainConfig, values: &[f64], seeds: &[u64], exec: Exec) -> Result<(SuiteResults, Vec<SweepRow>), SuiteError> {
    if !base.strategy.uses_alpha_hyper() {
        return Err(SuiteError::Invalid(format!(
            "alpha-hyper not applicable to the {} strategy (use uni or bi)",
            base.strategy.name()
        )));
    }
    if values.is_empty() {
        return Err(SuiteError::Invalid("no alpha values given".into()));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(SuiteError::Invalid(format!("alpha value {v} is outside [0, 1]")));
    }
    let suite = ExperimentSuite {
        name: "sweep-alpha".into(),
        entries: values
            .iter()
            .map(|&alpha| SuiteEntry {
                name: format!("alpha-{alpha}"),
                kind: EntryKind::Mutual,
                config: TrainConfig { alpha, ..base.clone() },
            })
            .collect(),
        seeds: seeds.to_vec(),
    };
    let results = run_suite(&suite, exec)?;
    let all: Vec<usize> = (0..base.corpus.num_languages).collect();
    let rows = values
        .iter()
        .zip(&results.entries)
        .map(|(&alpha, e)| SweepRow {
            alpha,
            model_means: [seed_mean_ce(&e.records, 0, &all), seed_mean_ce(&e.records, 1, &all)],
        })
        .collect();
    Ok((results, rows))
}

pub fn write_sweep_outputs(results: &SuiteResults, rows: &[SweepRow], dir: &Path) -> Result<(), SuiteError> {
    fs::create_dir_all(dir)?;
    for e in &results.entries {
        let mut w = create(dir, &format!("sweep-{}.csv", e.name))?;
        write_run_csv(&e.records, &mut w)?;
        w.flush()?;
    }
    let mut w = create(dir, "sweep-alpha.csv")?;
    writeln!(w, "alpha,seeds,model1_mean_dev_ce,model2_mean_dev_ce")?;
    for (r, e) in rows.iter().zip(&results.entries) {
        writeln!(w, "{},{},{},{}", r.alpha, e.records.len(), r.model_means[0], r.model_means[1])?;
    }
    w.flush()?;
    Ok(())
}

/// Auto-PMD under each of the four step-size schedules.
pub fn compare_schedulers(base: &TrainConfig, seeds: &[u64], exec: Exec) -> Result<(SuiteResults, Vec<SweepRow>), SuiteError> {
    if base.strategy != StrategyKind::Auto {
        return Err(SuiteError::Invalid(format!(
            "scheduler comparison needs the auto strategy, config has {}",
            base.strategy.name()
        )));
    }
    let suite = ExperimentSuite {
        name: "compare-schedulers".into(),
        entries: SchedulerVariant::ALL
            .iter()
            .map(|&scheduler| SuiteEntry {
                name: scheduler.name().into(),
                kind: EntryKind::Mutual,
                config: TrainConfig {
                    scheduler,
                    ..base.clone()
                },
            })
            .collect(),
        seeds: seeds.to_vec(),
    };
    let results = run_suite(&suite, exec)?;
    let all: Vec<usize> = (0..base.corpus.num_languages).collect();
    let rows = results
        .entries
        .iter()
        .map(|e| SweepRow {
            alpha: f64::NAN,
            model_means: [seed_mean_ce(&e.records, 0, &all), seed_mean_ce(&e.records, 1, &all)],
        })
        .collect();
    Ok((results, rows))
}

pub fn write_scheduler_outputs(results: &SuiteResults, rows: &[SweepRow], dir: &Path) -> Result<(), SuiteError> {
    fs::create_dir_all(dir)?;
    let mut all = Vec::new();
    for e in &results.entries {
        let mut w = create(dir, &format!("scheduler-{}.csv", e.name))?;
        write_run_csv(&e.records, &mut w)?;
        w.flush()?;
        all.extend(e.records.iter().cloned());
    }
    let mut w = create(dir, "weight-evolution.csv")?;
    writeln!(w, "{WEIGHT_CSV_HEADER}")?;
    write_weight_rows(&all, &mut w)?;
    w.flush()?;
    let mut w = create(dir, "schedulers.csv")?;
    writeln!(w, "scheduler,seeds,model1_mean_dev_ce,model2_mean_dev_ce")?;
    for (r, e) in rows.iter().zip(&results.entries) {
        writeln!(w, "{},{},{},{}", e.name, e.records.len(), r.model_means[0], r.model_means[1])?;
    }
    w.flush()?;
    Ok(())
}
