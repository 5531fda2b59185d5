use std::io::{self, Write};

use super::eval::LanguageMetrics;
use super::TrainError;
use crate::corpus::CorpusSpec;
use crate::model::ModelParams;
use crate::strategy::UpdateLog;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSnapshot {
    pub metrics: Vec<LanguageMetrics>,
    pub alpha: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub mu: f64,
    pub models: Vec<ModelSnapshot>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightUpdate {
    pub step: u64,
    pub log: UpdateLog,
}

/// Everything observed during one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub name: String,
    pub seed: u64,
    pub corpus: CorpusSpec,
    pub snapshots: Vec<Snapshot>,
    pub updates: Vec<WeightUpdate>,
    /// Language draws per model, indexed `[model][language]`.
    pub language_draws: Vec<Vec<u64>>,
    pub final_params: Vec<ModelParams>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

impl RunRecord {
    pub fn num_models(&self) -> usize {
        self.final_params.len()
    }

    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("runs always record a final snapshot")
    }

    pub fn final_metrics(&self, model: usize) -> &[LanguageMetrics] {
        &self.final_snapshot().models[model].metrics
    }

    /// Mean final dev CE of `model` over `languages`.
    pub fn mean_dev_ce(&self, model: usize, languages: &[usize]) -> f64 {
        let m = self.final_metrics(model);
        mean(languages.iter().map(|&l| m[l].dev_ce))
    }

    pub fn overall_dev_ce(&self, model: usize) -> f64 {
        mean(self.final_metrics(model).iter().map(|m| m.dev_ce))
    }

    /// Lowest overall mean dev CE among the run's models.
    pub fn best_overall_dev_ce(&self) -> f64 {
        (0..self.num_models())
            .map(|m| self.overall_dev_ce(m))
            .fold(f64::INFINITY, f64::min)
    }
}

pub const RUN_CSV_HEADER: &str = "seed,step,model,language,dev_ce,accuracy,alpha,mu";

/// One row per snapshot, model and language.
pub fn write_run_csv<W: Write>(records: &[RunRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{RUN_CSV_HEADER}")?;
    for r in records {
        for s in &r.snapshots {
            for (m, ms) in s.models.iter().enumerate() {
                for (l, lm) in ms.metrics.iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{}",
                        r.seed,
                        s.step,
                        m + 1,
                        l,
                        lm.dev_ce,
                        lm.accuracy,
                        ms.alpha[l],
                        s.mu
                    )?;
                }
            }
        }
    }
    Ok(())
}

pub const WEIGHT_CSV_HEADER: &str = "run,seed,k,step,model,mu,language,action,alpha";

/// One row per update, model and language.
pub fn write_weight_csv<W: Write>(records: &[RunRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{WEIGHT_CSV_HEADER}")?;
    write_weight_rows(records, &mut w)
}

pub fn write_weight_rows<W: Write>(records: &[RunRecord], mut w: W) -> io::Result<()> {
    for r in records {
        for u in &r.updates {
            for (l, a) in u.log.alpha.iter().enumerate() {
                let action = u.log.actions.as_ref().map_or("-", |acts| acts[l].name());
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    r.name, r.seed, u.log.k, u.step, u.log.model, u.log.mu, l, action, a
                )?;
            }
        }
    }
    Ok(())
}

/// Final (mean HRL, mean LRL) dev CE of one model of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct ParetoPoint {
    pub run: String,
    pub seed: u64,
    pub model: usize,
    pub hrl_dev_ce: f64,
    pub lrl_dev_ce: f64,
}

/// One point per final model, in run order. HRL/LRL are the top/bottom
/// halves of the languages by size.
pub fn pareto_points(records: &[RunRecord]) -> Result<Vec<ParetoPoint>, TrainError> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    if records.iter().any(|r| r.corpus != first.corpus) {
        return Err(TrainError::MismatchedCorpus);
    }
    let (hrl, lrl) = (first.corpus.high_resource(), first.corpus.low_resource());
    let mut out = Vec::new();
    for r in records {
        for m in 0..r.num_models() {
            out.push(ParetoPoint {
                run: r.name.clone(),
                seed: r.seed,
                model: m + 1,
                hrl_dev_ce: r.mean_dev_ce(m, &hrl),
                lrl_dev_ce: r.mean_dev_ce(m, &lrl),
            });
        }
    }
    Ok(out)
}

pub const PARETO_CSV_HEADER: &str = "run,seed,model,hrl_dev_ce,lrl_dev_ce";

pub fn write_pareto_csv<W: Write>(points: &[ParetoPoint], mut w: W) -> io::Result<()> {
    writeln!(w, "{PARETO_CSV_HEADER}")?;
    for p in points {
        writeln!(w, "{},{},{},{},{}", p.run, p.seed, p.model, p.hrl_dev_ce, p.lrl_dev_ce)?;
    }
    Ok(())
}
