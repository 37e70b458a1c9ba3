//! Confusion tables, macro and weighted F1, and multi-run aggregation.
//!
//! Per-class F1 is 0 when precision and recall are both undefined or zero.
//! Macro F1 always averages both classes, so a class without support counts
//! as 0; weighted F1 only averages classes that have support.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Level;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {golds} gold labels")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("prediction {index} is for `{predicted}` but gold label is for `{gold}`")]
    IdMismatch {
        index: usize,
        predicted: String,
        gold: String,
    },
    #[error("at least one run is required")]
    NoRuns,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ClassCounts {
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn)
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

/// Counts for the low and high class, indexed by [`Level::index`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTable {
    pub low: ClassCounts,
    pub high: ClassCounts,
}

impl ConfusionTable {
    pub fn class(&self, level: Level) -> &ClassCounts {
        match level {
            Level::Low => &self.low,
            Level::High => &self.high,
        }
    }

    fn class_mut(&mut self, level: Level) -> &mut ClassCounts {
        match level {
            Level::Low => &mut self.low,
            Level::High => &mut self.high,
        }
    }

    pub fn record(&mut self, predicted: Level, gold: Level) {
        if predicted == gold {
            self.class_mut(gold).tp += 1;
        } else {
            self.class_mut(predicted).fp += 1;
            self.class_mut(gold).fn_ += 1;
        }
    }

    pub fn from_levels(predicted: &[Level], gold: &[Level]) -> Result<Self, EvalError> {
        if predicted.len() != gold.len() {
            return Err(EvalError::LengthMismatch {
                predictions: predicted.len(),
                golds: gold.len(),
            });
        }
        let mut t = Self::default();
        for (&p, &g) in predicted.iter().zip(gold) {
            t.record(p, g);
        }
        Ok(t)
    }

    pub fn total(&self) -> usize {
        self.low.support() + self.high.support()
    }

    pub fn macro_f1(&self) -> f64 {
        (self.low.f1() + self.high.f1()) / 2.0
    }

    pub fn weighted_f1(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        Level::BOTH
            .iter()
            .map(|&l| self.class(l))
            .filter(|c| c.support() > 0)
            .map(|c| c.f1() * c.support() as f64)
            .sum::<f64>()
            / total as f64
    }
}

/// Confusion table from id-aligned predictions and gold labels.
pub fn confusion<S: AsRef<str>>(
    predictions: &[(S, Level)],
    golds: &[(S, Level)],
) -> Result<ConfusionTable, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    let mut t = ConfusionTable::default();
    for (index, ((pid, p), (gid, g))) in predictions.iter().zip(golds).enumerate() {
        if pid.as_ref() != gid.as_ref() {
            return Err(EvalError::IdMismatch {
                index,
                predicted: pid.as_ref().to_string(),
                gold: gid.as_ref().to_string(),
            });
        }
        t.record(*p, *g);
    }
    Ok(t)
}

pub fn macro_f1(table: &ConfusionTable) -> f64 {
    table.macro_f1()
}

pub fn weighted_f1(table: &ConfusionTable) -> f64 {
    table.weighted_f1()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1} ±{:.1}", self.mean * 100.0, self.std * 100.0)
    }
}

/// Outcome of one evaluated profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileOutcome {
    pub profile_id: String,
    pub predicted: Level,
    pub gold: Level,
    pub parse_ok: bool,
    /// Wall-clock selection plus classification time.
    pub seconds: f64,
    /// Characters in the rendered prompt, when a prompt was sent.
    pub prompt_chars: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: usize,
    pub seed: u64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_seconds: Option<f64>,
    pub parse_failures: usize,
    pub confusion: ConfusionTable,
}

impl RunReport {
    /// Scores one run. Timing is kept only when `timing` is set, so reports
    /// over deterministic backends stay byte-reproducible.
    pub fn from_outcomes(run: usize, seed: u64, outcomes: &[ProfileOutcome], timing: bool) -> Self {
        let mut table = ConfusionTable::default();
        for o in outcomes {
            table.record(o.predicted, o.gold);
        }
        let mean_seconds = (timing && !outcomes.is_empty())
            .then(|| outcomes.iter().map(|o| o.seconds).sum::<f64>() / outcomes.len() as f64);
        Self {
            run,
            seed,
            macro_f1: table.macro_f1(),
            weighted_f1: table.weighted_f1(),
            mean_seconds,
            parse_failures: outcomes.iter().filter(|o| !o.parse_ok).count(),
            confusion: table,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub system: String,
    pub top_n: Option<usize>,
    pub runs: usize,
    pub base_seed: u64,
    pub macro_f1: MeanStd,
    pub weighted_f1: MeanStd,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_seconds: Option<MeanStd>,
    pub parse_failures: usize,
    pub per_run: Vec<RunReport>,
}

impl AggregateReport {
    pub fn from_runs(system: impl Into<String>, top_n: Option<usize>, base_seed: u64, per_run: Vec<RunReport>) -> Self {
        let m: Vec<f64> = per_run.iter().map(|r| r.macro_f1).collect();
        let w: Vec<f64> = per_run.iter().map(|r| r.weighted_f1).collect();
        let secs: Option<Vec<f64>> = per_run.iter().map(|r| r.mean_seconds).collect();
        Self {
            system: system.into(),
            top_n,
            runs: per_run.len(),
            base_seed,
            macro_f1: MeanStd::of(&m),
            weighted_f1: MeanStd::of(&w),
            mean_seconds: secs.filter(|s| !s.is_empty()).map(|s| MeanStd::of(&s)),
            parse_failures: per_run.iter().map(|r| r.parse_failures).sum(),
            per_run,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn csv_header() -> &'static str {
        "system,top_n,runs,macro_f1_mean,macro_f1_std,weighted_f1_mean,weighted_f1_std,seconds_mean,seconds_std,parse_failures"
    }

    pub fn csv_row(&self) -> String {
        let (sm, ss) = self
            .mean_seconds
            .map(|s| (s.mean.to_string(), s.std.to_string()))
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.system,
            self.top_n.map(|n| n.to_string()).unwrap_or_else(|| "all".into()),
            self.runs,
            self.macro_f1.mean,
            self.macro_f1.std,
            self.weighted_f1.mean,
            self.weighted_f1.std,
            sm,
            ss,
            self.parse_failures
        )
    }
}

impl fmt::Display for AggregateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut line = format!(
            "{:<12} top-N {:>4}  runs {:>3}  m-F1 {}  w-F1 {}",
            self.system,
            self.top_n.map(|n| n.to_string()).unwrap_or_else(|| "all".into()),
            self.runs,
            self.macro_f1,
            self.weighted_f1
        );
        if let Some(s) = self.mean_seconds {
            let _ = write!(line, "  s/profile {:.4} ±{:.4}", s.mean, s.std);
        }
        if self.parse_failures > 0 {
            let _ = write!(line, "  parse failures {}", self.parse_failures);
        }
        f.write_str(&line)
    }
}

/// A failed experiment, carrying the runs that completed before the failure.
#[derive(Debug, Error)]
#[error("run {failed_run} failed: {source}")]
pub struct ExperimentError<E: std::error::Error + 'static> {
    pub failed_run: usize,
    pub completed: Vec<RunReport>,
    #[source]
    pub source: E,
}

/// Runs `run_once(seed)` for seeds `base_seed + i`, `i < runs`, and aggregates.
pub fn run_experiment<E, F>(
    system: &str,
    top_n: Option<usize>,
    runs: usize,
    base_seed: u64,
    timing: bool,
    mut run_once: F,
) -> Result<AggregateReport, ExperimentError<E>>
where
    E: std::error::Error + 'static,
    F: FnMut(u64) -> Result<Vec<ProfileOutcome>, E>,
{
    let mut completed = Vec::with_capacity(runs);
    for run in 0..runs {
        let seed = base_seed.wrapping_add(run as u64);
        match run_once(seed) {
            Ok(outcomes) => completed.push(RunReport::from_outcomes(run, seed, &outcomes, timing)),
            Err(source) => {
                return Err(ExperimentError {
                    failed_run: run,
                    completed,
                    source,
                })
            }
        }
    }
    Ok(AggregateReport::from_runs(system, top_n, base_seed, completed))
}
