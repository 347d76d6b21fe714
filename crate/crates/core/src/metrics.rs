//! Per-task accuracy and positive-class F1, macro averages, and the
//! reliability statistics used for judge/expert agreement.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectrum::Task;
use crate::trajectory::Prediction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} predictions vs {1} gold labels")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyList,
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("score {0} is outside 0-5")]
    OutOfRangeScore(i64),
}

/// Confusion counts. `INVALID` predictions on positives are counted in `fn_`;
/// on negatives they go to `invalid_negatives` (wrong, but not a false positive).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub invalid_negatives: usize,
}

impl ConfusionCounts {
    pub fn tally(predictions: &[Prediction], golds: &[bool]) -> Result<Self, MetricsError> {
        if predictions.len() != golds.len() {
            return Err(MetricsError::LengthMismatch(predictions.len(), golds.len()));
        }
        let mut c = ConfusionCounts::default();
        for (p, &g) in predictions.iter().zip(golds) {
            match (p, g) {
                (Prediction::Yes, true) => c.tp += 1,
                (Prediction::Yes, false) => c.fp += 1,
                (Prediction::No, false) => c.tn += 1,
                (Prediction::No, true) | (Prediction::Invalid, true) => c.fn_ += 1,
                (Prediction::Invalid, false) => c.invalid_negatives += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_ + self.invalid_negatives
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => (self.tp + self.tn) as f64 / n as f64,
        }
    }

    /// `2TP / (2TP + FP + FN)`, 0 when the denominator is 0.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: Task,
    pub acc: f64,
    pub f1: f64,
    pub n_invalid: usize,
    pub n: usize,
    pub counts: ConfusionCounts,
}

pub fn score_task(task: Task, predictions: &[Prediction], golds: &[bool]) -> Result<TaskReport, MetricsError> {
    let counts = ConfusionCounts::tally(predictions, golds)?;
    Ok(TaskReport {
        task,
        acc: counts.accuracy(),
        f1: counts.f1(),
        n_invalid: predictions.iter().filter(|p| **p == Prediction::Invalid).count(),
        n: predictions.len(),
        counts,
    })
}

/// Unweighted mean of per-task accuracy and F1.
pub fn macro_average(reports: &[TaskReport]) -> Result<(f64, f64), MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let n = reports.len() as f64;
    Ok((
        reports.iter().map(|r| r.acc).sum::<f64>() / n,
        reports.iter().map(|r| r.f1).sum::<f64>() / n,
    ))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::DegenerateInput("constant vector"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricsError::DegenerateInput("need at least two pairs"));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Win,
    Tie,
    Loss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRates {
    pub win: f64,
    pub tie: f64,
    pub loss: f64,
}

pub fn aggregate_preferences(judgments: &[Verdict]) -> Result<PreferenceRates, MetricsError> {
    if judgments.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let n = judgments.len() as f64;
    let count = |v: Verdict| judgments.iter().filter(|j| **j == v).count() as f64;
    Ok(PreferenceRates {
        win: count(Verdict::Win) / n,
        tie: count(Verdict::Tie) / n,
        loss: count(Verdict::Loss) / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub counts: [usize; 6],
    pub cdf: [f64; 6],
}

pub fn score_histogram(scores: &[i64]) -> Result<ScoreHistogram, MetricsError> {
    if let Some(&bad) = scores.iter().find(|s| !(0..=5).contains(*s)) {
        return Err(MetricsError::OutOfRangeScore(bad));
    }
    if scores.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let mut counts = [0usize; 6];
    for &s in scores {
        counts[s as usize] += 1;
    }
    let mut cdf = [0.0; 6];
    let mut running = 0;
    for (i, c) in counts.iter().enumerate() {
        running += c;
        cdf[i] = running as f64 / scores.len() as f64;
    }
    Ok(ScoreHistogram { counts, cdf })
}

/// Per-task reports plus the macro block, as written to a report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub tasks: BTreeMap<Task, TaskReport>,
    pub macro_acc: f64,
    pub macro_f1: f64,
}

impl EvalReport {
    pub fn new(system: impl Into<String>, reports: Vec<TaskReport>) -> Result<Self, MetricsError> {
        let (macro_acc, macro_f1) = macro_average(&reports)?;
        Ok(Self {
            system: system.into(),
            tasks: reports.into_iter().map(|r| (r.task, r)).collect(),
            macro_acc,
            macro_f1,
        })
    }

    /// Header plus one row: Acc and F1 per task then the average, in percent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("system");
        for task in self.tasks.keys() {
            let _ = write!(out, ",{task}_Acc,{task}_F1");
        }
        out.push_str(",Avg_Acc,Avg_F1\n");
        out.push_str(&self.system);
        for r in self.tasks.values() {
            let _ = write!(out, ",{:.1},{:.1}", 100.0 * r.acc, 100.0 * r.f1);
        }
        let _ = writeln!(out, ",{:.1},{:.1}", 100.0 * self.macro_acc, 100.0 * self.macro_f1);
        out
    }
}
