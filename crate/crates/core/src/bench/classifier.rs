//! Logistic-regression screener over median-normalized flux bins.

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::spectrum::{bin_features, estimate_snr, Spectrum, Task};

pub const MIN_PER_CLASS: usize = 10;
pub const MIN_SNR: f64 = 10.0;
const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub n_bins: usize,
    pub lo: f64,
    pub hi: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl TrainConfig {
    pub fn new(task: Task) -> Self {
        TrainConfig {
            task,
            n_bins: 256,
            lo: 3900.0,
            hi: 9000.0,
            epochs: 200,
            lr: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakClassifier {
    /// `n_bins` feature weights followed by the bias.
    pub weights: Vec<f64>,
    pub n_bins: usize,
    pub lo: f64,
    pub hi: f64,
    pub task: Task,
    /// Mean logistic loss before training and after each epoch.
    #[serde(default)]
    pub loss_history: Vec<f64>,
}

impl WeakClassifier {
    pub fn features(&self, spec: &Spectrum) -> Result<Vec<f64>, BenchError> {
        Ok(bin_features(spec, self.n_bins, self.lo, self.hi)?)
    }

    pub fn logit(&self, features: &[f64]) -> f64 {
        linear(&self.weights, features)
    }

    /// Positive-class probability, kept strictly inside (0, 1).
    pub fn score(&self, spec: &Spectrum) -> Result<f64, BenchError> {
        Ok(sigmoid(self.logit(&self.features(spec)?)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("finite weights serialize")
    }
}

pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn linear(weights: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    weights[..n].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + weights[n]
}

fn mean_loss(weights: &[f64], xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let z = linear(weights, x);
            // -[y ln σ(z) + (1-y) ln(1-σ(z))]
            softplus(z) - y * z
        })
        .sum();
    total / xs.len() as f64
}

fn gradient(weights: &[f64], xs: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; weights.len()];
    let n = xs.len() as f64;
    for (x, &y) in xs.iter().zip(ys) {
        let err = 1.0 / (1.0 + (-linear(weights, x)).exp()) - y;
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi += err * xi;
        }
        *g.last_mut().expect("bias") += err;
    }
    g.iter_mut().for_each(|v| *v /= n);
    g
}

pub fn passes_snr_filter(spec: &Spectrum) -> bool {
    match spec.snr() {
        Some(snr) => snr > MIN_SNR,
        None => estimate_snr(spec).map(|s| s > MIN_SNR).unwrap_or(false),
    }
}

/// Full-batch gradient descent from zero weights. A step that would raise the
/// loss is halved until it does not, so the loss history never increases.
pub fn train_weak_classifier(
    positives: &[Spectrum],
    negatives: &[Spectrum],
    cfg: &TrainConfig,
) -> Result<WeakClassifier, BenchError> {
    if positives.len() < MIN_PER_CLASS || negatives.len() < MIN_PER_CLASS {
        return Err(BenchError::InsufficientData {
            positives: positives.len(),
            negatives: negatives.len(),
            min: MIN_PER_CLASS,
        });
    }
    if !(cfg.lr.is_finite() && cfg.lr > 0.0) {
        return Err(BenchError::InvalidParameter(format!("lr must be > 0, got {}", cfg.lr)));
    }
    for spec in positives.iter().chain(negatives) {
        if !passes_snr_filter(spec) {
            return Err(BenchError::LowSnr {
                id: spec.id().to_string(),
                min: MIN_SNR,
            });
        }
    }
    let mut xs = Vec::with_capacity(positives.len() + negatives.len());
    let mut ys = Vec::with_capacity(xs.capacity());
    for (group, y) in [(positives, 1.0), (negatives, 0.0)] {
        for spec in group {
            xs.push(bin_features(spec, cfg.n_bins, cfg.lo, cfg.hi)?);
            ys.push(y);
        }
    }

    let mut weights = vec![0.0; cfg.n_bins + 1];
    let mut loss = mean_loss(&weights, &xs, &ys);
    let mut history = vec![loss];
    let mut step = cfg.lr;
    for _ in 0..cfg.epochs {
        let g = gradient(&weights, &xs, &ys);
        loop {
            let candidate: Vec<f64> = weights.iter().zip(&g).map(|(w, gi)| w - step * gi).collect();
            let candidate_loss = mean_loss(&candidate, &xs, &ys);
            if candidate_loss <= loss {
                weights = candidate;
                loss = candidate_loss;
                break;
            }
            step *= 0.5;
            if step < MIN_STEP {
                break;
            }
        }
        let previous = *history.last().expect("seeded");
        assert!(loss <= previous, "training loss increased: {previous} -> {loss}");
        history.push(loss);
    }

    Ok(WeakClassifier {
        weights,
        n_bins: cfg.n_bins,
        lo: cfg.lo,
        hi: cfg.hi,
        task: cfg.task,
        loss_history: history,
    })
}
