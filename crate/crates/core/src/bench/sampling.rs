//! Hard-negative mining: keep non-catalog spectra the screener believes are positive.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::classifier::WeakClassifier;
use super::BenchError;
use crate::spectrum::Spectrum;

pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingReport {
    /// Pool members examined before the quota was met or the pool ran out,
    /// catalog members included.
    pub candidates_seen: usize,
    /// Examined members skipped because they are listed in the catalog.
    pub catalog_excluded: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub threshold: f64,
}

pub fn rejection_sample<I>(
    clf: &WeakClassifier,
    pool: I,
    catalog_ids: &HashSet<String>,
    threshold: f64,
    quota: usize,
) -> Result<(Vec<Spectrum>, SamplingReport), BenchError>
where
    I: IntoIterator<Item = Spectrum>,
{
    rejection_sample_by(|s| clf.score(s), pool, catalog_ids, threshold, quota)
}

/// Same accounting as [`rejection_sample`] with an arbitrary scoring function.
pub fn rejection_sample_by<F, I>(
    mut score: F,
    pool: I,
    catalog_ids: &HashSet<String>,
    threshold: f64,
    quota: usize,
) -> Result<(Vec<Spectrum>, SamplingReport), BenchError>
where
    F: FnMut(&Spectrum) -> Result<f64, BenchError>,
    I: IntoIterator<Item = Spectrum>,
{
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(BenchError::InvalidParameter(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    if quota == 0 {
        return Err(BenchError::InvalidParameter("quota must be ≥ 1".into()));
    }
    let mut accepted = Vec::new();
    let mut seen = 0usize;
    let mut excluded = 0usize;
    for spec in pool {
        if accepted.len() == quota {
            break;
        }
        seen += 1;
        if catalog_ids.contains(spec.id()) {
            excluded += 1;
            continue;
        }
        if score(&spec)? > threshold {
            accepted.push(spec);
        }
    }
    let rate = if seen == 0 { 0.0 } else { accepted.len() as f64 / seen as f64 };
    let report = SamplingReport {
        candidates_seen: seen,
        catalog_excluded: excluded,
        accepted: accepted.len(),
        acceptance_rate: rate,
        threshold,
    };
    Ok((accepted, report))
}
