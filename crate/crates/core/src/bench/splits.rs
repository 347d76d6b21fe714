//! Train/test assembly with exact counts and cold-start exclusion.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::criteria::CriteriaRegistry;
use super::{spectrum_path, BenchError};
use crate::spectrum::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchItem {
    pub item_id: String,
    pub spectrum_id: String,
    /// Spectrum file relative to the manifest directory.
    pub spectrum_path: String,
    pub task: Task,
    pub gold: bool,
    pub split: Split,
    pub prompt: String,
    pub provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train_pos: usize,
    pub train_neg: usize,
    pub test_pos: usize,
    pub test_neg: usize,
}

#[derive(Debug, Clone)]
pub struct SplitRequest<'a> {
    pub task: Task,
    pub positives: &'a [String],
    pub negatives: &'a [String],
    pub counts: SplitCounts,
    /// Ids barred from the test split; they may still be used for training.
    pub exclude_ids: &'a HashSet<String>,
    pub seed: u64,
}

fn check_unique(ids: &[String], other: &[String]) -> Result<(), BenchError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(BenchError::CountUnavailable(format!("duplicate id {id}")));
        }
    }
    let first_shared = other.iter().find(|id| seen.contains(id.as_str()));
    if let Some(id) = first_shared {
        return Err(BenchError::CountUnavailable(format!(
            "id {id} appears in both the positive and negative pools"
        )));
    }
    Ok(())
}

/// Shuffles a sorted copy of `pool`, takes `n_test` non-excluded ids for test
/// and the next `n_train` remaining ids for train.
fn draw(
    pool: &[String],
    n_train: usize,
    n_test: usize,
    exclude: &HashSet<String>,
    rng: &mut ChaCha8Rng,
    what: &str,
) -> Result<(Vec<String>, Vec<String>), BenchError> {
    let mut order: Vec<&String> = pool.iter().collect::<BTreeSet<_>>().into_iter().collect();
    order.shuffle(rng);
    let eligible = order.iter().filter(|id| !exclude.contains(id.as_str())).count();
    if eligible < n_test {
        return Err(BenchError::CountUnavailable(format!(
            "need {n_test} test {what}, only {eligible} available after exclusion"
        )));
    }
    let mut test = Vec::with_capacity(n_test);
    let mut rest = Vec::with_capacity(order.len());
    for id in order {
        if test.len() < n_test && !exclude.contains(id.as_str()) {
            test.push(id.clone());
        } else {
            rest.push(id.clone());
        }
    }
    if rest.len() < n_train {
        return Err(BenchError::CountUnavailable(format!(
            "need {n_train} train {what}, only {} left after the test draw",
            rest.len()
        )));
    }
    rest.truncate(n_train);
    Ok((rest, test))
}

pub fn assemble_splits(
    req: &SplitRequest<'_>,
    registry: &CriteriaRegistry,
) -> Result<(Vec<BenchItem>, Vec<BenchItem>), BenchError> {
    check_unique(req.positives, req.negatives)?;
    check_unique(req.negatives, &[])?;
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let c = req.counts;
    let (train_pos, test_pos) =
        draw(req.positives, c.train_pos, c.test_pos, req.exclude_ids, &mut rng, "positives")?;
    let (train_neg, test_neg) =
        draw(req.negatives, c.train_neg, c.test_neg, req.exclude_ids, &mut rng, "negatives")?;

    let prompt = registry.prompt(req.task);
    let make = |ids: Vec<String>, gold: bool, split: Split| -> Vec<BenchItem> {
        ids.into_iter()
            .map(|id| BenchItem {
                item_id: format!("{}-{}", req.task.code(), id),
                spectrum_path: spectrum_path(&id),
                spectrum_id: id,
                task: req.task,
                gold,
                split,
                prompt: prompt.clone(),
                provenance: if gold { "catalog" } else { "hard-negative" }.to_string(),
            })
            .collect()
    };
    let mut train = make(train_pos, true, Split::Train);
    train.extend(make(train_neg, false, Split::Train));
    let mut test = make(test_pos, true, Split::Test);
    test.extend(make(test_neg, false, Split::Test));
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i:05}")).collect()
    }

    fn request<'a>(
        pos: &'a [String],
        neg: &'a [String],
        counts: SplitCounts,
        exclude: &'a HashSet<String>,
    ) -> SplitRequest<'a> {
        SplitRequest { task: Task::Cv, positives: pos, negatives: neg, counts, exclude_ids: exclude, seed: 7 }
    }

    #[test]
    fn cv_counts() {
        let pos = ids("p", 600);
        let neg = ids("n", 1700);
        let counts = SplitCounts { train_pos: 343, train_neg: 368, test_pos: 229, test_neg: 1229 };
        let none = HashSet::new();
        let reg = CriteriaRegistry::builtin();
        let (train, test) = assemble_splits(&request(&pos, &neg, counts, &none), &reg).unwrap();
        assert_eq!(train.iter().filter(|i| i.gold).count(), 343);
        assert_eq!(train.iter().filter(|i| !i.gold).count(), 368);
        assert_eq!(test.iter().filter(|i| i.gold).count(), 229);
        assert_eq!(test.iter().filter(|i| !i.gold).count(), 1229);
        let train_ids: HashSet<_> = train.iter().map(|i| &i.spectrum_id).collect();
        assert!(test.iter().all(|i| !train_ids.contains(&i.spectrum_id)));
        assert!(test.iter().all(|i| i.prompt.contains(reg.criteria(Task::Cv))));

        let (train2, test2) = assemble_splits(&request(&pos, &neg, counts, &none), &reg).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn overlap_names_the_id() {
        let pos = vec!["a".to_string(), "shared".to_string()];
        let neg = vec!["shared".to_string(), "b".to_string()];
        let counts = SplitCounts { train_pos: 1, train_neg: 1, test_pos: 1, test_neg: 1 };
        let none = HashSet::new();
        let err = assemble_splits(&request(&pos, &neg, counts, &none), &CriteriaRegistry::builtin())
            .unwrap_err();
        assert!(matches!(err, BenchError::CountUnavailable(ref m) if m.contains("shared")));
    }

    #[test]
    fn excluded_ids_stay_out_of_test() {
        let pos = ids("p", 10);
        let neg = ids("n", 10);
        let exclude: HashSet<String> = pos[..8].iter().cloned().collect();
        let counts = SplitCounts { train_pos: 8, train_neg: 5, test_pos: 2, test_neg: 5 };
        let (train, test) =
            assemble_splits(&request(&pos, &neg, counts, &exclude), &CriteriaRegistry::builtin())
                .unwrap();
        assert!(test.iter().all(|i| !exclude.contains(&i.spectrum_id)));
        assert_eq!(train.iter().filter(|i| i.gold).count(), 8);

        let counts = SplitCounts { test_pos: 3, ..counts };
        let err = assemble_splits(&request(&pos, &neg, counts, &exclude), &CriteriaRegistry::builtin())
            .unwrap_err();
        assert!(matches!(err, BenchError::CountUnavailable(_)));
    }
}
