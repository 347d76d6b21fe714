//! Read-only view of a rollout archive directory.

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use specvi_core::trajectory::{read_jsonl, Prediction, Trajectory};
use specvi_core::Task;

use crate::ServiceError;

#[derive(Debug)]
pub struct Archive {
    root: PathBuf,
    trajectories: Vec<Trajectory>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySummary {
    pub id: String,
    pub item_id: Option<String>,
    pub task: Option<Task>,
    pub prediction: Prediction,
    pub format_ok: bool,
    pub tool_call_count: usize,
    pub step_count: usize,
}

impl Archive {
    /// Loads every `*.traj.jsonl` directly under `root`.
    pub fn load(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        let entries = std::fs::read_dir(&root)
            .map_err(|e| ServiceError::Archive(format!("{}: {e}", root.display())))?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".traj.jsonl"))
            .collect();
        files.sort();
        let mut trajectories = Vec::new();
        for f in &files {
            trajectories.extend(read_jsonl(f).map_err(|e| ServiceError::Archive(e.to_string()))?);
        }
        trajectories.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = HashMap::with_capacity(trajectories.len());
        for (i, t) in trajectories.iter().enumerate() {
            if index.insert(t.id.clone(), i).is_some() {
                return Err(ServiceError::Archive(format!("duplicate trajectory id {}", t.id)));
            }
        }
        Ok(Archive { root, trajectories, index })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Trajectory> {
        self.index.get(id).map(|&i| &self.trajectories[i])
    }

    pub fn page(&self, page: usize, per_page: usize) -> Vec<TrajectorySummary> {
        self.trajectories
            .iter()
            .skip(page.saturating_sub(1).saturating_mul(per_page))
            .take(per_page)
            .map(summary)
            .collect()
    }

    /// Resolves a request path under `<root>/assets`, refusing anything that
    /// could leave that directory.
    pub fn asset_path(&self, rel: &str) -> Option<PathBuf> {
        if rel.is_empty() || rel.contains('\\') || rel.contains('\0') {
            return None;
        }
        let rel = Path::new(rel);
        if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
            return None;
        }
        let base = self.root.join("assets");
        let full = base.join(rel);
        let canon_base = base.canonicalize().ok()?;
        let canon = full.canonicalize().ok()?;
        canon.starts_with(&canon_base).then_some(canon)
    }
}

pub fn summary(t: &Trajectory) -> TrajectorySummary {
    TrajectorySummary {
        id: t.id.clone(),
        item_id: t.item_id.clone(),
        task: t.gold.map(|g| g.task),
        prediction: t.prediction,
        format_ok: t.format_ok,
        tool_call_count: t.tool_call_count,
        step_count: t.steps.len(),
    }
}

/// The record as one JSON document for the review UI. The gold label is
/// replaced by its task unless `show_gold` is set.
pub fn document(t: &Trajectory, show_gold: bool) -> Value {
    let mut v = serde_json::to_value(t).expect("trajectories serialize");
    let obj = v.as_object_mut().expect("trajectory is an object");
    if !show_gold {
        obj.remove("gold");
    }
    obj.insert("task".into(), serde_json::to_value(t.gold.map(|g| g.task)).expect("task serializes"));
    v
}
