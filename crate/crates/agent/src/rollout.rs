//! The interleaved think/act/observe loop, group fan-out and batch runner.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::future::join_all;
use serde::{Deserialize, Serialize};
use specvi_core::bench::spectrum_file_stem;
use specvi_core::tool::{SessionId, SessionStore, ToolError, ToolResponse};
use specvi_core::trajectory::{
    parse_turn, write_jsonl, Trajectory, TrajectoryBuilder, TurnOutcome, ViewRef,
};
use specvi_core::{load_spectrum, Spectrum, Task, TaskLabel};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::message::{Message, Role};
use crate::policy::{Policy, PolicyError, TurnContext};

pub const TRAJECTORY_FILE: &str = "trajectories.traj.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub max_tool_calls: usize,
    pub group_size: usize,
    pub per_item_seed: u64,
    /// Rollouts allowed to run at once in a batch.
    pub concurrency: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig { max_tool_calls: 8, group_size: 8, per_item_seed: 0, concurrency: 8 }
    }
}

impl RolloutConfig {
    pub fn turn_budget(&self) -> usize {
        self.max_tool_calls + 2
    }

    pub fn validate(&self) -> Result<(), RolloutError> {
        if self.max_tool_calls == 0 || self.group_size == 0 || self.concurrency == 0 {
            return Err(RolloutError::InvalidConfig(
                "max_tool_calls, group_size and concurrency must all be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RolloutError {
    #[error("policy failed on turn {turn}: {source}")]
    PolicyFailure { turn: usize, source: PolicyError },
    #[error("all {attempts} rollouts failed for {item_id}: {first}")]
    AllRolloutsFailed { item_id: String, attempts: usize, first: String },
    #[error("invalid rollout configuration: {0}")]
    InvalidConfig(String),
    #[error("tool failure: {0}")]
    Tool(ToolError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone)]
pub struct RolloutRequest {
    pub item_id: String,
    pub spectrum: Arc<Spectrum>,
    pub prompt: String,
    pub task: Option<Task>,
    pub gold: Option<TaskLabel>,
}

/// A finished trajectory and the PNG bytes behind each of its image refs.
#[derive(Debug, Clone)]
pub struct RolloutOutput {
    pub trajectory: Trajectory,
    pub images: Vec<(String, Arc<[u8]>)>,
}

#[derive(Debug, Clone)]
pub struct GroupOutput {
    pub outputs: Vec<(usize, RolloutOutput)>,
    pub failures: Vec<(usize, RolloutError)>,
}

struct SessionGuard<'a> {
    store: &'a SessionStore,
    id: SessionId,
}

impl Drop for SessionGuard<'_> {
    fn drop(&mut self) {
        let _ = self.store.close(&self.id);
    }
}

pub fn trajectory_id(item_id: &str, group_index: usize) -> String {
    format!("{item_id}.g{group_index}")
}

pub fn image_ref(traj_id: &str, k: usize) -> String {
    format!("assets/{}/{k:03}.png", spectrum_file_stem(traj_id))
}

/// Stable 64-bit FNV-1a, used to derive per-item seeds from ids.
fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn item_seed(base: u64, item_id: &str) -> u64 {
    base ^ fnv1a(item_id)
}

pub struct Engine {
    store: Arc<SessionStore>,
    policy: Arc<dyn Policy>,
}

impl Engine {
    pub fn new(policy: Arc<dyn Policy>) -> Self {
        Engine { store: Arc::new(SessionStore::new()), policy }
    }

    pub fn with_store(policy: Arc<dyn Policy>, store: Arc<SessionStore>) -> Self {
        Engine { store, policy }
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub async fn run_rollout(
        &self,
        req: &RolloutRequest,
        cfg: &RolloutConfig,
        group_index: usize,
    ) -> Result<RolloutOutput, RolloutError> {
        cfg.validate()?;
        let seed = cfg.per_item_seed.wrapping_add(group_index as u64);
        let traj_id = trajectory_id(&req.item_id, group_index);
        let (sid, view) = self.store.open(Arc::clone(&req.spectrum));
        let guard = SessionGuard { store: &self.store, id: sid };

        let first_ref = image_ref(&traj_id, 0);
        let mut images = vec![(first_ref.clone(), Arc::clone(&view.image))];
        let initial = ViewRef {
            image_ref: first_ref.clone(),
            range: view.range,
            sample_count: view.sample_count,
            label: None,
        };
        let mut builder = TrajectoryBuilder::new(&traj_id, &req.prompt, initial)
            .item_id(&req.item_id)
            .gold(req.gold);
        let mut history = vec![Message::text(Role::User, &req.prompt).with_image(first_ref, view.image)];

        let mut truncated = true;
        for turn in 0..cfg.turn_budget() {
            let ctx = TurnContext {
                history: &history,
                spectrum: &req.spectrum,
                task: req.task,
                seed,
            };
            let raw = self
                .policy
                .next_turn(ctx)
                .await
                .map_err(|source| RolloutError::PolicyFailure { turn, source })?;
            let parsed = parse_turn(&raw);
            let allow = builder.tool_call_count() < cfg.max_tool_calls;
            let outcome = builder.push_turn(&raw, &parsed, allow);
            history.push(Message::text(Role::Assistant, raw));
            match outcome {
                TurnOutcome::RunTool(call) => {
                    let rendered = call.and_then(|c| self.store.render(&guard.id, &c));
                    let response = match rendered {
                        Ok(v) => {
                            let r = image_ref(&traj_id, images.len());
                            images.push((r.clone(), Arc::clone(&v.image)));
                            let resp = v.response(r.clone());
                            history.push(Message::text(Role::Tool, resp.to_json()).with_image(r, v.image));
                            resp
                        }
                        Err(e) => {
                            let resp: ToolResponse = e.to_response().ok_or(RolloutError::Tool(e))?;
                            history.push(Message::text(Role::Tool, resp.to_json()));
                            resp
                        }
                    };
                    builder
                        .push_tool_result(response)
                        .map_err(|e| RolloutError::Io(e.to_string()))?;
                }
                TurnOutcome::Final => {
                    truncated = false;
                    break;
                }
                TurnOutcome::Continue => {}
                TurnOutcome::CapExceeded => break,
            }
        }
        drop(guard);
        Ok(RolloutOutput { trajectory: builder.finish(truncated), images })
    }

    /// Runs `group_size` rollouts concurrently with seeds `per_item_seed + i`.
    pub async fn run_group(&self, req: &RolloutRequest, cfg: &RolloutConfig) -> Result<GroupOutput, RolloutError> {
        self.run_group_limited(req, cfg, None).await
    }

    async fn run_group_limited(
        &self,
        req: &RolloutRequest,
        cfg: &RolloutConfig,
        limit: Option<&Semaphore>,
    ) -> Result<GroupOutput, RolloutError> {
        cfg.validate()?;
        let runs = (0..cfg.group_size).map(|i| async move {
            let _permit = match limit {
                Some(s) => Some(s.acquire().await.expect("semaphore open")),
                None => None,
            };
            (i, self.run_rollout(req, cfg, i).await)
        });
        let mut outputs = Vec::new();
        let mut failures = Vec::new();
        for (i, r) in join_all(runs).await {
            match r {
                Ok(o) => outputs.push((i, o)),
                Err(e) => {
                    tracing::warn!(item = %req.item_id, rollout = i, error = %e, "rollout failed");
                    failures.push((i, e));
                }
            }
        }
        if outputs.is_empty() {
            return Err(RolloutError::AllRolloutsFailed {
                item_id: req.item_id.clone(),
                attempts: failures.len(),
                first: failures.first().map(|(_, e)| e.to_string()).unwrap_or_default(),
            });
        }
        Ok(GroupOutput { outputs, failures })
    }

    /// Runs every item and writes the archive, assets and predictions table
    /// under `out_dir`. Items are processed concurrently; output order is by
    /// item id then group index.
    pub async fn run_batch(
        &self,
        items: &[BatchItem],
        cfg: &RolloutConfig,
        out_dir: &Path,
    ) -> Result<BatchReport, RolloutError> {
        cfg.validate()?;
        let io = |e: std::io::Error| RolloutError::Io(format!("{}: {e}", out_dir.display()));
        tokio::fs::create_dir_all(out_dir).await.map_err(io)?;
        let limit = Semaphore::new(cfg.concurrency);

        let runs = items.iter().map(|item| {
            let limit = &limit;
            async move {
                let result = self.run_item(item, cfg, limit, out_dir).await;
                (item, result)
            }
        });
        let mut done: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
        let mut report = BatchReport { items_total: items.len(), ..BatchReport::default() };
        for (item, result) in join_all(runs).await {
            match result {
                Ok((trajs, failed)) => {
                    report.rollouts_failed += failed.len();
                    for (i, e) in failed {
                        report.rollout_failures.push(ItemFailure {
                            item_id: format!("{}#{i}", item.item_id),
                            reason: e.to_string(),
                        });
                    }
                    report.trajectories += trajs.len();
                    done.entry(item.item_id.clone()).or_default().extend(trajs);
                }
                Err(e) => {
                    tracing::error!(item = %item.item_id, error = %e, "item failed");
                    report.item_failures.push(ItemFailure { item_id: item.item_id.clone(), reason: e.to_string() });
                }
            }
        }
        report.item_failures.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        report.rollout_failures.sort_by(|a, b| a.item_id.cmp(&b.item_id));

        let ordered: Vec<&Trajectory> = done.values().flatten().collect();
        write_jsonl(out_dir.join(TRAJECTORY_FILE), ordered.iter().copied())
            .map_err(|e| RolloutError::Io(e.to_string()))?;
        let tasks: BTreeMap<&str, Option<Task>> =
            items.iter().map(|i| (i.item_id.as_str(), i.task)).collect();
        write_predictions(&out_dir.join(PREDICTIONS_FILE), &ordered, &tasks)?;
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(out_dir.join(REPORT_FILE), json + "\n").map_err(io)?;
        Ok(report)
    }

    async fn run_item(
        &self,
        item: &BatchItem,
        cfg: &RolloutConfig,
        limit: &Semaphore,
        out_dir: &Path,
    ) -> Result<(Vec<Trajectory>, Vec<(usize, RolloutError)>), RolloutError> {
        let spectrum = match &item.spectrum {
            SpectrumSource::Loaded(s) => Arc::clone(s),
            SpectrumSource::Path(p) => {
                let p = p.clone();
                let loaded = tokio::task::spawn_blocking(move || load_spectrum(p))
                    .await
                    .map_err(|e| RolloutError::Io(e.to_string()))?;
                Arc::new(loaded.map_err(|e| RolloutError::Io(e.to_string()))?)
            }
        };
        let req = RolloutRequest {
            item_id: item.item_id.clone(),
            spectrum,
            prompt: item.prompt.clone(),
            task: item.task,
            gold: match (item.task, item.gold) {
                (Some(task), Some(is_positive)) => Some(TaskLabel { task, is_positive }),
                _ => None,
            },
        };
        let item_cfg = RolloutConfig { per_item_seed: item_seed(cfg.per_item_seed, &item.item_id), ..*cfg };
        let group = self.run_group_limited(&req, &item_cfg, Some(limit)).await?;
        let mut trajs = Vec::with_capacity(group.outputs.len());
        for (_, out) in group.outputs {
            for (r, png) in &out.images {
                let path = out_dir.join(r);
                if let Some(parent) = path.parent() {
                    tokio::fs::create_dir_all(parent)
                        .await
                        .map_err(|e| RolloutError::Io(format!("{}: {e}", parent.display())))?;
                }
                tokio::fs::write(&path, png)
                    .await
                    .map_err(|e| RolloutError::Io(format!("{}: {e}", path.display())))?;
            }
            trajs.push(out.trajectory);
        }
        Ok((trajs, group.failures))
    }
}

fn write_predictions(
    path: &Path,
    trajs: &[&Trajectory],
    tasks: &BTreeMap<&str, Option<Task>>,
) -> Result<(), RolloutError> {
    let err = |e: csv::Error| RolloutError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["item_id", "task", "group_index", "prediction", "gold", "tool_call_count", "format_ok"])
        .map_err(err)?;
    for t in trajs {
        let item = t.item_id.as_deref().unwrap_or("");
        let group = t.id.rsplit_once(".g").map(|(_, g)| g).unwrap_or("0");
        let task = t
            .gold
            .map(|g| g.task)
            .or_else(|| tasks.get(item).copied().flatten())
            .map(|t| t.code())
            .unwrap_or("");
        let gold = match t.gold {
            Some(g) if g.is_positive => "YES",
            Some(_) => "NO",
            None => "",
        };
        w.write_record([
            item,
            task,
            group,
            t.prediction.as_str(),
            gold,
            &t.tool_call_count.to_string(),
            if t.format_ok { "true" } else { "false" },
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| RolloutError::Io(e.to_string()))
}

#[derive(Debug, Clone)]
pub enum SpectrumSource {
    Path(PathBuf),
    Loaded(Arc<Spectrum>),
}

#[derive(Debug, Clone)]
pub struct BatchItem {
    pub item_id: String,
    pub task: Option<Task>,
    pub gold: Option<bool>,
    pub prompt: String,
    pub spectrum: SpectrumSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub item_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub items_total: usize,
    pub trajectories: usize,
    pub rollouts_failed: usize,
    pub item_failures: Vec<ItemFailure>,
    pub rollout_failures: Vec<ItemFailure>,
}

impl BatchReport {
    /// 0 when every item produced a trajectory, 3 when none did, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        let failed = self.item_failures.len();
        if failed == 0 {
            0
        } else if failed == self.items_total {
            3
        } else {
            2
        }
    }
}
