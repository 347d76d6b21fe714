use std::sync::Arc;

use async_trait::async_trait;
use proptest::prelude::*;
use specvi_agent::{
    BatchItem, Comparison, DecisionRule, Engine, Policy, PolicyError, ReplayPolicy, RolloutConfig,
    RolloutError, RolloutRequest, ScriptedPolicy, ScriptedRule, SpectrumSource, TurnContext,
};
use specvi_core::bench::synth::task_spectrum;
use specvi_core::tool::ToolCall;
use specvi_core::trajectory::{read_jsonl, serialize, validate_format, Prediction, StepKind};
use specvi_core::{Spectrum, Task, WavelengthRange};

fn range(a: f64, b: f64) -> WavelengthRange {
    WavelengthRange::new(a, b).unwrap()
}

fn cv_rule(probes: usize) -> ScriptedRule {
    ScriptedRule {
        task: Task::Cv,
        probes: (0..probes)
            .map(|i| ToolCall::new(range(6400.0, 6700.0 + i as f64), Some("H-alpha".into())).unwrap())
            .collect(),
        decision: DecisionRule {
            numerator: range(6543.0, 6583.0),
            denominator: range(6700.0, 6800.0),
            factor: 1.3,
            comparison: Comparison::Greater,
        },
    }
}

fn request(spec: Spectrum) -> RolloutRequest {
    RolloutRequest {
        item_id: format!("CV-{}", spec.id()),
        spectrum: Arc::new(spec),
        prompt: "Is this a cataclysmic variable?".into(),
        task: Some(Task::Cv),
        gold: None,
    }
}

fn emitter() -> Spectrum {
    task_spectrum("em", Task::Cv, 1.0, true, 3).unwrap()
}

fn flat() -> Spectrum {
    task_spectrum("flat", Task::Cv, 0.0, false, 3).unwrap()
}

fn single() -> RolloutConfig {
    RolloutConfig { group_size: 1, ..RolloutConfig::default() }
}

fn kinds(t: &specvi_core::trajectory::Trajectory) -> Vec<StepKind> {
    t.steps.iter().map(|s| s.kind).collect()
}

#[tokio::test]
async fn one_probe_step_sequence() {
    let engine = Engine::new(Arc::new(ScriptedPolicy::new([cv_rule(1)])));
    let out = engine.run_rollout(&request(emitter()), &single(), 0).await.unwrap();
    let t = &out.trajectory;
    use StepKind::*;
    assert_eq!(kinds(t), [Think, ToolCall, ToolResult, Think, Answer]);
    assert_eq!(t.prediction, Prediction::Yes);
    assert!(t.format_ok);
    assert_eq!(out.images.len(), 2);
    assert_eq!(t.steps[2].image_ref.as_deref(), Some(out.images[1].0.as_str()));

    let out = engine.run_rollout(&request(flat()), &single(), 0).await.unwrap();
    assert_eq!(out.trajectory.prediction, Prediction::No);
}

#[tokio::test]
async fn three_probes_three_calls() {
    let engine = Engine::new(Arc::new(ScriptedPolicy::new([cv_rule(3)])));
    let out = engine.run_rollout(&request(emitter()), &single(), 0).await.unwrap();
    assert_eq!(out.trajectory.tool_call_count, 3);
    assert_eq!(out.trajectory.tool_result_count(), 3);
    assert!(out.trajectory.format_ok);
}

#[tokio::test]
async fn nine_probes_hit_the_cap() {
    let engine = Engine::new(Arc::new(ScriptedPolicy::new([cv_rule(9)])));
    let out = engine.run_rollout(&request(emitter()), &single(), 0).await.unwrap();
    let t = &out.trajectory;
    assert!(t.truncated);
    assert!(!t.format_ok);
    assert_eq!(t.tool_result_count(), 8);
    assert_eq!(engine.store().live_count(), 0);
}

#[tokio::test]
async fn immediate_answer_is_valid() {
    let engine = Engine::new(Arc::new(ReplayPolicy::new([r"<think>obvious</think><answer>\boxed{NO}</answer>"])));
    let out = engine.run_rollout(&request(flat()), &single(), 0).await.unwrap();
    assert_eq!(out.trajectory.tool_call_count, 0);
    assert!(out.trajectory.format_ok);
    assert_eq!(out.images.len(), 1);
}

#[tokio::test]
async fn plain_text_turns_use_the_budget() {
    let engine = Engine::new(Arc::new(ReplayPolicy::new(["just musing"])));
    let policy_cfg = RolloutConfig { max_tool_calls: 3, ..single() };
    let out = engine.run_rollout(&request(flat()), &policy_cfg, 0).await.unwrap();
    assert_eq!(out.trajectory.turns.len(), 5);
    assert!(out.trajectory.truncated);
    assert!(!out.trajectory.format_ok);
}

#[tokio::test]
async fn scripted_rollouts_are_byte_identical() {
    let engine = Engine::new(Arc::new(ScriptedPolicy::new([cv_rule(2)])));
    let cfg = RolloutConfig { group_size: 8, ..RolloutConfig::default() };
    let group = engine.run_group(&request(emitter()), &cfg).await.unwrap();
    assert_eq!(group.outputs.len(), 8);
    let norm = |i: usize| serialize(&group.outputs[i].1.trajectory).replace(&format!(".g{i}"), ".gX");
    for i in 1..8 {
        assert_eq!(norm(0), norm(i));
        assert_eq!(group.outputs[0].1.images[1].1, group.outputs[i].1.images[1].1);
    }
    let again = engine.run_rollout(&request(emitter()), &cfg, 0).await.unwrap();
    assert_eq!(serialize(&again.trajectory), serialize(&group.outputs[0].1.trajectory));

    let one = engine.run_group(&request(emitter()), &single()).await.unwrap();
    assert_eq!(one.outputs.len(), 1);
}

struct Failing;

#[async_trait]
impl Policy for Failing {
    async fn next_turn(&self, _: TurnContext<'_>) -> Result<String, PolicyError> {
        Err(PolicyError::EndpointUnavailable("down".into()))
    }
}

/// Fails for odd seeds only.
struct FlakyBySeed;

#[async_trait]
impl Policy for FlakyBySeed {
    async fn next_turn(&self, ctx: TurnContext<'_>) -> Result<String, PolicyError> {
        if ctx.seed % 2 == 1 {
            Err(PolicyError::ResponseTruncated)
        } else {
            Ok(r"<think>t</think><answer>\boxed{YES}</answer>".into())
        }
    }
}

#[tokio::test]
async fn failing_groups() {
    let engine = Engine::new(Arc::new(Failing));
    let cfg = RolloutConfig { group_size: 8, ..RolloutConfig::default() };
    let err = engine.run_group(&request(flat()), &cfg).await.unwrap_err();
    assert!(matches!(err, RolloutError::AllRolloutsFailed { attempts: 8, .. }));
    assert_eq!(engine.store().live_count(), 0);

    let engine = Engine::new(Arc::new(FlakyBySeed));
    let g = engine.run_group(&request(flat()), &cfg).await.unwrap();
    assert_eq!(g.outputs.len(), 4);
    assert_eq!(g.failures.len(), 4);
    assert!(g.failures.iter().all(|(i, _)| i % 2 == 1));
}

fn batch_items(dir: &std::path::Path, n: usize) -> Vec<BatchItem> {
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let spec = task_spectrum(format!("s{i}"), Task::Cv, if positive { 1.0 } else { 0.0 }, positive, i as u64)
                .unwrap();
            let path = dir.join(format!("s{i}.json"));
            spec.save(&path).unwrap();
            BatchItem {
                item_id: format!("CV-s{i:02}"),
                task: Some(Task::Cv),
                gold: Some(positive),
                prompt: "p".into(),
                spectrum: SpectrumSource::Path(path),
            }
        })
        .collect()
}

#[tokio::test]
async fn batch_writes_ordered_archive() {
    let tmp = tempfile::tempdir().unwrap();
    let mut items = batch_items(tmp.path(), 10);
    items.reverse();
    let engine = Engine::new(Arc::new(ScriptedPolicy::new([cv_rule(1)])));
    let cfg = RolloutConfig { group_size: 2, concurrency: 4, ..RolloutConfig::default() };
    let out = tmp.path().join("out");
    let report = engine.run_batch(&items, &cfg, &out).await.unwrap();
    assert_eq!(report.exit_code(), 0);
    assert_eq!(report.trajectories, 20);
    assert_eq!(engine.store().live_count(), 0);

    let trajs = read_jsonl(out.join("trajectories.traj.jsonl")).unwrap();
    let ids: Vec<_> = trajs.iter().map(|t| t.id.clone()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    for t in &trajs {
        assert!(validate_format(t));
        for r in t.image_refs() {
            assert!(out.join(r).is_file(), "{r}");
        }
        let gold = t.gold.unwrap();
        assert!(t.prediction.matches(gold.is_positive), "{}", t.id);
    }
    let csv = std::fs::read_to_string(out.join("predictions.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "item_id,task,group_index,prediction,gold,tool_call_count,format_ok");
    assert_eq!(lines.next().unwrap(), "CV-s00,CV,0,YES,YES,1,true");
    assert_eq!(csv.lines().count(), 21);
}

#[tokio::test]
async fn batch_isolates_missing_files() {
    let tmp = tempfile::tempdir().unwrap();
    let mut items = batch_items(tmp.path(), 3);
    items[1].spectrum = SpectrumSource::Path(tmp.path().join("missing.json"));
    let engine = Engine::new(Arc::new(ScriptedPolicy::new([cv_rule(1)])));
    let report = engine.run_batch(&items, &single(), &tmp.path().join("out")).await.unwrap();
    assert_eq!(report.exit_code(), 2);
    assert_eq!(report.item_failures.len(), 1);
    assert_eq!(report.item_failures[0].item_id, "CV-s01");
    assert_eq!(report.trajectories, 2);

    let engine = Engine::new(Arc::new(Failing));
    let report = engine.run_batch(&items, &single(), &tmp.path().join("out2")).await.unwrap();
    assert_eq!(report.exit_code(), 3);
    assert_eq!(engine.store().live_count(), 0);
}

#[tokio::test]
async fn empty_batch_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let engine = Engine::new(Arc::new(Failing));
    let report = engine.run_batch(&[], &single(), tmp.path()).await.unwrap();
    assert_eq!(report.exit_code(), 0);
    assert_eq!(std::fs::read_to_string(tmp.path().join("trajectories.traj.jsonl")).unwrap(), "");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cap_is_never_exceeded(probes in 1usize..=20, cap in 1usize..=10) {
        let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
        let engine = Engine::new(Arc::new(ScriptedPolicy::new([cv_rule(probes)])));
        let cfg = RolloutConfig { max_tool_calls: cap, group_size: 1, ..RolloutConfig::default() };
        let out = rt.block_on(engine.run_rollout(&request(flat()), &cfg, 0)).unwrap();
        let t = out.trajectory;
        prop_assert!(t.tool_result_count() <= cap);
        prop_assert_eq!(t.truncated, probes > cap);
        if t.truncated {
            prop_assert!(!t.format_ok);
        } else {
            prop_assert!(t.format_ok);
        }
        prop_assert_eq!(engine.store().live_count(), 0);
    }
}
