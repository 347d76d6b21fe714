//! Outcome reward, group-relative advantages, and loss-masked training samples.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectrum::TaskLabel;
use crate::tool::ToolResponse;
use crate::trajectory::{extract_prediction, validate_format, StepKind, Trajectory};

/// Denominator floor for advantage normalization.
pub const ADV_EPSILON: f64 = 1e-8;
/// Groups whose reward spread is below this get all-zero advantages.
pub const ZERO_STD: f64 = 1e-12;
/// Placeholder standing for a rendered image inside a serialized conversation.
pub const IMAGE_PLACEHOLDER: &str = "<image>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("format penalty alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("advantage group is empty")]
    EmptyGroup,
    #[error("trajectory `{0}` has no gold label")]
    MissingGold(String),
    #[error("cannot write batch: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageMode {
    /// `(r − mean) / std`
    #[default]
    Normalized,
    /// `r − mean`
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    alpha: f64,
    #[serde(default)]
    pub advantage: AdvantageMode,
}

impl RewardConfig {
    pub fn new(alpha: f64) -> Result<Self, RewardError> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(Self {
                alpha,
                advantage: AdvantageMode::Normalized,
            })
        } else {
            Err(RewardError::InvalidAlpha(alpha))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            advantage: AdvantageMode::Normalized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardOutcome {
    pub reward: f64,
    pub correct: bool,
    pub format_ok: bool,
}

/// The four-case reward table.
pub fn reward_value(correct: bool, format_ok: bool, alpha: f64) -> f64 {
    match (correct, format_ok) {
        (true, true) => 1.0,
        (true, false) => 1.0 - alpha,
        (false, true) => 0.0,
        (false, false) => -alpha,
    }
}

pub fn compute_reward(traj: &Trajectory, gold: &TaskLabel, cfg: &RewardConfig) -> RewardOutcome {
    let correct = extract_prediction(traj).matches(gold.is_positive);
    let format_ok = validate_format(traj);
    RewardOutcome {
        reward: reward_value(correct, format_ok, cfg.alpha),
        correct,
        format_ok,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageGroup {
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Group mean and population std; advantages are `(r − mean) / max(std, ε)`,
/// or exactly zero when `std < 1e-12`.
pub fn compute_group_advantages(rewards: &[f64]) -> Result<AdvantageGroup, RewardError> {
    compute_group_advantages_with(rewards, AdvantageMode::Normalized)
}

pub fn compute_group_advantages_with(
    rewards: &[f64],
    mode: AdvantageMode,
) -> Result<AdvantageGroup, RewardError> {
    if rewards.is_empty() {
        return Err(RewardError::EmptyGroup);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    let advantages = if std < ZERO_STD {
        vec![0.0; rewards.len()]
    } else {
        match mode {
            AdvantageMode::Normalized => {
                let denom = std.max(ADV_EPSILON);
                rewards.iter().map(|r| (r - mean) / denom).collect()
            }
            AdvantageMode::Centered => rewards.iter().map(|r| r - mean).collect(),
        }
    };
    Ok(AdvantageGroup {
        rewards: rewards.to_vec(),
        advantages,
        mean,
        std,
    })
}

/// Half-open character span `[start, end)` over a serialized conversation.
pub type Span = (usize, usize);

/// A serialized conversation with loss-masked tool output.
///
/// Offsets count Unicode scalar values, not bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedSample {
    pub trajectory_id: String,
    pub conversation: String,
    pub mask_spans: Vec<Span>,
    pub target_spans: Vec<Span>,
}

/// Text of a tool observation as it appears in the serialized conversation.
pub fn tool_response_text(response: &ToolResponse) -> String {
    let image = match response {
        ToolResponse::Ok { .. } => IMAGE_PLACEHOLDER,
        ToolResponse::Error { .. } => "",
    };
    format!("<tool_response>{}{image}</tool_response>", response.to_json())
}

/// Model-authored turns are targets; tool observations are masked.
pub fn build_masked_sample(traj: &Trajectory) -> MaskedSample {
    let mut conversation = String::new();
    let mut mask_spans = Vec::new();
    let mut target_spans: Vec<Span> = Vec::new();
    let mut cursor = 0usize;

    let mut push = |text: &str, masked: bool, conversation: &mut String| {
        let len = text.chars().count();
        if len == 0 {
            return;
        }
        conversation.push_str(text);
        let span = (cursor, cursor + len);
        cursor += len;
        let spans = if masked { &mut mask_spans } else { &mut target_spans };
        match spans.last_mut() {
            Some(last) if last.1 == span.0 => last.1 = span.1,
            _ => spans.push(span),
        }
    };

    for (turn, raw) in traj.turns.iter().enumerate() {
        push(raw, false, &mut conversation);
        for step in traj
            .steps
            .iter()
            .filter(|s| s.kind == StepKind::ToolResult && s.turn == turn)
        {
            if let Some(obs) = &step.observation {
                push(&tool_response_text(obs), true, &mut conversation);
            }
        }
    }

    MaskedSample {
        trajectory_id: traj.id.clone(),
        conversation,
        mask_spans,
        target_spans,
    }
}

/// One line of an RL batch file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlRecord {
    pub item_id: String,
    pub group_index: usize,
    pub conversation: String,
    pub mask_spans: Vec<Span>,
    pub reward: f64,
    pub advantage: f64,
    pub format_ok: bool,
    pub correct: bool,
}

/// Rewards, advantages and masks for each group of rollouts.
pub fn export_rl_batch(
    groups: &[(String, Vec<Trajectory>)],
    cfg: &RewardConfig,
) -> Result<Vec<RlRecord>, RewardError> {
    let mut records = Vec::new();
    for (item_id, trajectories) in groups {
        let outcomes = trajectories
            .iter()
            .map(|t| {
                t.gold
                    .as_ref()
                    .map(|g| compute_reward(t, g, cfg))
                    .ok_or_else(|| RewardError::MissingGold(t.id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rewards: Vec<f64> = outcomes.iter().map(|o| o.reward).collect();
        let group = compute_group_advantages_with(&rewards, cfg.advantage)?;
        for (i, (t, o)) in trajectories.iter().zip(&outcomes).enumerate() {
            let sample = build_masked_sample(t);
            records.push(RlRecord {
                item_id: item_id.clone(),
                group_index: i,
                conversation: sample.conversation,
                mask_spans: sample.mask_spans,
                reward: o.reward,
                advantage: group.advantages[i],
                format_ok: o.format_ok,
                correct: o.correct,
            });
        }
    }
    Ok(records)
}

/// Cold-start SFT samples: the same masked conversations, no rewards.
pub fn export_sft_samples(trajectories: &[Trajectory]) -> Vec<MaskedSample> {
    trajectories.iter().map(build_masked_sample).collect()
}

pub fn write_rl_batch(path: impl AsRef<Path>, records: &[RlRecord]) -> Result<(), RewardError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| RewardError::Io(e.to_string()))?;
        buf.push(b'\n');
    }
    std::fs::File::create(path.as_ref())
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| RewardError::Io(e.to_string()))
}
