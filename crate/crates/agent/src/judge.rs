//! LLM-as-judge scoring of finished trajectories on a 0-5 scale.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use specvi_core::trajectory::{StepKind, Trajectory};
use thiserror::Error;

use crate::http::HttpPolicy;
use crate::message::{Message, Part, Role};
use crate::policy::PolicyError;

pub const DEFAULT_RUBRIC: &str = "\
Rate the reasoning in the trajectory on an integer scale from 0 to 5.
5: Every step is coherent and physically sound; the inspected wavelength ranges target the right features and the conclusion follows from what the plots show.
4: Sound overall, with minor imprecision in line identification or wording that does not affect the conclusion.
3: Mostly reasonable, but with a noticeable gap such as an unjustified leap or a feature claimed without looking at it.
2: Several steps are unsupported or physically questionable; the conclusion is only loosely tied to the evidence.
1: Reasoning is largely incoherent or misreads the plots, with at most fragments of valid analysis.
0: No meaningful reasoning, or reasoning that contradicts basic spectroscopy.";

const REPLY_FORMAT: &str =
    "Reply with a first line of the form `score: <n>` where n is a single integer from 0 to 5, followed by a short rationale.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub score: u8,
    pub rationale: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JudgeError {
    #[error("judge reply has no usable score line: {0}")]
    UnparseableScore(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

fn strip_token(token: &str) -> &str {
    token
        .trim_start_matches(['*', '`', '(', '['])
        .trim_end_matches(['*', '`', ')', ']', '.', ',', ';', ':'])
}

/// Reads the score from the first line containing `score:` (any case). The
/// first token there that holds a digit must be a plain integer in 0..=5.
pub fn parse_score(reply: &str) -> Result<JudgeScore, JudgeError> {
    let fail = || JudgeError::UnparseableScore(reply.chars().take(200).collect());
    let (idx, line) = reply
        .lines()
        .enumerate()
        .find(|(_, l)| l.to_ascii_lowercase().contains("score:"))
        .ok_or_else(fail)?;
    let at = line.to_ascii_lowercase().find("score:").expect("found above") + "score:".len();
    let token = line[at..]
        .split_whitespace()
        .find(|t| t.chars().any(|c| c.is_ascii_digit()))
        .ok_or_else(fail)?;
    let token = strip_token(token);
    if token.is_empty() || !token.chars().all(|c| c.is_ascii_digit()) {
        return Err(fail());
    }
    let score: u8 = token.parse().map_err(|_| fail())?;
    if score > 5 {
        return Err(fail());
    }
    let mut rationale: Vec<&str> = Vec::new();
    let rest = line[at..].split_once(token).map_or("", |(_, r)| r).trim();
    let rest = rest.trim_start_matches(|c: char| !c.is_alphanumeric());
    if !rest.is_empty() {
        rationale.push(rest);
    }
    rationale.extend(reply.lines().skip(idx + 1).map(str::trim).filter(|l| !l.is_empty()));
    Ok(JudgeScore { score, rationale: rationale.join("\n") })
}

/// Messages sent to the judge: rubric as system text, then the trajectory
/// with its plots in order. Images are read from `assets` when given.
pub fn judge_messages(traj: &Trajectory, rubric: &str, assets: Option<&Path>) -> Vec<Message> {
    let load = |image_ref: &str| -> Option<Arc<[u8]>> {
        let dir = assets?;
        std::fs::read(dir.join(image_ref)).ok().map(Arc::from)
    };
    let mut parts = vec![Part::Text(format!("Task prompt:\n{}", traj.prompt))];
    if let Some(png) = load(&traj.initial_view.image_ref) {
        parts.push(Part::Image { image_ref: traj.initial_view.image_ref.clone(), png });
    }
    for step in &traj.steps {
        let text = match step.kind {
            StepKind::Think => format!("[think] {}", step.text.as_deref().unwrap_or("")),
            StepKind::ToolCall => format!("[tool call] {}", step.text.as_deref().unwrap_or("")),
            StepKind::Answer => format!("[answer] {}", step.text.as_deref().unwrap_or("")),
            StepKind::PlainText => format!("[text] {}", step.text.as_deref().unwrap_or("")),
            StepKind::ToolResult => {
                let obs = step.observation.as_ref().map(|o| o.to_json()).unwrap_or_default();
                parts.push(Part::Text(format!("[tool result] {obs}")));
                if let Some(png) = step.image_ref.as_deref().and_then(load) {
                    parts.push(Part::Image { image_ref: step.image_ref.clone().unwrap_or_default(), png });
                }
                continue;
            }
        };
        parts.push(Part::Text(text));
    }
    vec![
        Message::text(Role::System, format!("{rubric}\n\n{REPLY_FORMAT}")),
        Message { role: Role::User, parts },
    ]
}

/// Scores `traj`, asking once more if the first reply cannot be parsed.
pub async fn judge_trajectory(
    client: &HttpPolicy,
    traj: &Trajectory,
    rubric: &str,
    assets: Option<&Path>,
) -> Result<JudgeScore, JudgeError> {
    let messages = judge_messages(traj, rubric, assets);
    let first = client.complete(&messages, None).await?;
    match parse_score(&first) {
        Ok(s) => Ok(s),
        Err(_) => {
            tracing::warn!(trajectory = %traj.id, "unparseable judge reply, retrying once");
            let second = client.complete(&messages, None).await?;
            parse_score(&second)
        }
    }
}
