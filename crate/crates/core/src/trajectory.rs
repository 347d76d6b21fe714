//! Interleaved reasoning trajectories: the turn parser, the format predicate,
//! answer extraction, and the `.traj.jsonl` record format.
//!
//! A trajectory is the prompt and initial view followed by model turns. Each
//! turn is `<think>…</think>` followed by either one `<tool_call>…</tool_call>`
//! (answered by a tool observation) or a final `<answer>…</answer>` carrying
//! exactly one `\boxed{YES}` / `\boxed{NO}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectrum::{TaskLabel, WavelengthRange};
use crate::tool::{ToolCall, ToolError, ToolResponse};

/// Version written into every trajectory record.
pub const RECORD_VERSION: u32 = 1;

const THINK: (&str, &str) = ("<think>", "</think>");
const TOOL_CALL: (&str, &str) = ("<tool_call>", "</tool_call>");
const ANSWER: (&str, &str) = ("<answer>", "</answer>");
const BOXED: &str = "\\boxed{";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Prediction {
    Yes,
    No,
    Invalid,
}

impl Prediction {
    pub fn as_str(self) -> &'static str {
        match self {
            Prediction::Yes => "YES",
            Prediction::No => "NO",
            Prediction::Invalid => "INVALID",
        }
    }

    /// Whether this prediction agrees with the gold label. `Invalid` never does.
    pub fn matches(self, gold_positive: bool) -> bool {
        match self {
            Prediction::Yes => gold_positive,
            Prediction::No => !gold_positive,
            Prediction::Invalid => false,
        }
    }
}

impl std::str::FromStr for Prediction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "YES" => Ok(Prediction::Yes),
            "NO" => Ok(Prediction::No),
            "INVALID" => Ok(Prediction::Invalid),
            other => Err(format!("unknown prediction `{other}`")),
        }
    }
}

/// Grammar problems found in a single turn. Any diagnostic makes the
/// trajectory fail the format predicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum Diagnostic {
    MissingThink,
    MultipleThinkBlocks,
    ThinkNotFirst,
    MultipleToolCalls,
    MalformedToolJson(String),
    MultipleAnswers,
    ToolCallWithAnswer,
    StrayText,
    UnclosedTag(String),
    ToolCallCapExceeded,
}

/// Action requested by a turn.
#[derive(Debug, Clone, PartialEq)]
pub enum TurnAction {
    None,
    /// `raw` is the text inside the tool-call tag; `call` is its parse.
    ToolCall {
        raw: String,
        call: Result<ToolCall, ToolError>,
    },
    /// One entry per `<answer>` block, in order.
    Answer(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTurn {
    pub think: Vec<String>,
    pub action: TurnAction,
    /// Non-whitespace text found outside recognized tags.
    pub stray: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParsedTurn {
    pub fn is_well_formed(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum BlockKind {
    Think,
    ToolCall,
    Answer,
}

/// Classify one raw model turn. Never fails: grammar problems are reported
/// as diagnostics.
pub fn parse_turn(raw: &str) -> ParsedTurn {
    let tags = [
        (BlockKind::Think, THINK),
        (BlockKind::ToolCall, TOOL_CALL),
        (BlockKind::Answer, ANSWER),
    ];
    let mut blocks: Vec<(BlockKind, String)> = Vec::new();
    let mut stray = Vec::new();
    let mut diagnostics = Vec::new();
    let mut pos = 0;
    while pos < raw.len() {
        let rest = &raw[pos..];
        let next = tags
            .iter()
            .filter_map(|(kind, (open, close))| rest.find(open).map(|i| (i, *kind, *open, *close)))
            .min_by_key(|(i, ..)| *i);
        let Some((offset, kind, open, close)) = next else {
            push_stray(&mut stray, rest);
            break;
        };
        push_stray(&mut stray, &rest[..offset]);
        let body_start = pos + offset + open.len();
        match raw[body_start..].find(close) {
            Some(len) => {
                blocks.push((kind, raw[body_start..body_start + len].to_string()));
                pos = body_start + len + close.len();
            }
            None => {
                diagnostics.push(Diagnostic::UnclosedTag(open.to_string()));
                push_stray(&mut stray, &raw[pos + offset..]);
                break;
            }
        }
    }

    let think: Vec<String> = blocks
        .iter()
        .filter(|(k, _)| *k == BlockKind::Think)
        .map(|(_, t)| t.clone())
        .collect();
    let tool_calls: Vec<&String> = blocks
        .iter()
        .filter(|(k, _)| *k == BlockKind::ToolCall)
        .map(|(_, t)| t)
        .collect();
    let answers: Vec<String> = blocks
        .iter()
        .filter(|(k, _)| *k == BlockKind::Answer)
        .map(|(_, t)| t.clone())
        .collect();

    match think.len() {
        0 => diagnostics.push(Diagnostic::MissingThink),
        1 => {}
        _ => diagnostics.push(Diagnostic::MultipleThinkBlocks),
    }
    if !think.is_empty() && blocks.first().map(|(k, _)| *k) != Some(BlockKind::Think) {
        diagnostics.push(Diagnostic::ThinkNotFirst);
    }
    if !stray.is_empty() {
        diagnostics.push(Diagnostic::StrayText);
    }
    if answers.len() > 1 {
        diagnostics.push(Diagnostic::MultipleAnswers);
    }

    let action = match (tool_calls.as_slice(), answers.is_empty()) {
        ([], true) => TurnAction::None,
        ([], false) => TurnAction::Answer(answers),
        (calls, no_answer) => {
            if !no_answer {
                // the tool call takes precedence; the answer text is kept as stray text
                diagnostics.push(Diagnostic::ToolCallWithAnswer);
                stray.extend(answers.iter().map(|a| format!("{}{a}{}", ANSWER.0, ANSWER.1)));
            }
            if calls.len() > 1 {
                diagnostics.push(Diagnostic::MultipleToolCalls);
                TurnAction::ToolCall {
                    raw: calls.iter().map(|c| c.as_str()).collect::<Vec<_>>().join("\n"),
                    call: Err(ToolError::BadArguments(
                        "only one tool call is allowed per turn".into(),
                    )),
                }
            } else {
                let raw = calls[0].clone();
                let call = ToolCall::from_request_json(raw.trim());
                if let Err(ToolError::MalformedJson(msg)) = &call {
                    diagnostics.push(Diagnostic::MalformedToolJson(msg.clone()));
                }
                TurnAction::ToolCall { raw, call }
            }
        }
    };

    ParsedTurn {
        think,
        action,
        stray,
        diagnostics,
    }
}

fn push_stray(stray: &mut Vec<String>, text: &str) {
    if !text.trim().is_empty() {
        stray.push(text.to_string());
    }
}

/// Decision carried by answer text: exactly one `\boxed{…}` whose trimmed
/// content is `YES` or `NO` (case-sensitive). Anything else is `Invalid`.
pub fn boxed_prediction(answer: &str) -> Prediction {
    let mut found = Vec::new();
    let mut rest = answer;
    while let Some(i) = rest.find(BOXED) {
        let after = &rest[i + BOXED.len()..];
        match after.find('}') {
            Some(j) => {
                found.push(&after[..j]);
                rest = &after[j + 1..];
            }
            None => return Prediction::Invalid,
        }
    }
    match found.as_slice() {
        [one] => match one.trim() {
            "YES" => Prediction::Yes,
            "NO" => Prediction::No,
            _ => Prediction::Invalid,
        },
        _ => Prediction::Invalid,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    Think,
    ToolCall,
    ToolResult,
    Answer,
    PlainText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub kind: StepKind,
    /// Index of the model turn that produced (or, for tool results, triggered) this step.
    pub turn: usize,
    pub text: Option<String>,
    pub call: Option<ToolCall>,
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<ToolResponse>,
}

impl Step {
    fn text(kind: StepKind, turn: usize, text: impl Into<String>) -> Self {
        Step {
            kind,
            turn,
            text: Some(text.into()),
            call: None,
            image_ref: None,
            observation: None,
        }
    }
}

/// Reference to a rendered view stored next to the trajectory record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRef {
    pub image_ref: String,
    pub range: WavelengthRange,
    pub sample_count: usize,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnDiagnostic {
    pub turn: usize,
    pub diagnostic: Diagnostic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub version: u32,
    pub id: String,
    #[serde(default)]
    pub item_id: Option<String>,
    pub prompt: String,
    pub initial_view: ViewRef,
    /// Raw model outputs, one per turn.
    pub turns: Vec<String>,
    pub steps: Vec<Step>,
    pub prediction: Prediction,
    pub gold: Option<TaskLabel>,
    pub format_ok: bool,
    pub tool_call_count: usize,
    pub truncated: bool,
    #[serde(default)]
    pub diagnostics: Vec<TurnDiagnostic>,
}

impl Trajectory {
    pub fn tool_result_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.kind == StepKind::ToolResult)
            .count()
    }

    /// Image references in document order, starting with the initial view.
    pub fn image_refs(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.initial_view.image_ref.as_str())
            .chain(self.steps.iter().filter_map(|s| s.image_ref.as_deref()))
    }
}

/// What the caller should do after a turn has been recorded.
#[derive(Debug, Clone, PartialEq)]
pub enum TurnOutcome {
    /// Execute the call (or feed back the argument error) and record the result.
    RunTool(Result<ToolCall, ToolError>),
    /// The turn carried an answer; the trajectory is complete.
    Final,
    /// No action; ask the policy for another turn.
    Continue,
    /// A tool call was requested after the cap was reached.
    CapExceeded,
}

#[derive(Debug, Error, PartialEq)]
pub enum BuildError {
    #[error("a tool result must directly follow a tool call")]
    ResultWithoutCall,
}

/// Incrementally assembles a [`Trajectory`] from model turns and tool results.
#[derive(Debug, Clone)]
pub struct TrajectoryBuilder {
    traj: Trajectory,
    pending_call: bool,
}

impl TrajectoryBuilder {
    pub fn new(id: impl Into<String>, prompt: impl Into<String>, initial_view: ViewRef) -> Self {
        Self {
            traj: Trajectory {
                version: RECORD_VERSION,
                id: id.into(),
                item_id: None,
                prompt: prompt.into(),
                initial_view,
                turns: Vec::new(),
                steps: Vec::new(),
                prediction: Prediction::Invalid,
                gold: None,
                format_ok: false,
                tool_call_count: 0,
                truncated: false,
                diagnostics: Vec::new(),
            },
            pending_call: false,
        }
    }

    pub fn item_id(mut self, item_id: impl Into<String>) -> Self {
        self.traj.item_id = Some(item_id.into());
        self
    }

    pub fn gold(mut self, gold: Option<TaskLabel>) -> Self {
        self.traj.gold = gold;
        self
    }

    pub fn tool_call_count(&self) -> usize {
        self.traj.tool_call_count
    }

    pub fn turn_count(&self) -> usize {
        self.traj.turns.len()
    }

    /// Record one model turn. When `allow_tool_call` is false a requested
    /// tool call is dropped and reported as [`TurnOutcome::CapExceeded`].
    pub fn push_turn(&mut self, raw: &str, parsed: &ParsedTurn, allow_tool_call: bool) -> TurnOutcome {
        let turn = self.traj.turns.len();
        self.traj.turns.push(raw.to_string());
        for d in &parsed.diagnostics {
            self.traj.diagnostics.push(TurnDiagnostic {
                turn,
                diagnostic: d.clone(),
            });
        }
        for t in &parsed.think {
            self.traj.steps.push(Step::text(StepKind::Think, turn, t.clone()));
        }
        for s in &parsed.stray {
            self.traj.steps.push(Step::text(StepKind::PlainText, turn, s.clone()));
        }
        match &parsed.action {
            TurnAction::None => TurnOutcome::Continue,
            TurnAction::Answer(answers) => {
                for a in answers {
                    self.traj.steps.push(Step::text(StepKind::Answer, turn, a.clone()));
                }
                TurnOutcome::Final
            }
            TurnAction::ToolCall { raw, call } => {
                if !allow_tool_call {
                    self.traj.diagnostics.push(TurnDiagnostic {
                        turn,
                        diagnostic: Diagnostic::ToolCallCapExceeded,
                    });
                    return TurnOutcome::CapExceeded;
                }
                self.traj.steps.push(Step {
                    kind: StepKind::ToolCall,
                    turn,
                    text: Some(raw.clone()),
                    call: call.as_ref().ok().cloned(),
                    image_ref: None,
                    observation: None,
                });
                self.traj.tool_call_count += 1;
                self.pending_call = true;
                TurnOutcome::RunTool(call.clone())
            }
        }
    }

    /// Record the observation for the most recent tool call.
    pub fn push_tool_result(&mut self, response: ToolResponse) -> Result<(), BuildError> {
        if !self.pending_call {
            return Err(BuildError::ResultWithoutCall);
        }
        self.pending_call = false;
        let turn = self.traj.turns.len() - 1;
        self.traj.steps.push(Step {
            kind: StepKind::ToolResult,
            turn,
            text: None,
            call: None,
            image_ref: response.image_ref().map(str::to_string),
            observation: Some(response),
        });
        Ok(())
    }

    pub fn finish(mut self, truncated: bool) -> Trajectory {
        self.traj.truncated = truncated || self.pending_call;
        self.traj.prediction = extract_prediction(&self.traj);
        self.traj.format_ok = validate_format(&self.traj);
        self.traj
    }
}

/// The format predicate: every turn is `think` then one tool call or the
/// final answer, no stray text, a single well-formed boxed decision at the
/// end, and no truncation.
pub fn validate_format(traj: &Trajectory) -> bool {
    if traj.truncated || !traj.diagnostics.is_empty() || traj.steps.is_empty() {
        return false;
    }
    #[derive(PartialEq)]
    enum Expect {
        Think,
        Action,
        Result,
        End,
    }
    let mut expect = Expect::Think;
    for step in &traj.steps {
        expect = match (expect, step.kind) {
            (Expect::Think, StepKind::Think) => Expect::Action,
            (Expect::Action, StepKind::ToolCall) => Expect::Result,
            (Expect::Action, StepKind::Answer) => Expect::End,
            (Expect::Result, StepKind::ToolResult) => Expect::Think,
            _ => return false,
        };
    }
    expect == Expect::End && extract_prediction(traj) != Prediction::Invalid
}

/// Boxed decision of the single answer step; `Invalid` when there is no
/// answer, more than one, or the boxed token is not exactly `YES`/`NO`.
pub fn extract_prediction(traj: &Trajectory) -> Prediction {
    let mut answers = traj.steps.iter().filter(|s| s.kind == StepKind::Answer);
    match (answers.next(), answers.next()) {
        (Some(step), None) => boxed_prediction(step.text.as_deref().unwrap_or_default()),
        _ => Prediction::Invalid,
    }
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

pub fn serialize(traj: &Trajectory) -> String {
    serde_json::to_string(traj).expect("trajectory serialization is infallible")
}

pub fn deserialize(record: &str) -> Result<Trajectory, RecordError> {
    let value: serde_json::Value =
        serde_json::from_str(record).map_err(|e| RecordError::SchemaMismatch(e.to_string()))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == RECORD_VERSION as u64 => {}
        Some(v) => {
            return Err(RecordError::SchemaMismatch(format!(
                "unsupported record version {v}"
            )))
        }
        None => return Err(RecordError::SchemaMismatch("missing `version`".into())),
    }
    serde_json::from_value(value).map_err(|e| RecordError::SchemaMismatch(e.to_string()))
}

pub fn write_jsonl<'a>(
    path: impl AsRef<Path>,
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
) -> Result<(), RecordError> {
    let path = path.as_ref();
    let io = |e: std::io::Error| RecordError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for t in trajectories {
        writeln!(out, "{}", serialize(t)).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, RecordError> {
    let path = path.as_ref();
    let io = |e: std::io::Error| RecordError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(deserialize(&line).map_err(|e| match e {
            RecordError::SchemaMismatch(m) => {
                RecordError::SchemaMismatch(format!("line {}: {m}", n + 1))
            }
            other => other,
        })?);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn view(image_ref: &str) -> ViewRef {
        ViewRef {
            image_ref: image_ref.into(),
            range: WavelengthRange::new(3900.0, 9000.0).unwrap(),
            sample_count: 100,
            label: None,
        }
    }

    pub(crate) fn ok_response(k: usize) -> ToolResponse {
        ToolResponse::Ok {
            range: WavelengthRange::new(6400.0, 6700.0).unwrap(),
            sample_count: 301,
            image_ref: format!("assets/t/{k:03}.png"),
        }
    }

    /// Build a trajectory from raw turns, answering every tool call with an ok view.
    pub(crate) fn from_turns(turns: &[&str], cap: usize) -> Trajectory {
        let mut b = TrajectoryBuilder::new("t", "prompt", view("assets/t/000.png"));
        let mut truncated = true;
        for raw in turns {
            let parsed = parse_turn(raw);
            match b.push_turn(raw, &parsed, b.tool_call_count() < cap) {
                TurnOutcome::RunTool(_) => {
                    let k = b.tool_call_count();
                    b.push_tool_result(ok_response(k)).unwrap();
                }
                TurnOutcome::Final => {
                    truncated = false;
                    break;
                }
                TurnOutcome::Continue => {}
                TurnOutcome::CapExceeded => break,
            }
        }
        b.finish(truncated)
    }

    const CALL: &str = r#"<think>check Halpha</think><tool_call>{"name":"spectral_visualization_tool","arguments":{"lambda_min":6400,"lambda_max":6700}}</tool_call>"#;

    #[test]
    fn parses_tool_call_turn() {
        let p = parse_turn(CALL);
        assert!(p.is_well_formed(), "{:?}", p.diagnostics);
        assert_eq!(p.think, vec!["check Halpha".to_string()]);
        let TurnAction::ToolCall { call: Ok(call), .. } = p.action else {
            panic!("expected a tool call");
        };
        assert_eq!(call.range(), &WavelengthRange::new(6400.0, 6700.0).unwrap());
    }

    #[test]
    fn parses_answer_turn() {
        let p = parse_turn(r"<think>done</think><answer>\boxed{YES} broad Balmer emission</answer>");
        assert!(p.is_well_formed());
        assert_eq!(
            p.action,
            TurnAction::Answer(vec![r"\boxed{YES} broad Balmer emission".into()])
        );
    }

    #[test]
    fn two_tool_calls_flagged() {
        let raw = format!("{CALL}<tool_call>{{}}</tool_call>");
        let p = parse_turn(&raw);
        assert!(p.diagnostics.contains(&Diagnostic::MultipleToolCalls));
        assert!(matches!(p.action, TurnAction::ToolCall { call: Err(_), .. }));
    }

    #[test]
    fn malformed_json_flagged() {
        let p = parse_turn("<think>x</think><tool_call>{lambda_min: 1}</tool_call>");
        assert!(matches!(p.diagnostics[..], [Diagnostic::MalformedToolJson(_)]));
    }

    #[test]
    fn bad_arguments_are_not_format_errors() {
        let p = parse_turn(
            r#"<think>x</think><tool_call>{"name":"spectral_visualization_tool","arguments":{"lambda_min":7000,"lambda_max":6000}}</tool_call>"#,
        );
        assert!(p.is_well_formed());
        assert!(matches!(
            p.action,
            TurnAction::ToolCall { call: Err(ToolError::BadArguments(_)), .. }
        ));
    }

    #[test]
    fn parser_edge_cases() {
        let p = parse_turn("");
        assert_eq!(p.action, TurnAction::None);
        assert_eq!(p.diagnostics, vec![Diagnostic::MissingThink]);

        let p = parse_turn("<think>unterminated");
        assert!(p.diagnostics.contains(&Diagnostic::UnclosedTag("<think>".into())));

        let p = parse_turn(r"<answer>\boxed{NO}</answer><think>late</think>");
        assert!(p.diagnostics.contains(&Diagnostic::ThinkNotFirst));

        let p = parse_turn("<think>a</think>  \n <answer>\\boxed{NO}</answer> trailing");
        assert!(p.diagnostics.contains(&Diagnostic::StrayText));
        assert_eq!(p.stray, vec![" trailing".to_string()]);
    }

    #[test]
    fn boxed_matching_rules() {
        assert_eq!(boxed_prediction(r"\boxed{YES}"), Prediction::Yes);
        assert_eq!(boxed_prediction(r"\boxed{ NO }"), Prediction::No);
        assert_eq!(boxed_prediction(r"\boxed{Yes}"), Prediction::Invalid);
        assert_eq!(boxed_prediction(r"\boxed{yes}"), Prediction::Invalid);
        assert_eq!(boxed_prediction("YES"), Prediction::Invalid);
        assert_eq!(boxed_prediction(r"\boxed{YES} \boxed{NO}"), Prediction::Invalid);
        assert_eq!(boxed_prediction(r"\boxed{YES"), Prediction::Invalid);
    }

    #[test]
    fn case_variant_corpus() {
        // exact-match oracle: only the literal uppercase tokens are decisions
        for word in ["YES", "NO", "Yes", "yes", "yEs", "No", "no", "nO", "Y", "N", "TRUE", ""] {
            let expected = match word {
                "YES" => Prediction::Yes,
                "NO" => Prediction::No,
                _ => Prediction::Invalid,
            };
            let t = from_turns(&[&format!(r"<think>x</think><answer>\boxed{{{word}}}</answer>")], 8);
            assert_eq!(extract_prediction(&t), expected, "{word}");
        }
    }

    #[test]
    fn format_examples() {
        let answer = r"<think>done</think><answer>\boxed{YES} because</answer>";
        let t = from_turns(&[CALL, CALL, answer], 8);
        assert!(validate_format(&t));
        assert_eq!(t.tool_call_count, 2);
        assert_eq!(t.prediction, Prediction::Yes);

        let t = from_turns(&[CALL, "<think>done</think><answer>YES</answer>"], 8);
        assert!(!validate_format(&t));
        assert_eq!(t.prediction, Prediction::Invalid);

        let t = from_turns(&[CALL; 9], 8);
        assert!(t.truncated);
        assert!(!validate_format(&t));
        assert_eq!(t.tool_result_count(), 8);
    }

    #[test]
    fn zero_tool_call_trajectory_is_valid() {
        let t = from_turns(&[r"<think>obvious</think><answer>\boxed{NO} flat continuum</answer>"], 8);
        assert!(t.format_ok);
        assert_eq!(t.tool_call_count, 0);
    }

    #[test]
    fn plain_text_turn_fails_format() {
        let t = from_turns(&["just musing", r"<think>x</think><answer>\boxed{NO}</answer>"], 8);
        assert_eq!(t.steps[0].kind, StepKind::PlainText);
        assert!(!t.format_ok);
        assert_eq!(t.prediction, Prediction::No);
    }

    #[test]
    fn builder_rejects_orphan_result() {
        let mut b = TrajectoryBuilder::new("t", "p", view("a.png"));
        assert_eq!(b.push_tool_result(ok_response(1)), Err(BuildError::ResultWithoutCall));
    }

    #[test]
    fn record_round_trip() {
        let t = from_turns(&[CALL, r"<think>d</think><answer>\boxed{NO}</answer>"], 8);
        assert_eq!(t.steps.len(), 5);
        let back = deserialize(&serialize(&t)).unwrap();
        assert_eq!(back, t);
        let v: serde_json::Value = serde_json::from_str(&serialize(&t)).unwrap();
        for key in ["version", "prompt", "initial_view", "steps", "prediction", "gold", "format_ok", "tool_call_count"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        for key in ["kind", "text", "call", "image_ref"] {
            assert!(v["steps"][0].get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn eight_tool_calls_recorded() {
        let mut turns = vec![CALL; 8];
        turns.push(r"<think>d</think><answer>\boxed{NO}</answer>");
        let t = from_turns(&turns, 8);
        let v: serde_json::Value = serde_json::from_str(&serialize(&t)).unwrap();
        assert_eq!(v["tool_call_count"], 8);
        assert!(t.format_ok);
    }

    #[test]
    fn schema_mismatches() {
        let t = from_turns(&[r"<think>d</think><answer>\boxed{NO}</answer>"], 8);
        let mut v: serde_json::Value = serde_json::from_str(&serialize(&t)).unwrap();
        v.as_object_mut().unwrap().remove("steps");
        assert!(matches!(deserialize(&v.to_string()), Err(RecordError::SchemaMismatch(_))));
        let mut v: serde_json::Value = serde_json::from_str(&serialize(&t)).unwrap();
        v["version"] = 99.into();
        assert!(matches!(deserialize(&v.to_string()), Err(RecordError::SchemaMismatch(_))));
    }

    #[test]
    fn jsonl_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.traj.jsonl");
        let ts = vec![
            from_turns(&[CALL, r"<think>d</think><answer>\boxed{NO}</answer>"], 8),
            from_turns(&[r"<think>d</think><answer>\boxed{YES}</answer>"], 8),
        ];
        write_jsonl(&path, &ts).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), ts);
    }
}
