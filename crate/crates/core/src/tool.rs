//! The spectral visualization tool: a per-session cache of the raw array and
//! on-demand rendering of full or zoomed views.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::SystemTime;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render;
use crate::spectrum::{slice, Spectrum, WavelengthRange};

/// Name the model must use in `<tool_call>` requests.
pub const TOOL_NAME: &str = "spectral_visualization_tool";
pub const MAX_LABEL_CHARS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolError {
    #[error("session `{0}` not found")]
    SessionNotFound(String),
    #[error("no samples inside [{min}, {max}] Å")]
    EmptyRange { min: f64, max: f64 },
    #[error("bad tool arguments: {0}")]
    BadArguments(String),
    #[error("tool call is not valid JSON: {0}")]
    MalformedJson(String),
}

impl ToolError {
    /// Observation fed back to the policy, or `None` for errors that are not
    /// the caller's doing.
    pub fn to_response(&self) -> Option<ToolResponse> {
        let code = match self {
            ToolError::EmptyRange { .. } => ToolErrorCode::EmptyRange,
            ToolError::BadArguments(_) | ToolError::MalformedJson(_) => ToolErrorCode::BadArguments,
            ToolError::SessionNotFound(_) => return None,
        };
        Some(ToolResponse::Error {
            code,
            message: self.to_string(),
        })
    }
}

/// A validated request for one rendered view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ToolArguments", into = "ToolArguments")]
pub struct ToolCall {
    range: WavelengthRange,
    label: Option<String>,
}

impl ToolCall {
    pub fn new(range: WavelengthRange, label: Option<String>) -> Result<Self, ToolError> {
        if let Some(l) = &label {
            if l.chars().count() > MAX_LABEL_CHARS {
                return Err(ToolError::BadArguments(format!(
                    "label longer than {MAX_LABEL_CHARS} characters"
                )));
            }
            if l.chars().any(char::is_control) {
                return Err(ToolError::BadArguments(
                    "label contains control characters".into(),
                ));
            }
        }
        Ok(Self { range, label })
    }

    pub fn range(&self) -> &WavelengthRange {
        &self.range
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Parse the JSON body of a `<tool_call>` block.
    pub fn from_request_json(text: &str) -> Result<Self, ToolError> {
        let request: ToolRequest =
            serde_json::from_str(text).map_err(|e| ToolError::MalformedJson(e.to_string()))?;
        if request.name != TOOL_NAME {
            return Err(ToolError::BadArguments(format!(
                "unknown tool `{}`",
                request.name
            )));
        }
        ToolCall::try_from(request.arguments)
    }

    pub fn to_request_json(&self) -> String {
        serde_json::to_string(&ToolRequest {
            name: TOOL_NAME.to_string(),
            arguments: self.clone().into(),
        })
        .expect("tool request serialization is infallible")
    }
}

/// Wire shape of a tool request.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolRequest {
    pub name: String,
    pub arguments: ToolArguments,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolArguments {
    pub lambda_min: f64,
    pub lambda_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl TryFrom<ToolArguments> for ToolCall {
    type Error = ToolError;

    fn try_from(a: ToolArguments) -> Result<Self, Self::Error> {
        let range = WavelengthRange::new(a.lambda_min, a.lambda_max)
            .map_err(|e| ToolError::BadArguments(e.to_string()))?;
        ToolCall::new(range, a.label)
    }
}

impl From<ToolCall> for ToolArguments {
    fn from(c: ToolCall) -> Self {
        ToolArguments {
            lambda_min: c.range.min(),
            lambda_max: c.range.max(),
            label: c.label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToolErrorCode {
    EmptyRange,
    BadArguments,
}

/// Wire shape of a tool response, as fed back into the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ToolResponse {
    Ok {
        range: WavelengthRange,
        sample_count: usize,
        image_ref: String,
    },
    Error {
        code: ToolErrorCode,
        message: String,
    },
}

impl ToolResponse {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tool response serialization is infallible")
    }

    pub fn image_ref(&self) -> Option<&str> {
        match self {
            ToolResponse::Ok { image_ref, .. } => Some(image_ref),
            ToolResponse::Error { .. } => None,
        }
    }
}

/// One rendered plot.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub image: Arc<[u8]>,
    pub range: WavelengthRange,
    pub sample_count: usize,
    pub label: Option<String>,
}

impl RenderedView {
    pub fn response(&self, image_ref: impl Into<String>) -> ToolResponse {
        ToolResponse::Ok {
            range: self.range,
            sample_count: self.sample_count,
            image_ref: image_ref.into(),
        }
    }
}

/// Render the samples of `spec` inside `range`.
pub fn render_view(
    spec: &Spectrum,
    range: &WavelengthRange,
    label: Option<&str>,
) -> Result<RenderedView, ToolError> {
    let part = slice(spec, range).map_err(|_| ToolError::EmptyRange {
        min: range.min(),
        max: range.max(),
    })?;
    Ok(RenderedView {
        image: render::plot(&part, range, label).into(),
        range: *range,
        sample_count: part.len(),
        label: label.map(str::to_string),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionId(String);

impl SessionId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for SessionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: SessionId,
    pub spectrum: Arc<Spectrum>,
    pub created_at: SystemTime,
    pub render_count: u64,
}

/// Concurrent store of live sessions.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: DashMap<SessionId, Session>,
    next: AtomicU64,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Cache `spectrum` and render the initial full-range view.
    pub fn open(&self, spectrum: Arc<Spectrum>) -> (SessionId, RenderedView) {
        let id = SessionId(format!("s{}", self.next.fetch_add(1, Ordering::Relaxed)));
        let full = spectrum.full_range();
        let view = RenderedView {
            image: render::plot(&spectrum, &full, None).into(),
            range: full,
            sample_count: spectrum.len(),
            label: None,
        };
        self.sessions.insert(
            id.clone(),
            Session {
                id: id.clone(),
                spectrum,
                created_at: SystemTime::now(),
                render_count: 1,
            },
        );
        (id, view)
    }

    pub fn render(&self, id: &SessionId, call: &ToolCall) -> Result<RenderedView, ToolError> {
        let spectrum = self
            .sessions
            .get(id)
            .map(|s| Arc::clone(&s.spectrum))
            .ok_or_else(|| ToolError::SessionNotFound(id.to_string()))?;
        let view = render_view(&spectrum, call.range(), call.label())?;
        match self.sessions.get_mut(id) {
            Some(mut s) => s.render_count += 1,
            None => return Err(ToolError::SessionNotFound(id.to_string())),
        }
        Ok(view)
    }

    pub fn close(&self, id: &SessionId) -> Result<(), ToolError> {
        self.sessions
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ToolError::SessionNotFound(id.to_string()))
    }

    pub fn get(&self, id: &SessionId) -> Option<Session> {
        self.sessions.get(id).map(|s| s.clone())
    }

    pub fn live_count(&self) -> usize {
        self.sessions.len()
    }
}
