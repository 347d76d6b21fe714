//! The policy abstraction shared by HTTP, scripted and replay clients.

use std::sync::atomic::{AtomicUsize, Ordering};

use async_trait::async_trait;
use specvi_core::{Spectrum, Task};
use thiserror::Error;

use crate::message::{Message, Role};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy endpoint unavailable: {0}")]
    EndpointUnavailable(String),
    #[error("policy endpoint rejected the request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("policy turn timed out after {0:?}")]
    TurnTimeout(std::time::Duration),
    #[error("policy response was cut off by the token limit")]
    ResponseTruncated,
    #[error("unexpected policy response: {0}")]
    BadResponse(String),
    #[error("invalid policy configuration: {0}")]
    InvalidConfig(String),
}

/// Everything a policy may look at when producing the next turn.
#[derive(Debug, Clone, Copy)]
pub struct TurnContext<'a> {
    pub history: &'a [Message],
    /// Read access granted to scripted policies; model clients ignore it.
    pub spectrum: &'a Spectrum,
    pub task: Option<Task>,
    pub seed: u64,
}

impl TurnContext<'_> {
    pub fn assistant_turns(&self) -> usize {
        self.history.iter().filter(|m| m.role == Role::Assistant).count()
    }
}

#[async_trait]
pub trait Policy: Send + Sync {
    async fn next_turn(&self, ctx: TurnContext<'_>) -> Result<String, PolicyError>;
}

/// Replays fixed turns in order, repeating the last one when exhausted.
#[derive(Debug)]
pub struct ReplayPolicy {
    turns: Vec<String>,
    calls: AtomicUsize,
}

impl ReplayPolicy {
    pub fn new<S: Into<String>>(turns: impl IntoIterator<Item = S>) -> Self {
        ReplayPolicy {
            turns: turns.into_iter().map(Into::into).collect(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

#[async_trait]
impl Policy for ReplayPolicy {
    async fn next_turn(&self, ctx: TurnContext<'_>) -> Result<String, PolicyError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let k = ctx.assistant_turns();
        self.turns
            .get(k)
            .or(self.turns.last())
            .cloned()
            .ok_or_else(|| PolicyError::InvalidConfig("replay policy has no turns".into()))
    }
}
