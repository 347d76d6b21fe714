//! Policy clients and the rollout engine that drives them against the
//! visualization tool.

pub mod config;
pub mod http;
pub mod judge;
pub mod message;
pub mod policy;
pub mod rollout;
pub mod scripted;

pub use config::{PolicyConfig, PolicyFile};
pub use http::HttpPolicy;
pub use judge::{judge_trajectory, parse_score, JudgeError, JudgeScore, DEFAULT_RUBRIC};
pub use message::{Message, Part, Role};
pub use policy::{Policy, PolicyError, ReplayPolicy, TurnContext};
pub use rollout::{
    SpectrumSource,
    BatchItem, BatchReport, Engine, GroupOutput, RolloutConfig, RolloutError, RolloutOutput,
    RolloutRequest,
};
pub use scripted::{Comparison, DecisionRule, ScriptedPolicy, ScriptedRule};
