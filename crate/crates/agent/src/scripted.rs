//! Deterministic expert rules: probe fixed ranges, then threshold a flux ratio.

use std::collections::BTreeMap;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use specvi_core::tool::ToolCall;
use specvi_core::{slice, Spectrum, Task, WavelengthRange};

use crate::policy::{Policy, PolicyError, TurnContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    Greater,
    Less,
}

/// YES when `mean(numerator) / mean(denominator)` compares to `factor` as stated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub numerator: WavelengthRange,
    pub denominator: WavelengthRange,
    pub factor: f64,
    pub comparison: Comparison,
}

impl DecisionRule {
    /// Flux ratio the rule thresholds, or `None` when a window is empty or
    /// the denominator mean is zero.
    pub fn ratio(&self, spec: &Spectrum) -> Option<f64> {
        let num = mean_flux(spec, &self.numerator)?;
        let den = mean_flux(spec, &self.denominator)?;
        (den != 0.0).then(|| num / den)
    }

    pub fn decide(&self, spec: &Spectrum) -> bool {
        match self.ratio(spec) {
            Some(r) => match self.comparison {
                Comparison::Greater => r > self.factor,
                Comparison::Less => r < self.factor,
            },
            None => false,
        }
    }
}

pub fn mean_flux(spec: &Spectrum, range: &WavelengthRange) -> Option<f64> {
    let part = slice(spec, range).ok()?;
    Some(part.flux().iter().sum::<f64>() / part.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedRule {
    pub task: Task,
    pub probes: Vec<ToolCall>,
    pub decision: DecisionRule,
}

impl ScriptedRule {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.probes.is_empty() {
            return Err(PolicyError::InvalidConfig(format!(
                "rule for {} needs at least one probe",
                self.task
            )));
        }
        if !self.decision.factor.is_finite() {
            return Err(PolicyError::InvalidConfig("decision factor must be finite".into()));
        }
        Ok(())
    }

    /// True when the rule would request more views than `cap` allows.
    pub fn exceeds_cap(&self, cap: usize) -> bool {
        self.probes.len() > cap
    }

    /// The turn emitted after `done` earlier turns.
    pub fn turn(&self, done: usize, spec: &Spectrum) -> String {
        if let Some(probe) = self.probes.get(done) {
            let what = probe.label().unwrap_or("this region");
            return format!(
                "<think>Probe {} of {}: inspect {} between {} and {} A.</think><tool_call>{}</tool_call>",
                done + 1,
                self.probes.len(),
                what,
                probe.range().min(),
                probe.range().max(),
                probe.to_request_json()
            );
        }
        let d = &self.decision;
        let verdict = d.decide(spec);
        let reasoning = match d.ratio(spec) {
            Some(r) => format!(
                "Mean flux ratio {} over {} is {:.6}; the rule needs it {} {}.",
                d.numerator,
                d.denominator,
                r,
                match d.comparison {
                    Comparison::Greater => "above",
                    Comparison::Less => "below",
                },
                d.factor
            ),
            None => "The diagnostic windows hold no usable flux.".to_string(),
        };
        format!(
            "<think>{reasoning}</think><answer>\\boxed{{{}}}</answer>",
            if verdict { "YES" } else { "NO" }
        )
    }
}

/// Dispatches to the rule registered for the item's task.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPolicy {
    rules: BTreeMap<Task, ScriptedRule>,
}

impl ScriptedPolicy {
    pub fn new(rules: impl IntoIterator<Item = ScriptedRule>) -> Self {
        ScriptedPolicy { rules: rules.into_iter().map(|r| (r.task, r)).collect() }
    }

    pub fn rule(&self, task: Task) -> Option<&ScriptedRule> {
        self.rules.get(&task)
    }
}

#[async_trait]
impl Policy for ScriptedPolicy {
    async fn next_turn(&self, ctx: TurnContext<'_>) -> Result<String, PolicyError> {
        let rule = match ctx.task {
            Some(task) => self.rules.get(&task),
            None if self.rules.len() == 1 => self.rules.values().next(),
            None => None,
        }
        .ok_or_else(|| {
            PolicyError::InvalidConfig(format!("no scripted rule for task {:?}", ctx.task))
        })?;
        Ok(rule.turn(ctx.assistant_turns(), ctx.spectrum))
    }
}
