//! Per-task diagnostic criteria and the verification prompt built from them.

use std::collections::BTreeMap;
use std::path::Path;

use super::BenchError;
use crate::spectrum::Task;
use crate::tool::TOOL_NAME;

const BUILTIN: [(Task, &str); 8] = [
    (Task::Cv, include_str!("../../../../criteria/CV.md")),
    (Task::Cs, include_str!("../../../../criteria/CS.md")),
    (Task::Ss, include_str!("../../../../criteria/SS.md")),
    (Task::Mg, include_str!("../../../../criteria/MG.md")),
    (Task::Wd, include_str!("../../../../criteria/WD.md")),
    (Task::O, include_str!("../../../../criteria/O.md")),
    (Task::B, include_str!("../../../../criteria/B.md")),
    (Task::A, include_str!("../../../../criteria/A.md")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct CriteriaRegistry {
    blocks: BTreeMap<Task, String>,
}

impl Default for CriteriaRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl CriteriaRegistry {
    pub fn builtin() -> Self {
        CriteriaRegistry {
            blocks: BUILTIN.iter().map(|(t, s)| (*t, s.trim().to_string())).collect(),
        }
    }

    /// Builtin blocks overridden by any `<TASK>.md` present in `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, BenchError> {
        let mut reg = Self::builtin();
        for task in Task::ALL {
            let path = dir.as_ref().join(format!("{}.md", task.code()));
            match std::fs::read_to_string(&path) {
                Ok(text) if !text.trim().is_empty() => {
                    reg.blocks.insert(task, text.trim().to_string());
                }
                Ok(_) => {
                    return Err(BenchError::InvalidParameter(format!(
                        "criteria file {} is empty",
                        path.display()
                    )))
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(BenchError::Io(format!("{}: {e}", path.display()))),
            }
        }
        Ok(reg)
    }

    pub fn criteria(&self, task: Task) -> &str {
        self.blocks.get(&task).map(String::as_str).unwrap_or("")
    }

    pub fn prompt(&self, task: Task) -> String {
        build_prompt(task, self.criteria(task))
    }
}

/// The verification question given to the agent alongside the first plot.
pub fn build_prompt(task: Task, criteria: &str) -> String {
    format!(
        "You are shown a plot of an optical spectrum (flux against wavelength in \
angstroms). Decide whether this object is a {name} ({code}).\n\
\n\
Diagnostic criteria:\n\
{criteria}\n\
\n\
You may inspect any wavelength interval at higher resolution by calling the \
{tool} tool. Its arguments are lambda_min and lambda_max in angstroms, plus an \
optional short label for the plot title.\n\
\n\
Response rules:\n\
1. Begin every response with your reasoning inside <think></think>. After it, \
write either a single tool call or your final answer, and nothing else.\n\
2. A response may contain at most one tool call, written as \
<tool_call>{{\"name\": \"{tool}\", \"arguments\": {{\"lambda_min\": 6400, \
\"lambda_max\": 6700, \"label\": \"H-alpha\"}}}}</tool_call>. Wait for the \
returned plot before continuing.\n\
3. Give the final answer as <answer>\\boxed{{YES}}</answer> or \
<answer>\\boxed{{NO}}</answer>, in upper case.",
        name = task.full_name(),
        code = task.code(),
        tool = TOOL_NAME,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_task_has_criteria() {
        let reg = CriteriaRegistry::builtin();
        for task in Task::ALL {
            let p = reg.prompt(task);
            assert!(!reg.criteria(task).is_empty());
            assert!(p.contains(reg.criteria(task)));
            assert!(p.contains(task.code()));
            assert!(p.contains(r"<answer>\boxed{YES}</answer>"));
        }
    }

    #[test]
    fn directory_overrides_builtin() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("O.md"), "- custom O criteria\n").unwrap();
        let reg = CriteriaRegistry::from_dir(dir.path()).unwrap();
        assert_eq!(reg.criteria(Task::O), "- custom O criteria");
        assert_eq!(reg.criteria(Task::Cv), CriteriaRegistry::builtin().criteria(Task::Cv));
    }
}
