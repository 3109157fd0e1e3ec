//! JSONL run traces: a header, one record per step (or per call for baselines), and a
//! result. Replaying the applied writes of a trace rebuilds the final workspace.

use bigmas_tasks::{TaskInstance, Verdict};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::designer::DesignOutcome;
use crate::executor::{ExecutionResult, FallbackOutcome, StepRecord, Termination};
use crate::gateway::{CallRecord, UsageLedger};
use crate::workspace::{Workspace, WorkspaceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Header {
        method: String,
        instance: TaskInstance,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        design: Option<DesignOutcome>,
        config: Value,
    },
    Step(StepRecord),
    Call(CallRecord),
    Result {
        answer: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        termination: Option<Termination>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        verdict: Option<Verdict>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fallback: Option<FallbackOutcome>,
        ledger: UsageLedger,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        final_workspace: Option<String>,
    },
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("trace has no header record")]
    MissingHeader,
    #[error("trace header has no design to replay")]
    MissingDesign,
    #[error("replay failed: {0}")]
    Workspace(#[from] WorkspaceError),
}

/// Records for a graph run.
pub fn bigmas_trace(
    instance: &TaskInstance,
    result: &ExecutionResult,
    config: Value,
    verdict: Option<Verdict>,
) -> Vec<TraceRecord> {
    let mut out = vec![TraceRecord::Header {
        method: "bigmas".into(),
        instance: instance.clone(),
        design: Some(result.design.clone()),
        config,
    }];
    out.extend(result.steps.iter().cloned().map(TraceRecord::Step));
    out.push(TraceRecord::Result {
        answer: result.answer.clone(),
        termination: Some(result.termination),
        verdict,
        fallback: result.fallback.clone(),
        ledger: result.ledger.clone(),
        final_workspace: Some(result.final_workspace.clone()),
    });
    out
}

pub fn to_jsonl(records: &[TraceRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("trace record serializes") + "\n")
        .collect()
}

pub fn from_jsonl(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| TraceError::Json {
                line: i + 1,
                source,
            })
        })
        .collect()
}

/// Re-applies the applied writes, step bookkeeping and fallback answer to a fresh
/// workspace and returns its serialization.
pub fn replay_steps(
    instance: &TaskInstance,
    design: &DesignOutcome,
    steps: &[StepRecord],
    fallback: Option<&FallbackOutcome>,
) -> Result<String, WorkspaceError> {
    let mut ws = Workspace::new(instance, &design.output.work_schema)?;
    for step in steps {
        if let Some(instr) = &step.applied {
            ws.apply_write(instr)?;
        }
        let next = step.next.as_deref().zip(step.next_mode.as_deref());
        ws.complete_step(&step.node, next, step.corrections);
    }
    if let Some(fb) = fallback {
        ws.set_answer(fb.answer.clone())?;
    }
    Ok(ws.serialize())
}

pub fn replay(records: &[TraceRecord]) -> Result<String, TraceError> {
    let Some(TraceRecord::Header {
        instance, design, ..
    }) = records.first()
    else {
        return Err(TraceError::MissingHeader);
    };
    let design = design.as_ref().ok_or(TraceError::MissingDesign)?;
    let steps: Vec<StepRecord> = records
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Step(s) => Some(s.clone()),
            _ => None,
        })
        .collect();
    let fallback = records.iter().find_map(|r| match r {
        TraceRecord::Result { fallback, .. } => fallback.clone(),
        _ => None,
    });
    Ok(replay_steps(instance, design, &steps, fallback.as_ref())?)
}

/// Calls recorded anywhere in a trace.
pub fn trace_calls(records: &[TraceRecord]) -> Vec<&CallRecord> {
    let mut out = Vec::new();
    for r in records {
        match r {
            TraceRecord::Header {
                design: Some(d), ..
            } => out.extend(d.calls.iter()),
            TraceRecord::Step(s) => {
                out.extend(s.attempts.iter().map(|a| &a.call));
                out.extend(s.routing.iter().filter_map(|d| d.call.as_ref()));
            }
            TraceRecord::Call(c) => out.push(c),
            _ => {}
        }
    }
    out
}
