//! Scripted fault injection: plan schema, validation, and time parsing.
//!
//! A plan is a JSON array of fault specs. Times and durations accept
//! "500ms" / "900s" / "15m" suffixes. Arming a plan schedules one injection
//! event per spec inside the engine; random target selectors draw from a
//! dedicated RNG stream so adding faults never perturbs workload randomness.

use crate::util::VDuration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSel {
    Random(RandomTag),
    Tm { tm: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomTag {
    Random,
}

pub const RANDOM: TargetSel = TargetSel::Random(RandomTag::Random);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreSel {
    /// snapshot store (durable state)
    Snapshot,
    /// primary coordination store (leader metadata)
    Primary,
    /// fallback coordination store
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultKind {
    KillTm {
        target: TargetSel,
    },
    KillJm,
    SlowStore {
        p_slow: f64,
        added_delay: VDuration,
    },
    NetDelay {
        from: String,
        to: String,
        added: VDuration,
    },
    CpuSlow {
        target: TargetSel,
        factor: f64,
    },
    StoreDown {
        store: StoreSel,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub at: VDuration,
    #[serde(flatten)]
    pub kind: FaultKind,
    /// 0 = instantaneous / permanent (kills); otherwise the fault reverts
    /// exactly at `at + duration`.
    #[serde(default)]
    pub duration: VDuration,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultPlan {
    pub specs: Vec<FaultSpec>,
    pub seed: u64,
}

#[derive(Debug, Error)]
#[error("fault plan error at spec {index}: {msg}")]
pub struct PlanError {
    pub index: usize,
    pub msg: String,
}

/// Parses and validates a plan document; the result is time-sorted.
pub fn load_plan(document: &str, seed: u64) -> Result<FaultPlan, PlanError> {
    let raw: Vec<serde_json::Value> = serde_json::from_str(document)
        .map_err(|e| PlanError { index: 0, msg: format!("not a JSON array of specs: {e}") })?;
    let mut specs = Vec::with_capacity(raw.len());
    for (index, v) in raw.into_iter().enumerate() {
        let spec: FaultSpec = serde_json::from_value(v)
            .map_err(|e| PlanError { index, msg: e.to_string() })?;
        validate_spec(&spec).map_err(|msg| PlanError { index, msg })?;
        specs.push(spec);
    }
    specs.sort_by_key(|s| s.at);
    Ok(FaultPlan { specs, seed })
}

fn validate_spec(spec: &FaultSpec) -> Result<(), String> {
    match &spec.kind {
        FaultKind::SlowStore { p_slow, .. } => {
            if !(0.0..=1.0).contains(p_slow) {
                return Err(format!("p_slow {p_slow} outside [0,1]"));
            }
        }
        FaultKind::CpuSlow { factor, .. } => {
            if *factor <= 0.0 {
                return Err(format!("cpu factor {factor} must be > 0"));
            }
        }
        _ => {}
    }
    Ok(())
}

impl FaultPlan {
    pub fn single(spec: FaultSpec, seed: u64) -> FaultPlan {
        FaultPlan { specs: vec![spec], seed }
    }
}
