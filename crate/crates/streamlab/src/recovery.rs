//! Failure handling: recovery planning and the simplified hybrid
//! active/passive replication model.
//!
//! Plan execution (cancel, reallocate, restore, epoch fencing, purge and
//! loss accounting) is driven by engine events; planning itself is pure and
//! oracle-testable.

use crate::graph::RegionPartition;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryStrategy {
    FullRestart,
    RegionFailover,
    SingleTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    Full,
    Partial,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("single-task recovery requires a partial completeness SLO")]
    SingleTaskNeedsPartialGamma,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryPlan {
    pub strategy: RecoveryStrategy,
    /// tasks to restart, ascending
    pub tasks: Vec<usize>,
    /// regions touched, ascending
    pub regions: Vec<usize>,
}

/// Builds the restart set for a failure. SingleTask restarts exactly the
/// failed tasks, RegionFailover their enclosing regions, FullRestart the
/// whole job.
pub fn plan_recovery(
    failed: &[usize],
    strategy: RecoveryStrategy,
    partition: &RegionPartition,
    gamma: Gamma,
) -> Result<RecoveryPlan, PolicyError> {
    if strategy == RecoveryStrategy::SingleTask && gamma == Gamma::Full {
        return Err(PolicyError::SingleTaskNeedsPartialGamma);
    }
    let failed_regions: BTreeSet<usize> =
        failed.iter().map(|&t| partition.task_to_region[t]).collect();
    let tasks: Vec<usize> = match strategy {
        RecoveryStrategy::SingleTask => {
            let mut t: Vec<usize> = failed.to_vec();
            t.sort_unstable();
            t.dedup();
            t
        }
        RecoveryStrategy::RegionFailover => failed_regions
            .iter()
            .flat_map(|&r| partition.regions[r].iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        RecoveryStrategy::FullRestart => (0..partition.task_to_region.len()).collect(),
    };
    let regions = match strategy {
        RecoveryStrategy::FullRestart => (0..partition.num_regions()).collect(),
        _ => failed_regions.into_iter().collect(),
    };
    Ok(RecoveryPlan { strategy, tasks, regions })
}

/// Per-recovery accounting emitted to the recovery log.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    pub fail_ns: u64,
    pub detect_ns: u64,
    pub done_ns: u64,
    pub strategy: RecoveryStrategy,
    pub scope: String,
    pub tasks: Vec<usize>,
    /// detection -> all plan tasks Running
    pub recovery_time_ns: u64,
    /// failure instant -> all plan tasks Running
    pub downtime_ns: u64,
    pub records_dropped: u64,
    pub records_replayed: u64,
}

// ---------------------------------------------------------------------------
// Hybrid replication: active standby promotion model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicationMode {
    Passive,
    ActiveStandby,
}

#[derive(Debug, Clone)]
pub struct StandbyState {
    pub alive: bool,
    /// input offset the standby has processed (outputs gated)
    pub processed_offset: u64,
    /// ns of processing per record while draining lag
    pub service_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SwitchReport {
    /// detection plus lag drain; no state restore phase by construction
    pub switch_latency_ns: u64,
    /// first offset the standby will emit
    pub resume_offset: u64,
    pub lag_records: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StandbyError {
    #[error("standby dead; fall back to passive recovery")]
    StandbyDead,
}

/// Opens the standby's output gate at the failed primary's last emitted
/// offset. Duplicate offsets are impossible: everything below the gate is
/// suppressed.
pub fn promote_standby(
    primary_emitted_offset: u64,
    standby: &StandbyState,
    detection_ns: u64,
) -> Result<SwitchReport, StandbyError> {
    if !standby.alive {
        return Err(StandbyError::StandbyDead);
    }
    let lag = primary_emitted_offset.saturating_sub(standby.processed_offset);
    Ok(SwitchReport {
        switch_latency_ns: detection_ns + lag * standby.service_ns,
        resume_offset: primary_emitted_offset,
        lag_records: lag,
    })
}

/// Mini switchover ledger simulation: primary emits offsets `[0, fail_at)`,
/// the promoted standby emits `[gate, total)`. Returns the combined output
/// offset sequence for dedup checks.
pub fn simulate_switchover(fail_at: u64, gate: u64, total: u64) -> Vec<u64> {
    let mut out: Vec<u64> = (0..fail_at).collect();
    out.extend(gate.max(fail_at).min(total)..total);
    // standby gate at the primary's last emitted offset
    if gate < fail_at {
        // offsets below the gate stay suppressed; nothing extra to emit
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{chain, derive_regions, expand, OpKind};
    use crate::shuffle::ShuffleStrategy;

    fn all_to_all_partition() -> RegionPartition {
        let g = chain(
            vec![("s", OpKind::Source, 4, 1.0), ("k", OpKind::Sink, 4, 1.0)],
            vec![ShuffleStrategy::Rebalance],
        );
        derive_regions(&expand(&g, 2).unwrap())
    }

    fn forward_partition(n: u32) -> RegionPartition {
        let g = chain(
            vec![("s", OpKind::Source, n, 1.0), ("k", OpKind::Sink, n, 1.0)],
            vec![ShuffleStrategy::Forward],
        );
        derive_regions(&expand(&g, 2).unwrap())
    }

    #[test]
    fn region_failover_propagates_over_all_to_all() {
        let part = all_to_all_partition();
        let plan =
            plan_recovery(&[2], RecoveryStrategy::RegionFailover, &part, Gamma::Full).unwrap();
        assert_eq!(plan.tasks.len(), 8);
    }

    #[test]
    fn single_task_restarts_one() {
        let part = all_to_all_partition();
        let plan =
            plan_recovery(&[2], RecoveryStrategy::SingleTask, &part, Gamma::Partial).unwrap();
        assert_eq!(plan.tasks, vec![2]);
    }

    #[test]
    fn single_task_needs_partial_gamma() {
        let part = all_to_all_partition();
        assert_eq!(
            plan_recovery(&[2], RecoveryStrategy::SingleTask, &part, Gamma::Full),
            Err(PolicyError::SingleTaskNeedsPartialGamma)
        );
    }

    #[test]
    fn forward_chain_region_scope() {
        let part = forward_partition(6);
        let plan =
            plan_recovery(&[3], RecoveryStrategy::RegionFailover, &part, Gamma::Full).unwrap();
        let r = part.task_to_region[3];
        assert_eq!(plan.tasks, part.regions[r]);
        assert_eq!(plan.tasks.len(), 2);
    }

    #[test]
    fn scope_monotonicity() {
        let part = forward_partition(5);
        for failed in [vec![0usize], vec![7], vec![2, 8]] {
            let single =
                plan_recovery(&failed, RecoveryStrategy::SingleTask, &part, Gamma::Partial)
                    .unwrap();
            let region =
                plan_recovery(&failed, RecoveryStrategy::RegionFailover, &part, Gamma::Full)
                    .unwrap();
            let full =
                plan_recovery(&failed, RecoveryStrategy::FullRestart, &part, Gamma::Full).unwrap();
            assert!(single.tasks.len() <= region.tasks.len());
            assert!(region.tasks.len() <= full.tasks.len());
            assert_eq!(full.tasks.len(), 10);
        }
    }

    #[test]
    fn standby_at_same_offset_switches_on_detection_only() {
        let sb = StandbyState { alive: true, processed_offset: 100, service_ns: 1_000_000 };
        let rep = promote_standby(100, &sb, 500_000_000).unwrap();
        assert_eq!(rep.switch_latency_ns, 500_000_000);
        assert_eq!(rep.lag_records, 0);
    }

    #[test]
    fn standby_lag_drain_arithmetic() {
        let sb = StandbyState { alive: true, processed_offset: 40, service_ns: 2_000_000 };
        let rep = promote_standby(100, &sb, 0).unwrap();
        assert_eq!(rep.lag_records, 60);
        assert_eq!(rep.switch_latency_ns, 120_000_000);
    }

    #[test]
    fn dead_standby_falls_back() {
        let sb = StandbyState { alive: false, processed_offset: 0, service_ns: 1 };
        assert_eq!(promote_standby(10, &sb, 0), Err(StandbyError::StandbyDead));
    }

    #[test]
    fn switchover_produces_no_duplicate_offsets() {
        for (fail_at, gate, total) in [(50u64, 50u64, 100u64), (70, 70, 90), (10, 10, 10)] {
            let out = simulate_switchover(fail_at, gate, total);
            let mut dedup = out.clone();
            dedup.sort_unstable();
            dedup.dedup();
            assert_eq!(out.len(), dedup.len());
            assert_eq!(out.len() as u64, total);
        }
    }
}
