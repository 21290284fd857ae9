//! Checkpoint coordination state: attempts, snapshot store, registry, and
//! region merging.
//!
//! The barrier protocol itself (injection at sources, alignment at
//! multi-input tasks) runs inside the engine event loop; this module holds
//! the data model and the pure finalization/merge rules so they can be
//! tested against oracles directly.

use crate::graph::RegionPartition;
use rand::Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointMode {
    Global,
    Region,
}

/// Keyed operator state carried by snapshots. Deterministic ordering
/// (BTreeMap) keeps snapshot clones and report serialization reproducible.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum OpState {
    #[default]
    None,
    /// Sink ledgers and plain per-key counters.
    Counts(BTreeMap<u64, u64>),
    /// Tumbling-window per-key counts plus the open window start.
    Window { counts: BTreeMap<u64, u64>, window_start: u64 },
    /// Join fragments waiting for their peer: key -> (side bitmask, arrival ns).
    Join { pending: BTreeMap<u64, (u8, u64)> },
}

impl OpState {
    pub fn entries(&self) -> usize {
        match self {
            OpState::None => 0,
            OpState::Counts(m) => m.len(),
            OpState::Window { counts, .. } => counts.len(),
            OpState::Join { pending } => pending.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotData {
    pub state: OpState,
    pub src_offset: u64,
    pub size_bytes: u64,
}

impl SnapshotData {
    pub fn new(state: OpState, src_offset: u64) -> SnapshotData {
        let size_bytes = 64 + 16 * state.entries() as u64;
        SnapshotData { state, src_offset, size_bytes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailCause {
    Timeout,
    TaskFailed,
    StoreUnavailable,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskCkptStatus {
    Pending,
    Acked { size_bytes: u64 },
    Failed(FailCause),
}

/// One in-flight checkpoint attempt. Finalized exactly once.
#[derive(Debug, Clone)]
pub struct CheckpointAttempt {
    pub id: u64,
    pub mode: CheckpointMode,
    pub trigger_ns: u64,
    pub deadline_ns: u64,
    pub statuses: Vec<TaskCkptStatus>,
    pub pending: usize,
}

impl CheckpointAttempt {
    pub fn new(id: u64, mode: CheckpointMode, trigger_ns: u64, deadline_ns: u64, tasks: usize) -> Self {
        CheckpointAttempt {
            id,
            mode,
            trigger_ns,
            deadline_ns,
            statuses: vec![TaskCkptStatus::Pending; tasks],
            pending: tasks,
        }
    }

    pub fn resolve(&mut self, task: usize, status: TaskCkptStatus) {
        if matches!(self.statuses[task], TaskCkptStatus::Pending) {
            self.statuses[task] = status;
            self.pending -= 1;
        }
    }

    pub fn timeout_pending(&mut self) {
        for s in &mut self.statuses {
            if matches!(s, TaskCkptStatus::Pending) {
                *s = TaskCkptStatus::Failed(FailCause::Timeout);
            }
        }
        self.pending = 0;
    }
}

/// Restorable global record: per region, the checkpoint id whose snapshots
/// cover it. Region entries are merged from possibly different attempts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GlobalCheckpointRecord {
    pub record_id: u64,
    pub per_region: Vec<u64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MergeError {
    #[error("region {0} has no successful checkpoint yet")]
    UnrestorableRegion(usize),
}

/// Latest-successful registry. Ids are monotone per slot; `update` ignores
/// regressions by construction (attempt ids strictly increase).
#[derive(Debug, Clone, Default)]
pub struct Registry {
    pub global_latest: Option<u64>,
    pub region_latest: Vec<Option<u64>>,
    pub merged: Option<GlobalCheckpointRecord>,
    next_record_id: u64,
}

impl Registry {
    pub fn new(num_regions: usize) -> Registry {
        Registry {
            global_latest: None,
            region_latest: vec![None; num_regions],
            merged: None,
            next_record_id: 0,
        }
    }
}

/// Merges the latest successful checkpoint per region into one restorable
/// record; fails while any region has never succeeded.
pub fn merge_region_checkpoints(
    region_success: &[bool],
    attempt_id: u64,
    registry: &mut Registry,
) -> Result<GlobalCheckpointRecord, MergeError> {
    for (r, &ok) in region_success.iter().enumerate() {
        if ok {
            registry.region_latest[r] = Some(attempt_id);
        }
    }
    let mut per_region = Vec::with_capacity(region_success.len());
    for (r, latest) in registry.region_latest.iter().enumerate() {
        match latest {
            Some(id) => per_region.push(*id),
            None => return Err(MergeError::UnrestorableRegion(r)),
        }
    }
    let record = GlobalCheckpointRecord { record_id: registry.next_record_id, per_region };
    registry.next_record_id += 1;
    registry.merged = Some(record.clone());
    Ok(record)
}

/// Outcome of finalizing one attempt.
#[derive(Debug, Clone, Serialize)]
pub struct AttemptOutcome {
    pub id: u64,
    pub mode: CheckpointMode,
    pub success: bool,
    pub region_success: Vec<bool>,
    pub merged_ok: Option<bool>,
    pub duration_ns: u64,
}

/// Global mode: success iff every task acked; the registry is untouched on
/// failure. Region mode: each region succeeds independently and a merged
/// record is produced whenever every region has some success on record.
pub fn finalize_attempt(
    attempt: &mut CheckpointAttempt,
    partition: &RegionPartition,
    registry: &mut Registry,
    now_ns: u64,
) -> AttemptOutcome {
    attempt.timeout_pending();
    let nregions = partition.num_regions();
    let mut region_success = vec![true; nregions];
    let mut all_acked = true;
    for (t, s) in attempt.statuses.iter().enumerate() {
        if !matches!(s, TaskCkptStatus::Acked { .. }) {
            all_acked = false;
            region_success[partition.task_to_region[t]] = false;
        }
    }
    let (success, merged_ok) = match attempt.mode {
        CheckpointMode::Global => {
            if all_acked {
                registry.global_latest = Some(attempt.id);
            }
            (all_acked, None)
        }
        CheckpointMode::Region => {
            let merged = merge_region_checkpoints(&region_success, attempt.id, registry);
            (all_acked, Some(merged.is_ok()))
        }
    };
    AttemptOutcome {
        id: attempt.id,
        mode: attempt.mode,
        success,
        region_success,
        merged_ok,
        duration_ns: now_ns.saturating_sub(attempt.trigger_ns),
    }
}

/// Probability a global attempt sees zero task failures: (1-p)^n.
pub fn predict_global_success(p_task_fail: f64, n_tasks: u64) -> f64 {
    assert!((0.0..=1.0).contains(&p_task_fail));
    assert!(n_tasks >= 1);
    (1.0 - p_task_fail).powf(n_tasks as f64)
}

// ---------------------------------------------------------------------------
// Snapshot store with a latency/fault model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct StoreConfig {
    pub base_put_ns: u64,
    pub ns_per_byte: u64,
    pub base_get_ns: u64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig { base_put_ns: 20_000_000, ns_per_byte: 100, base_get_ns: 10_000_000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SlowFault {
    pub p_slow: f64,
    pub added_delay_ns: u64,
}

/// In-memory snapshot store. A completed put is durable for the rest of the
/// run; gets succeed while the store is available.
#[derive(Debug)]
pub struct SnapshotStore {
    pub cfg: StoreConfig,
    pub available: bool,
    pub slow: Option<SlowFault>,
    data: HashMap<(u64, usize), SnapshotData>,
    pub puts: u64,
    pub slow_puts: u64,
}

impl SnapshotStore {
    pub fn new(cfg: StoreConfig) -> SnapshotStore {
        SnapshotStore { cfg, available: true, slow: None, data: HashMap::new(), puts: 0, slow_puts: 0 }
    }

    /// Latency for an upload of `size` bytes, or None when unavailable.
    /// Consumes one Bernoulli draw from the store RNG stream when a slow
    /// fault is armed.
    pub fn put_latency<R: Rng>(&mut self, size: u64, rng: &mut R) -> Option<u64> {
        if !self.available {
            return None;
        }
        self.puts += 1;
        let mut lat = self.cfg.base_put_ns + size * self.cfg.ns_per_byte;
        if let Some(f) = self.slow {
            if rng.gen_bool(f.p_slow) {
                lat += f.added_delay_ns;
                self.slow_puts += 1;
            }
        }
        Some(lat)
    }

    pub fn commit(&mut self, ckpt: u64, task: usize, data: SnapshotData) {
        self.data.insert((ckpt, task), data);
    }

    pub fn get(&self, ckpt: u64, task: usize) -> Option<&SnapshotData> {
        if !self.available {
            return None;
        }
        self.data.get(&(ckpt, task))
    }

    /// Drops snapshots from attempts no longer referenced by the registry.
    pub fn gc(&mut self, registry: &Registry, open_attempt: Option<u64>) {
        let mut keep: Vec<u64> = Vec::new();
        if let Some(id) = registry.global_latest {
            keep.push(id);
        }
        for id in registry.region_latest.iter().flatten() {
            keep.push(*id);
        }
        if let Some(id) = open_attempt {
            keep.push(id);
        }
        self.data.retain(|(ckpt, _), _| keep.contains(ckpt));
    }

    pub fn stored_snapshots(&self) -> usize {
        self.data.len()
    }
}

// ---------------------------------------------------------------------------
// Lazy state restore model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestoreMode {
    Eager,
    Lazy,
}

/// Virtual time until a restored task may resume processing. Eager restore
/// fetches every chunk first; lazy restore needs only the manifest (zero
/// state resumes immediately either way).
pub fn restore_resume_ns(mode: RestoreMode, chunks: u32, per_chunk_ns: u64, manifest_ns: u64) -> u64 {
    if chunks == 0 {
        return 0;
    }
    match mode {
        RestoreMode::Eager => chunks as u64 * per_chunk_ns,
        RestoreMode::Lazy => manifest_ns,
    }
}

/// Chunk index of a key under the fixed key-range partitioning.
pub fn chunk_of(key: u64, chunks: u32, seed: u64) -> u32 {
    if chunks == 0 {
        0
    } else {
        (crate::util::stable_hash(key, seed ^ 0xc4c4) % chunks as u64) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{chain, derive_regions, expand, OpKind};
    use crate::shuffle::ShuffleStrategy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_region_partition() -> RegionPartition {
        let g = chain(
            vec![("s", OpKind::Source, 2, 1.0), ("k", OpKind::Sink, 2, 1.0)],
            vec![ShuffleStrategy::Forward],
        );
        derive_regions(&expand(&g, 2).unwrap())
    }

    #[test]
    fn global_fails_on_single_task() {
        let part = two_region_partition();
        let mut reg = Registry::new(2);
        let mut a = CheckpointAttempt::new(1, CheckpointMode::Global, 0, 1000, 4);
        for t in 0..3 {
            a.resolve(t, TaskCkptStatus::Acked { size_bytes: 10 });
        }
        a.resolve(3, TaskCkptStatus::Failed(FailCause::Timeout));
        let out = finalize_attempt(&mut a, &part, &mut reg, 1000);
        assert!(!out.success);
        assert_eq!(reg.global_latest, None);
    }

    #[test]
    fn region_merges_previous_latest() {
        let part = two_region_partition();
        let mut reg = Registry::new(2);
        // attempt 5: both regions succeed
        let mut a = CheckpointAttempt::new(5, CheckpointMode::Region, 0, 1000, 4);
        for t in 0..4 {
            a.resolve(t, TaskCkptStatus::Acked { size_bytes: 1 });
        }
        let out = finalize_attempt(&mut a, &part, &mut reg, 500);
        assert_eq!(out.merged_ok, Some(true));
        // attempt 8: region 0 fails, region 1 succeeds
        let mut b = CheckpointAttempt::new(8, CheckpointMode::Region, 0, 1000, 4);
        // tasks 0 and 2 are region 0 (source/sink pair), 1 and 3 region 1
        let r0: Vec<usize> = part.regions[0].clone();
        for t in 0..4 {
            if r0.contains(&t) {
                b.resolve(t, TaskCkptStatus::Failed(FailCause::Timeout));
            } else {
                b.resolve(t, TaskCkptStatus::Acked { size_bytes: 1 });
            }
        }
        finalize_attempt(&mut b, &part, &mut reg, 900);
        let merged = reg.merged.clone().unwrap();
        assert_eq!(merged.per_region[0], 5);
        assert_eq!(merged.per_region[1], 8);
    }

    #[test]
    fn first_attempt_partial_failure_is_unrestorable() {
        let mut reg = Registry::new(2);
        let err = merge_region_checkpoints(&[false, true], 1, &mut reg).unwrap_err();
        assert_eq!(err, MergeError::UnrestorableRegion(0));
        // the successful region is still recorded
        assert_eq!(reg.region_latest[1], Some(1));
    }

    #[test]
    fn registry_monotone() {
        let mut reg = Registry::new(1);
        merge_region_checkpoints(&[true], 3, &mut reg).unwrap();
        merge_region_checkpoints(&[false], 4, &mut reg).unwrap();
        assert_eq!(reg.region_latest[0], Some(3));
        merge_region_checkpoints(&[true], 5, &mut reg).unwrap();
        assert_eq!(reg.region_latest[0], Some(5));
    }

    #[test]
    fn predict_matches_closed_form() {
        let p = predict_global_success(1e-4, 10_000);
        assert!((p - 0.3679).abs() < 5e-4, "got {p}");
        assert_eq!(predict_global_success(0.0, 5), 1.0);
        assert_eq!(predict_global_success(1.0, 5), 0.0);
    }

    #[test]
    fn slow_upload_rate_monte_carlo() {
        // 5% slow probability with delay beyond the deadline slack: per-task
        // timeout rate over many attempts approaches 0.05.
        let mut store = SnapshotStore::new(StoreConfig::default());
        store.slow = Some(SlowFault { p_slow: 0.05, added_delay_ns: 60_000_000_000 });
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let deadline = 1_000_000_000u64;
        let mut timeouts = 0u64;
        let n = 10_000;
        for _ in 0..n {
            let lat = store.put_latency(100, &mut rng).unwrap();
            if lat > deadline {
                timeouts += 1;
            }
        }
        let rate = timeouts as f64 / n as f64;
        assert!((rate - 0.05).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn restore_latency_model() {
        let ms = 1_000_000u64;
        assert_eq!(restore_resume_ns(RestoreMode::Eager, 100, 10 * ms, 10 * ms), 1000 * ms);
        assert_eq!(restore_resume_ns(RestoreMode::Lazy, 100, 10 * ms, 10 * ms), 10 * ms);
        assert_eq!(restore_resume_ns(RestoreMode::Lazy, 0, 10 * ms, 10 * ms), 0);
        assert_eq!(restore_resume_ns(RestoreMode::Eager, 0, 10 * ms, 10 * ms), 0);
    }

    #[test]
    fn merged_freshness_matches_geometric_model() {
        // With per-region success probability s per attempt, the age of a
        // region's entry in the merged record is geometric. Compare the
        // Monte Carlo mean lag with the closed form (1-s)/s.
        let s = 0.6f64;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut reg = Registry::new(4);
        let attempts = 4000u64;
        let mut lag_sum = 0u64;
        let mut lag_n = 0u64;
        for id in 1..=attempts {
            let outcome: Vec<bool> = (0..4).map(|_| rng.gen_bool(s)).collect();
            if let Ok(rec) = merge_region_checkpoints(&outcome, id, &mut reg) {
                if id > 50 {
                    for r in 0..4 {
                        lag_sum += id - rec.per_region[r];
                        lag_n += 1;
                    }
                }
            }
        }
        let mean_lag = lag_sum as f64 / lag_n as f64;
        let expect = (1.0 - s) / s;
        assert!((mean_lag - expect).abs() < 0.1, "mean lag {mean_lag} expect {expect}");
    }
}
