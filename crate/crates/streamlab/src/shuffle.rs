//! Partitioning strategies: one output-candidate choice per record.
//!
//! Static strategies (forward, keyhash, rebalance, rescale, group-rescale)
//! depend only on counters and keys. Adaptive strategies consult runtime
//! signals: backlog-aware reads consumer queue lengths observed through
//! credit accounting, weakhash spreads a hot key over a bounded candidate
//! set picked by salted hashes.

use crate::util::{stable_hash, stable_hash2};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dispatch {
    LeastLoaded,
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShuffleStrategy {
    Forward,
    KeyHash,
    Rebalance,
    Rescale,
    GroupRescale { groups: u32 },
    BacklogAware { threshold: u32 },
    WeakHash { k: u32, dispatch: Dispatch },
}

impl ShuffleStrategy {
    /// All-to-all strategies connect every producer to every consumer;
    /// the rest restrict connectivity.
    pub fn all_to_all(&self) -> bool {
        matches!(
            self,
            ShuffleStrategy::KeyHash
                | ShuffleStrategy::Rebalance
                | ShuffleStrategy::BacklogAware { .. }
                | ShuffleStrategy::WeakHash { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            ShuffleStrategy::Forward => "forward",
            ShuffleStrategy::KeyHash => "keyhash",
            ShuffleStrategy::Rebalance => "rebalance",
            ShuffleStrategy::Rescale => "rescale",
            ShuffleStrategy::GroupRescale { .. } => "group_rescale",
            ShuffleStrategy::BacklogAware { .. } => "backlog_aware",
            ShuffleStrategy::WeakHash { .. } => "weakhash",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("forward requires equal parallelism, got up={up} down={down}")]
    ForwardMismatch { up: u32, down: u32 },
    #[error("keyhash/weakhash routing requires a key")]
    MissingKey,
    #[error("empty candidate set")]
    NoCandidates,
}

/// Mutable per-(producer, out-edge) routing state. Counters live with the
/// producer task; routing itself is a pure function of this state plus the
/// explicit context.
#[derive(Debug, Default, Clone)]
pub struct RouteState {
    pub counter: u64,
    pub per_key: HashMap<u64, u64>,
}

/// Explicit routing context. `candidates` is the number of channels this
/// producer may pick from (the full downstream parallelism for all-to-all
/// strategies, the restricted range for rescale/group-rescale).
pub struct RouteCtx<'a> {
    pub producer_sub: u32,
    pub up: u32,
    pub down: u32,
    pub candidates: usize,
    /// Consumer-side queue length per candidate.
    pub backlogs: &'a [u32],
    /// EWMA busy fraction per candidate.
    pub loads: &'a [f64],
    pub seed: u64,
}

/// Routes one record, returning an index into the candidate list.
pub fn route(
    strategy: &ShuffleStrategy,
    state: &mut RouteState,
    ctx: &RouteCtx<'_>,
    key: Option<u64>,
) -> Result<usize, ConfigError> {
    if ctx.candidates == 0 {
        return Err(ConfigError::NoCandidates);
    }
    match strategy {
        ShuffleStrategy::Forward => {
            if ctx.up != ctx.down {
                return Err(ConfigError::ForwardMismatch {
                    up: ctx.up,
                    down: ctx.down,
                });
            }
            Ok(0)
        }
        ShuffleStrategy::KeyHash => {
            let key = key.ok_or(ConfigError::MissingKey)?;
            Ok((stable_hash(key, ctx.seed) % ctx.candidates as u64) as usize)
        }
        ShuffleStrategy::Rebalance
        | ShuffleStrategy::Rescale
        | ShuffleStrategy::GroupRescale { .. } => {
            let i = (state.counter % ctx.candidates as u64) as usize;
            state.counter += 1;
            Ok(i)
        }
        ShuffleStrategy::BacklogAware { threshold } => {
            Ok(route_backlog_aware(state, ctx.backlogs, *threshold))
        }
        ShuffleStrategy::WeakHash { k, dispatch } => {
            let key = key.ok_or(ConfigError::MissingKey)?;
            Ok(route_weakhash(state, ctx, key, *k, *dispatch))
        }
    }
}

/// Advances the round-robin pointer, skipping candidates whose backlog has
/// reached the threshold. If every candidate is congested, falls back to the
/// minimum-backlog candidate (ties to the lowest index) so pressure is
/// preserved without deadlocking.
pub fn route_backlog_aware(state: &mut RouteState, backlogs: &[u32], threshold: u32) -> usize {
    let n = backlogs.len();
    for j in 0..n {
        let i = ((state.counter + j as u64) % n as u64) as usize;
        if backlogs[i] < threshold {
            state.counter = (i + 1) as u64;
            return i;
        }
    }
    let mut best = 0;
    for i in 1..n {
        if backlogs[i] < backlogs[best] {
            best = i;
        }
    }
    state.counter = (best + 1) as u64;
    best
}

/// Candidate set for a key: k salted hashes over the downstream tasks,
/// deduplicated. Depends only on (key, k, n, seed).
pub fn weakhash_candidates(key: u64, k: u32, n: usize, seed: u64) -> Vec<usize> {
    let mut set = Vec::with_capacity(k as usize);
    for salt in 0..k as u64 {
        let c = (stable_hash2(key, salt, seed) % n as u64) as usize;
        if !set.contains(&c) {
            set.push(c);
        }
    }
    set
}

fn route_weakhash(
    state: &mut RouteState,
    ctx: &RouteCtx<'_>,
    key: u64,
    k: u32,
    dispatch: Dispatch,
) -> usize {
    let set = weakhash_candidates(key, k, ctx.candidates, ctx.seed);
    match dispatch {
        Dispatch::LeastLoaded => {
            let mut best = set[0];
            for &c in &set[1..] {
                if ctx.loads[c] < ctx.loads[best] || (ctx.loads[c] == ctx.loads[best] && c < best)
                {
                    best = c;
                }
            }
            best
        }
        Dispatch::RoundRobin => {
            let ctr = state.per_key.entry(key).or_insert(0);
            let i = set[(*ctr % set.len() as u64) as usize];
            *ctr += 1;
            i
        }
    }
}

/// Contiguous downstream range for a rescale producer. Sizes are apportioned
/// deterministically (they differ by at most one); when down < up several
/// producers share one consumer.
pub fn rescale_range(producer: u32, up: u32, down: u32) -> Vec<usize> {
    let start = (producer as u64 * down as u64 / up as u64) as usize;
    let end = ((producer as u64 + 1) * down as u64 / up as u64) as usize;
    if end > start {
        (start..end).collect()
    } else {
        vec![start]
    }
}

/// Group index of a subtask under group-rescale: contiguous index ranges of
/// equal size, remainder folded into the last group.
pub fn group_of(sub: u32, parallelism: u32, groups: u32) -> u32 {
    let size = parallelism / groups;
    if size == 0 {
        return groups - 1;
    }
    (sub / size).min(groups - 1)
}

/// Downstream members of a group-rescale producer's group.
pub fn group_members(producer: u32, up: u32, down: u32, groups: u32) -> Vec<usize> {
    let g = group_of(producer, up, groups);
    (0..down)
        .filter(|&c| group_of(c, down, groups) == g)
        .map(|c| c as usize)
        .collect()
}
