//! Coordination-plane models: job startup phases with analytic cost models,
//! batched deployment, slow-machine mitigation, in-place updates, leader
//! resolution with a fallback store, and idempotent retried submission.
//!
//! These are closed-form / sampled models rather than engine-event driven:
//! each phase produces a duration, and the interesting behavior (order
//! statistics of machine startup, mitigation racing, retry dedup) is exact
//! and unit-testable.

use crate::util::NS_PER_SEC;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

// ---------------------------------------------------------------------------
// Cost models
// ---------------------------------------------------------------------------

/// Linear costs for the synchronous coordination work.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostModel {
    /// graph parse/expand cost per task
    pub parse_ns_per_task: u64,
    /// fixed cost per deployment RPC round-trip
    pub rpc_base_ns: u64,
    /// marshalling/apply cost per task deployed
    pub rpc_per_task_ns: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        // calibrated so 1024 tasks deployed one RPC per task cost ~9.45 s
        CostModel { parse_ns_per_task: 307_600, rpc_base_ns: 9_000_000, rpc_per_task_ns: 225_000 }
    }
}

impl CostModel {
    pub fn parse_ns(&self, tasks: u64) -> u64 {
        self.parse_ns_per_task * tasks
    }

    pub fn deploy_ns(&self, rpc_count: u64, tasks: u64) -> u64 {
        self.rpc_base_ns * rpc_count + self.rpc_per_task_ns * tasks
    }
}

/// Machine startup latency: lognormal, parameterized by its median and tail.
#[derive(Debug, Clone, Copy)]
pub struct AllocModel {
    pub p50_ns: u64,
    pub sigma: f64,
}

impl AllocModel {
    pub fn from_p50_p99(p50_ns: u64, p99_ns: u64) -> AllocModel {
        // p99/p50 = exp(z99 * sigma) with z99 = 2.3263
        let sigma = (p99_ns as f64 / p50_ns as f64).ln() / 2.326_348;
        AllocModel { p50_ns, sigma }
    }

    /// Defaults matching a slow container-provisioning environment:
    /// median 30 s, p99 157.5 s.
    pub fn slow_provisioning() -> AllocModel {
        AllocModel::from_p50_p99(30 * NS_PER_SEC, 157_500_000_000)
    }

    /// Fast path: median 2 s, p99 6 s.
    pub fn fast_provisioning() -> AllocModel {
        AllocModel::from_p50_p99(2 * NS_PER_SEC, 6 * NS_PER_SEC)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let d = LogNormal::new((self.p50_ns as f64).ln(), self.sigma).expect("valid sigma");
        d.sample(rng) as u64
    }
}

// ---------------------------------------------------------------------------
// Startup
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Mitigation {
    /// registration deadline after which spares are provisioned
    pub threshold_ns: u64,
    /// spare pool sized as a fraction of the machines still missing, capped
    pub spare_frac: f64,
    pub spare_cap: u32,
}

impl Default for Mitigation {
    fn default() -> Self {
        Mitigation { threshold_ns: 120 * NS_PER_SEC, spare_frac: 0.30, spare_cap: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct StartupParams {
    pub tasks: u64,
    pub tms_needed: u32,
    /// one deployment RPC per machine instead of one per task
    pub batched_deploy: bool,
    pub mitigation: Option<Mitigation>,
    /// (count, added_ns): force the last `count` machines to be stragglers,
    /// for scenario construction
    pub straggler_extra: Option<(u32, u64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StartupReport {
    pub parse_ns: u64,
    pub allocate_ns: u64,
    pub deploy_ns: u64,
    pub total_ns: u64,
    pub spares_provisioned: u32,
    pub mitigated: bool,
    /// machines beyond the required count released once the job is running
    /// (late stragglers and unused spares)
    pub surplus_released: u32,
    /// deployment RPC round-trips issued (per machine when batched, per task
    /// otherwise)
    pub rpc_count: u64,
}

/// Runs the three startup phases. Allocation completes at the k-th machine
/// registration where k = machines needed; with mitigation enabled, spares
/// provisioned at the threshold race the stragglers for those slots.
pub fn run_startup(
    costs: &CostModel,
    alloc: &AllocModel,
    params: &StartupParams,
    seed: u64,
) -> StartupReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parse_ns = costs.parse_ns(params.tasks);

    let n = params.tms_needed as usize;
    let mut regs: Vec<u64> = (0..n).map(|_| alloc.sample(&mut rng)).collect();
    if let Some((count, extra)) = params.straggler_extra {
        let c = (count as usize).min(n);
        for r in regs.iter_mut().rev().take(c) {
            *r += extra;
        }
    }

    let mut spares_provisioned = 0u32;
    let mut mitigated = false;
    if let Some(m) = params.mitigation {
        let registered_at_threshold = regs.iter().filter(|&&r| r <= m.threshold_ns).count();
        if registered_at_threshold < n {
            let missing = (n - registered_at_threshold) as u32;
            let spares = (((missing as f64) * m.spare_frac).ceil() as u32).min(m.spare_cap).max(1);
            for _ in 0..spares {
                regs.push(m.threshold_ns + alloc.sample(&mut rng));
            }
            spares_provisioned = spares;
            mitigated = true;
        }
    }

    regs.sort_unstable();
    let allocate_ns = if n == 0 { 0 } else { regs[n - 1] };
    // whatever was provisioned beyond the first n registrations goes back
    let surplus_released = (regs.len() - n) as u32;

    let rpc_count = if params.batched_deploy { params.tms_needed as u64 } else { params.tasks };
    let deploy_ns = costs.deploy_ns(rpc_count, params.tasks);

    StartupReport {
        parse_ns,
        allocate_ns,
        deploy_ns,
        total_ns: parse_ns + allocate_ns + deploy_ns,
        spares_provisioned,
        mitigated,
        surplus_released,
        rpc_count,
    }
}

/// In-place reconfiguration on already-registered machines: parse + deploy
/// only, no allocation phase. Requires enough free slots; callers fall back
/// to `run_startup` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdatePath {
    InPlace,
    NeedsAllocation,
}

pub fn plan_update(free_slots: u32, slots_needed: u32) -> UpdatePath {
    if free_slots >= slots_needed {
        UpdatePath::InPlace
    } else {
        UpdatePath::NeedsAllocation
    }
}

pub fn hot_update(costs: &CostModel, tasks: u64, tms: u32, batched_deploy: bool) -> StartupReport {
    let parse_ns = costs.parse_ns(tasks);
    let rpc_count = if batched_deploy { tms as u64 } else { tasks };
    let deploy_ns = costs.deploy_ns(rpc_count, tasks);
    StartupReport {
        parse_ns,
        allocate_ns: 0,
        deploy_ns,
        total_ns: parse_ns + deploy_ns,
        spares_provisioned: 0,
        mitigated: false,
        surplus_released: 0,
        rpc_count,
    }
}

// ---------------------------------------------------------------------------
// Leader resolution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderRecord {
    pub leader: u64,
    pub term: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreView {
    Available(Option<LeaderRecord>),
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminateReason {
    BothStoresDown,
    NoLeaderRecord,
    TermRegression,
    RecordMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaderResolution {
    Leader(LeaderRecord),
    /// safety cannot be established: stop the jobs instead of risking a
    /// split brain
    TerminateJobs(TerminateReason),
}

/// Resolution rule table. The primary store wins when readable; the
/// fallback substitutes when the primary is down. Any evidence of going
/// backwards in time (a term older than what this process already observed)
/// or of two live conflicting records terminates instead of guessing.
pub fn resolve_leader(
    primary: &StoreView,
    fallback: &StoreView,
    cached: Option<&LeaderRecord>,
) -> LeaderResolution {
    use LeaderResolution::*;
    use StoreView::*;
    let chosen: Option<LeaderRecord> = match (primary, fallback) {
        (Unavailable, Unavailable) => return TerminateJobs(TerminateReason::BothStoresDown),
        (Available(Some(p)), Available(Some(f))) => {
            if p.term == f.term && p.leader != f.leader {
                return TerminateJobs(TerminateReason::RecordMismatch);
            }
            Some(if f.term > p.term { *f } else { *p })
        }
        (Available(Some(p)), _) => Some(*p),
        (_, Available(Some(f))) => Some(*f),
        _ => None,
    };
    match chosen {
        None => TerminateJobs(TerminateReason::NoLeaderRecord),
        Some(rec) => {
            if let Some(c) = cached {
                if rec.term < c.term {
                    return TerminateJobs(TerminateReason::TermRegression);
                }
            }
            Leader(rec)
        }
    }
}

// ---------------------------------------------------------------------------
// Idempotent submission with retry
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttemptBehavior {
    Delivered,
    LoseRequest,
    LoseResponse,
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub base_backoff_ns: u64,
    pub factor: f64,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { base_backoff_ns: 500_000_000, factor: 2.0, max_attempts: 6 }
    }
}

/// Server side: executes a submission at most once per idempotency key.
#[derive(Debug, Default)]
pub struct SubmitServer {
    by_key: HashMap<String, u64>,
    pub executions: u64,
    next_job: u64,
}

impl SubmitServer {
    pub fn submit(&mut self, key: &str) -> u64 {
        if let Some(&id) = self.by_key.get(key) {
            return id; // uniqueness validation: duplicate keys re-ack
        }
        self.next_job += 1;
        self.executions += 1;
        self.by_key.insert(key.to_string(), self.next_job);
        self.next_job
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubmitReport {
    pub attempts: u32,
    pub backoff_wait_ns: u64,
    pub job_id: Option<u64>,
}

/// Client retry loop over a scripted network-behavior schedule (entries
/// beyond the schedule are delivered). Exponential backoff between attempts.
pub fn submit_with_retry(
    server: &mut SubmitServer,
    key: &str,
    schedule: &[AttemptBehavior],
    policy: &RetryPolicy,
) -> SubmitReport {
    let mut wait = 0u64;
    for i in 0..policy.max_attempts {
        let behavior = schedule.get(i as usize).copied().unwrap_or(AttemptBehavior::Delivered);
        match behavior {
            AttemptBehavior::Delivered => {
                let id = server.submit(key);
                return SubmitReport { attempts: i + 1, backoff_wait_ns: wait, job_id: Some(id) };
            }
            AttemptBehavior::LoseRequest => {}
            AttemptBehavior::LoseResponse => {
                let _ = server.submit(key); // executed, ack lost
            }
        }
        wait += (policy.base_backoff_ns as f64 * policy.factor.powi(i as i32)) as u64;
    }
    SubmitReport { attempts: policy.max_attempts, backoff_wait_ns: wait, job_id: None }
}
