//! Deterministic discrete-event execution core.
//!
//! One engine instance owns a virtual clock, an event queue ordered by
//! (time, sequence number), task state machines, and credit-based channels.
//! Everything cross-task happens through scheduled events, so two runs with
//! the same configuration and seed produce identical event sequences.

use crate::chaos::{FaultKind, FaultPlan, StoreSel, TargetSel};
use crate::checkpoint::{
    self, chunk_of, finalize_attempt, restore_resume_ns, AttemptOutcome, CheckpointAttempt,
    CheckpointMode, FailCause, OpState, Registry, RestoreMode, SnapshotData, SnapshotStore,
    StoreConfig, TaskCkptStatus,
};
use crate::control::{resolve_leader, LeaderRecord, LeaderResolution, StoreView};
use crate::graph::{derive_regions, ExecutionGraph, LogicalGraph, OpKind, RegionPartition};
use crate::recovery::{plan_recovery, Gamma, RecoveryReport, RecoveryStrategy};
use crate::shuffle::{self, RouteCtx, RouteState};
use crate::util::{mix64, stable_hash2, NS_PER_SEC};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap, HashSet, VecDeque};
use std::sync::Arc;
use thiserror::Error;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CkptConfig {
    pub mode: CheckpointMode,
    pub interval_ns: u64,
    /// 0 means one interval. An upload finishing after the deadline counts
    /// as a failed task checkpoint.
    #[serde(default)]
    pub deadline_ns: u64,
}

impl CkptConfig {
    pub fn normalized(mut self) -> CkptConfig {
        if self.deadline_ns == 0 {
            self.deadline_ns = self.interval_ns;
        }
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    pub strategy: RecoveryStrategy,
    pub detection_ns: u64,
    pub reallocate_ns: u64,
    pub restore_mode: RestoreMode,
    pub restore_chunks: u32,
    pub chunk_fetch_ns: u64,
    pub manifest_fetch_ns: u64,
    pub retry_backoff_ns: u64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            strategy: RecoveryStrategy::RegionFailover,
            detection_ns: 500_000_000,
            reallocate_ns: 200_000_000,
            restore_mode: RestoreMode::Eager,
            restore_chunks: 64,
            chunk_fetch_ns: 5_000_000,
            manifest_fetch_ns: 5_000_000,
            retry_backoff_ns: 1_000_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub channel_capacity: u32,
    /// Emission window; sources stop producing new offsets past their budget
    /// and the run drains to quiescence afterwards.
    pub duration_ns: u64,
    pub checkpoint: Option<CkptConfig>,
    pub recovery: RecoveryConfig,
    pub store: StoreConfig,
    pub gamma: Gamma,
    pub spare_tms: u32,
    /// Track (source, offset) pairs at sinks to count duplicate deliveries.
    /// Only sound for runs without source rewind (no replay).
    pub track_duplicates: bool,
    pub max_queued_events: usize,
    pub ha_check_interval_ns: u64,
    pub jm_failover_pause_ns: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            channel_capacity: 32,
            duration_ns: 60 * NS_PER_SEC,
            checkpoint: None,
            recovery: RecoveryConfig::default(),
            store: StoreConfig::default(),
            gamma: Gamma::Full,
            spare_tms: 2,
            track_duplicates: false,
            max_queued_events: 20_000_000,
            ha_check_interval_ns: 10 * NS_PER_SEC,
            jm_failover_pause_ns: NS_PER_SEC,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("event queue overflow: more than {0} scheduled events")]
    QueueOverflow(usize),
}

// ---------------------------------------------------------------------------
// Workload model fed to the engine
// ---------------------------------------------------------------------------

/// Deterministic key generator: the key of (source, offset) is a pure
/// function of the seed, so replay after rewind regenerates identical
/// records. Keys follow a zipf(s) distribution via an inverse-CDF table.
#[derive(Debug, Clone)]
pub struct KeyGen {
    pub key_space: u64,
    pub seed: u64,
    cum: Arc<Vec<f64>>,
}

impl KeyGen {
    pub fn new(key_space: u64, zipf_s: f64, seed: u64) -> KeyGen {
        let n = key_space.max(1);
        let mut w: Vec<f64> = (0..n).map(|i| 1.0 / ((i + 1) as f64).powf(zipf_s)).collect();
        let total: f64 = w.iter().sum();
        let mut acc = 0.0;
        for x in &mut w {
            acc += *x / total;
            *x = acc;
        }
        KeyGen { key_space: n, seed, cum: Arc::new(w) }
    }

    pub fn key_at(&self, src: u64, offset: u64) -> u64 {
        let u = stable_hash2(src, offset, self.seed) as f64 / u64::MAX as f64;
        match self.cum.partition_point(|&c| c < u) {
            i if (i as u64) < self.key_space => i as u64,
            _ => self.key_space - 1,
        }
    }
}

/// Piecewise-constant source rate profile (records/s per source instance).
#[derive(Debug, Clone)]
pub struct RateProfile {
    /// (start_ns, rate) segments, first must start at 0
    pub segments: Vec<(u64, f64)>,
}

impl RateProfile {
    pub fn constant(rate: f64) -> RateProfile {
        RateProfile { segments: vec![(0, rate)] }
    }

    pub fn rate_at(&self, t: u64) -> f64 {
        let mut r = self.segments[0].1;
        for &(start, rate) in &self.segments {
            if t >= start {
                r = rate;
            }
        }
        r
    }

    /// Total records emitted per instance over `[0, duration)`.
    pub fn budget(&self, duration_ns: u64) -> u64 {
        let mut total = 0.0f64;
        for (i, &(start, rate)) in self.segments.iter().enumerate() {
            let end = self.segments.get(i + 1).map(|s| s.0).unwrap_or(duration_ns).min(duration_ns);
            if end > start {
                total += rate * (end - start) as f64 / NS_PER_SEC as f64;
            }
        }
        total.floor() as u64
    }
}

/// Per-operator runtime behavior.
#[derive(Debug, Clone)]
pub struct OpBehavior {
    pub kind: OpKind,
    pub service_ns: u64,
    /// Filter: fraction of records passed through.
    pub filter_pass: f64,
    /// WindowCount: tumbling window length.
    pub window_ns: u64,
    /// Join: fragment match timeout.
    pub join_timeout_ns: u64,
}

impl OpBehavior {
    pub fn new(kind: OpKind, service_ns: u64) -> OpBehavior {
        OpBehavior {
            kind,
            service_ns,
            filter_pass: 1.0,
            window_ns: 5 * NS_PER_SEC,
            join_timeout_ns: 30 * NS_PER_SEC,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorkloadRuntime {
    pub ops: Vec<OpBehavior>,
    /// One rate profile per source operator index.
    pub rates: BTreeMap<usize, RateProfile>,
    pub keygen: KeyGen,
}

impl WorkloadRuntime {
    /// Uniform behavior: every operator gets the same service time, every
    /// source the same constant per-instance rate.
    pub fn uniform(
        logical: &LogicalGraph,
        service_ns: u64,
        rate: f64,
        key_space: u64,
        seed: u64,
    ) -> WorkloadRuntime {
        let ops: Vec<OpBehavior> =
            logical.operators.iter().map(|o| OpBehavior::new(o.kind, service_ns)).collect();
        let mut rates = BTreeMap::new();
        for (i, o) in logical.operators.iter().enumerate() {
            if o.kind == OpKind::Source {
                rates.insert(i, RateProfile::constant(rate));
            }
        }
        WorkloadRuntime { ops, rates, keygen: KeyGen::new(key_space, 1.0, seed) }
    }
}

// ---------------------------------------------------------------------------
// Records, channels, tasks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Record {
    pub key: u64,
    /// originating task index (source or aggregate producer)
    pub src: u32,
    pub offset: u64,
    pub emit_ns: u64,
    pub epoch: u32,
    pub weight: u64,
}

#[derive(Debug, Clone, Copy)]
enum Item {
    Rec(Record),
    Barrier(u64),
}

#[derive(Debug)]
struct ChannelRt {
    producer: usize,
    consumer: usize,
    edge: usize,
    capacity: u32,
    queue: VecDeque<Item>,
    /// records (not barriers) in queue + in transit; credits = capacity - this
    rec_count: u32,
    in_transit: VecDeque<Item>,
    delay_ns: u64,
    last_arrival_ns: u64,
    /// producers blocked on this channel, FIFO
    waiters: VecDeque<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Created,
    Deploying,
    Running,
    Failed,
    Recovering,
    Canceled,
}

#[derive(Debug)]
struct Align {
    ckpt: u64,
    got: Vec<bool>,
    count: usize,
}

#[derive(Debug)]
struct LazyRt {
    resident: Vec<bool>,
    remaining: usize,
}

#[derive(Debug)]
struct TaskRt {
    op: usize,
    state: TaskState,
    epoch: u32,
    busy: bool,
    cur: Option<Record>,
    /// blocked sends: (channel, record), FIFO
    pending: VecDeque<(usize, Record)>,
    blocked_on: Option<usize>,
    in_rr: usize,
    aligning: Option<Align>,
    ostate: OpState,
    src_offset: u64,
    /// synthetic output sequence for aggregate producers
    out_seq: u64,
    emit_scheduled: bool,
    route: Vec<RouteState>,
    ewma_busy: f64,
    last_finish_ns: u64,
    lazy: Option<LazyRt>,
    plan: Option<usize>,
    restore_pending: Option<(SnapshotData, bool)>, // (data, rewind_source)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SendGate {
    Accept,
    Wait,
    Drop,
}

#[derive(Debug)]
struct TmRt {
    alive: bool,
    speed: f64,
    free_slots: u32,
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum Ev {
    SourceEmit(usize),
    Finish(usize),
    Arrive(usize),
    WindowFlush(usize),
    JoinSweep(usize),
    CkptTrigger,
    CkptDeadline(u64),
    UploadDone { task: usize, ckpt: u64 },
    Inject(usize),
    Expire(usize),
    Detect { tasks: Vec<usize>, fail_ns: u64 },
    AllocDone(usize),
    RestoreDone(usize),
    Prefetch(usize),
    HaCheck,
}

struct Sched {
    t: u64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Sched {
    fn eq(&self, other: &Self) -> bool {
        self.t == other.t && self.seq == other.seq
    }
}
impl Eq for Sched {}
impl PartialOrd for Sched {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Sched {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.t, self.seq).cmp(&(other.t, other.seq))
    }
}

// ---------------------------------------------------------------------------
// Accounting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Counters {
    /// records produced (sources and every operator re-emission)
    pub emitted: u64,
    /// records applied at terminal sinks
    pub consumed: u64,
    /// records absorbed by intermediate operators (incl. filter drops)
    pub absorbed: u64,
    /// loss-causing drops: sends to a down task and queues cleared without
    /// replay coverage
    pub dropped: u64,
    /// discards covered by replay or stale-epoch fencing
    pub purged: u64,
    /// source records re-emitted after rewind
    pub replayed: u64,
    pub duplicates: u64,
    pub inherent_misses: u64,
    /// times a producer entered the blocked (backpressured) state
    pub blocked_events: u64,
}

#[derive(Debug)]
struct PlanRt {
    strategy: RecoveryStrategy,
    tasks: Vec<usize>,
    fail_ns: u64,
    detect_ns: u64,
    remaining: usize,
    dropped: u64,
    replayed: u64,
}

#[derive(Debug, Default)]
struct CoordState {
    next_id: u64,
    open: Option<CheckpointAttempt>,
    staged: BTreeMap<(u64, usize), SnapshotData>,
    pub records: Vec<AttemptOutcome>,
    pub skipped: u64,
    paused_until: u64,
}

#[derive(Debug, Clone)]
struct HaStoreRt {
    available: bool,
    rec: Option<LeaderRecord>,
}

#[derive(Debug)]
struct HaState {
    primary: HaStoreRt,
    fallback: HaStoreRt,
    cached: Option<LeaderRecord>,
    jm_failovers: u32,
}

#[derive(Debug)]
enum ActiveFault {
    SlowStore,
    CpuSlow { tm: usize, prev: f64 },
    NetDelay { channels: Vec<(usize, u64)> },
    StoreDown(StoreSel),
}

#[derive(Debug, Default)]
pub struct EngineMetrics {
    /// sink consumption per 1 s virtual bucket
    pub qps_buckets: Vec<u64>,
    /// (consume time, end-to-end latency) samples
    pub latencies: Vec<(u64, u64)>,
    pub backlog_samples: Vec<(u64, u64)>,
    pub recoveries: Vec<RecoveryReport>,
    pub terminated: bool,
    pub termination_reason: Option<String>,
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

pub struct Engine {
    pub exec: ExecutionGraph,
    pub logical: LogicalGraph,
    pub partition: RegionPartition,
    pub cfg: EngineConfig,
    wl: WorkloadRuntime,
    pub seed: u64,

    now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<Sched>>,
    event_count: u64,
    trace_hash: u64,

    tasks: Vec<TaskRt>,
    channels: Vec<ChannelRt>,
    tms: Vec<TmRt>,
    placement: Vec<usize>,

    coord: CoordState,
    pub registry: Registry,
    pub store: SnapshotStore,
    rng_store: ChaCha8Rng,
    rng_chaos: ChaCha8Rng,

    armed: Vec<(crate::chaos::FaultSpec, Option<ActiveFault>)>,
    plans: Vec<PlanRt>,

    pub counters: Counters,
    pub metrics: EngineMetrics,
    seen: Option<HashSet<(u32, u64)>>,
    ha: HaState,
    terminated: bool,

    scratch_backlogs: Vec<u32>,
    scratch_loads: Vec<f64>,
}

impl Engine {
    pub fn new(
        exec: ExecutionGraph,
        logical: LogicalGraph,
        wl: WorkloadRuntime,
        cfg: EngineConfig,
        seed: u64,
    ) -> Engine {
        let mut cfg = cfg;
        cfg.checkpoint = cfg.checkpoint.take().map(CkptConfig::normalized);
        let partition = derive_regions(&exec);
        let n = exec.tasks.len();
        let tasks: Vec<TaskRt> = (0..n)
            .map(|i| {
                let op = exec.tasks[i].op as usize;
                let kind = wl.ops[op].kind;
                TaskRt {
                    op,
                    state: TaskState::Running,
                    epoch: 0,
                    busy: false,
                    cur: None,
                    pending: VecDeque::new(),
                    blocked_on: None,
                    in_rr: 0,
                    aligning: None,
                    ostate: initial_state(kind),
                    src_offset: 0,
                    out_seq: 0,
                    emit_scheduled: false,
                    route: vec![RouteState::default(); exec.task_outputs[i].len()],
                    ewma_busy: 0.0,
                    last_finish_ns: 0,
                    lazy: None,
                    plan: None,
                    restore_pending: None,
                }
            })
            .collect();
        let channels: Vec<ChannelRt> = exec
            .channels
            .iter()
            .map(|c| ChannelRt {
                producer: c.producer,
                consumer: c.consumer,
                edge: c.edge,
                capacity: cfg.channel_capacity,
                queue: VecDeque::new(),
                rec_count: 0,
                in_transit: VecDeque::new(),
                delay_ns: 0,
                last_arrival_ns: 0,
                waiters: VecDeque::new(),
            })
            .collect();
        let mut tms: Vec<TmRt> = (0..exec.num_tms + cfg.spare_tms as usize)
            .map(|_| TmRt { alive: true, speed: 1.0, free_slots: exec.slots_per_tm })
            .collect();
        for &tm in &exec.placement {
            tms[tm].free_slots -= 1;
        }
        let registry = Registry::new(partition.num_regions());
        let store = SnapshotStore::new(cfg.store);
        let seen = cfg.track_duplicates.then(HashSet::new);
        let placement = exec.placement.clone();
        Engine {
            exec,
            logical,
            partition,
            wl,
            cfg,
            seed,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            event_count: 0,
            trace_hash: 0,
            tasks,
            channels,
            tms,
            placement,
            coord: CoordState::default(),
            registry,
            store,
            rng_store: ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x5105)),
            rng_chaos: ChaCha8Rng::seed_from_u64(mix64(seed ^ 0xc805)),
            armed: Vec::new(),
            plans: Vec::new(),
            counters: Counters::default(),
            metrics: EngineMetrics::default(),
            seen,
            ha: HaState {
                primary: HaStoreRt { available: true, rec: Some(LeaderRecord { leader: 1, term: 1 }) },
                fallback: HaStoreRt { available: true, rec: Some(LeaderRecord { leader: 1, term: 1 }) },
                cached: Some(LeaderRecord { leader: 1, term: 1 }),
                jm_failovers: 0,
            },
            terminated: false,
            scratch_backlogs: Vec::new(),
            scratch_loads: Vec::new(),
        }
    }

    // -- public inspection ---------------------------------------------------

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    pub fn trace_digest(&self) -> u64 {
        self.trace_hash
    }

    pub fn task_state(&self, t: usize) -> TaskState {
        self.tasks[t].state
    }

    pub fn task_blocked(&self, t: usize) -> bool {
        self.tasks[t].blocked_on.is_some()
    }

    pub fn task_epoch(&self, t: usize) -> u32 {
        self.tasks[t].epoch
    }

    pub fn tm_speed(&self, tm: usize) -> f64 {
        self.tms[tm].speed
    }

    pub fn channel_backlog(&self, ci: usize) -> u32 {
        self.channels[ci].rec_count
    }

    pub fn channel_delay(&self, ci: usize) -> u64 {
        self.channels[ci].delay_ns
    }

    pub fn checkpoint_records(&self) -> &[AttemptOutcome] {
        &self.coord.records
    }

    pub fn checkpoints_skipped(&self) -> u64 {
        self.coord.skipped
    }

    pub fn jm_failovers(&self) -> u32 {
        self.ha.jm_failovers
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    /// Merged per-key output counts over every terminal task.
    pub fn ledger(&self) -> BTreeMap<u64, u64> {
        let mut out = BTreeMap::new();
        for (i, t) in self.tasks.iter().enumerate() {
            if self.is_terminal(i) {
                if let OpState::Counts(m) = &t.ostate {
                    for (k, v) in m {
                        *out.entry(*k).or_insert(0) += v;
                    }
                }
            }
        }
        out
    }

    fn is_terminal(&self, t: usize) -> bool {
        self.exec.task_outputs[t].is_empty() && self.wl.ops[self.tasks[t].op].kind != OpKind::Source
    }

    /// Conservation check: every produced record is either consumed,
    /// absorbed, dropped, purged, or still in flight.
    pub fn audit(&self) -> Result<(), String> {
        let mut inflight: u64 = 0;
        for ch in &self.channels {
            inflight += ch.rec_count as u64;
        }
        for t in &self.tasks {
            inflight += t.cur.is_some() as u64;
            // pending records are counted in neither queue nor rec_count
            inflight += t.pending.len() as u64;
        }
        let c = &self.counters;
        let accounted = c.consumed + c.absorbed + c.dropped + c.purged + inflight;
        if c.emitted != accounted {
            return Err(format!(
                "conservation violated: emitted={} but consumed={} absorbed={} dropped={} purged={} inflight={}",
                c.emitted, c.consumed, c.absorbed, c.dropped, c.purged, inflight
            ));
        }
        Ok(())
    }

    // -- scheduling ----------------------------------------------------------

    fn push(&mut self, t: u64, ev: Ev) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Sched { t, seq, ev }));
    }

    /// Schedules initial source emissions, checkpoint triggers, windowing
    /// sweeps, and HA health checks.
    pub fn start(&mut self) {
        for i in 0..self.tasks.len() {
            let op = self.tasks[i].op;
            match self.wl.ops[op].kind {
                OpKind::Source => {
                    if self.wl.rates.contains_key(&op) {
                        self.tasks[i].emit_scheduled = true;
                        self.push(0, Ev::SourceEmit(i));
                    }
                }
                OpKind::WindowCount => {
                    let w = self.wl.ops[op].window_ns;
                    self.push(w, Ev::WindowFlush(i));
                }
                OpKind::Join => {
                    let sweep = self.wl.ops[op].join_timeout_ns;
                    self.push(sweep, Ev::JoinSweep(i));
                }
                _ => {}
            }
        }
        if let Some(ck) = &self.cfg.checkpoint {
            let at = ck.interval_ns;
            self.push(at, Ev::CkptTrigger);
        }
        let ha_at = self.cfg.ha_check_interval_ns;
        if ha_at > 0 && ha_at < self.cfg.duration_ns {
            self.push(ha_at, Ev::HaCheck);
        }
    }

    /// Arms a fault plan: one injection event per spec. Returns the number
    /// scheduled.
    pub fn arm_plan(&mut self, plan: &FaultPlan) -> usize {
        let mut n = 0;
        for spec in &plan.specs {
            let idx = self.armed.len();
            self.armed.push((spec.clone(), None));
            self.push(spec.at.ns(), Ev::Inject(idx));
            n += 1;
        }
        n
    }

    /// Processes every event with time <= t_end.
    pub fn run_until(&mut self, t_end: u64) -> Result<u64, EngineError> {
        let start_count = self.event_count;
        while let Some(Reverse(top)) = self.queue.peek() {
            if top.t > t_end || self.terminated {
                break;
            }
            if self.queue.len() > self.cfg.max_queued_events {
                return Err(EngineError::QueueOverflow(self.cfg.max_queued_events));
            }
            let Reverse(s) = self.queue.pop().unwrap();
            debug_assert!(s.t >= self.now);
            self.now = s.t;
            self.event_count += 1;
            self.trace_hash = mix64(self.trace_hash ^ mix64(s.t ^ ev_tag(&s.ev)));
            self.handle(s.ev);
        }
        Ok(self.event_count - start_count)
    }

    /// Runs until the event queue drains (the natural end of a finite
    /// workload) or the hard time cap is hit.
    pub fn run_to_quiescence(&mut self, cap_ns: u64) -> Result<u64, EngineError> {
        self.run_until(cap_ns)
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::SourceEmit(t) => self.on_source_emit(t),
            Ev::Finish(t) => self.on_finish(t),
            Ev::Arrive(ci) => self.on_arrive(ci),
            Ev::WindowFlush(t) => self.on_window_flush(t),
            Ev::JoinSweep(t) => self.on_join_sweep(t),
            Ev::CkptTrigger => self.on_ckpt_trigger(),
            Ev::CkptDeadline(id) => self.on_ckpt_deadline(id),
            Ev::UploadDone { task, ckpt } => self.on_upload_done(task, ckpt),
            Ev::Inject(i) => self.on_inject(i),
            Ev::Expire(i) => self.on_expire(i),
            Ev::Detect { tasks, fail_ns } => self.on_detect(tasks, fail_ns),
            Ev::AllocDone(t) => self.on_alloc_done(t),
            Ev::RestoreDone(t) => self.on_restore_done(t),
            Ev::Prefetch(t) => self.on_prefetch(t),
            Ev::HaCheck => self.on_ha_check(),
        }
    }

    // -- sources -------------------------------------------------------------

    fn source_params(&self, t: usize) -> (f64, u64) {
        let op = self.tasks[t].op;
        let profile = &self.wl.rates[&op];
        (profile.rate_at(self.now), profile.budget(self.cfg.duration_ns))
    }

    fn source_period_ns(&self, t: usize, rate: f64) -> u64 {
        let speed = self.tms[self.placement[t]].speed.max(1e-9);
        ((NS_PER_SEC as f64 / rate.max(1e-9)) * speed) as u64
    }

    fn schedule_emit(&mut self, t: usize, at: u64) {
        if !self.tasks[t].emit_scheduled {
            self.tasks[t].emit_scheduled = true;
            self.push(at, Ev::SourceEmit(t));
        }
    }

    fn on_source_emit(&mut self, t: usize) {
        self.tasks[t].emit_scheduled = false;
        if self.tasks[t].state != TaskState::Running || self.tasks[t].blocked_on.is_some() {
            return;
        }
        let (rate, budget) = self.source_params(t);
        if self.tasks[t].src_offset >= budget {
            return;
        }
        let offset = self.tasks[t].src_offset;
        self.tasks[t].src_offset += 1;
        let rec = Record {
            key: self.wl.keygen.key_at(t as u64, offset),
            src: t as u32,
            offset,
            emit_ns: self.now,
            epoch: self.tasks[t].epoch,
            weight: 1,
        };
        self.counters.emitted += 1;
        let free = self.emit_record(t, rec);
        if free && self.tasks[t].src_offset < budget {
            let period = self.source_period_ns(t, rate);
            let at = self.now + period.max(1);
            self.schedule_emit(t, at);
        }
        // blocked sources resume emission from the unblock path
    }

    // -- routing and sends ---------------------------------------------------

    /// Routes and sends one record over every out-edge of `t`. Returns false
    /// if the producer ended up blocked.
    fn emit_record(&mut self, t: usize, rec: Record) -> bool {
        let n_edges = self.exec.task_outputs[t].len();
        for j in 0..n_edges {
            let ci = self.route_edge(t, j, &rec);
            self.send(t, ci, rec);
        }
        self.tasks[t].blocked_on.is_none()
    }

    fn route_edge(&mut self, t: usize, j: usize, rec: &Record) -> usize {
        let (strategy, up, down, n_cands) = {
            let oe = &self.exec.task_outputs[t][j];
            let d = &self.exec.edge_descriptors[oe.descriptor];
            (d.strategy, d.up, d.down, oe.channels.len())
        };
        self.scratch_backlogs.clear();
        self.scratch_loads.clear();
        for k in 0..n_cands {
            let ci = self.exec.task_outputs[t][j].channels[k];
            let ch = &self.channels[ci];
            self.scratch_backlogs.push(ch.rec_count);
            self.scratch_loads.push(self.tasks[ch.consumer].ewma_busy);
        }
        let ctx = RouteCtx {
            producer_sub: self.exec.tasks[t].sub,
            up,
            down,
            candidates: n_cands,
            backlogs: &self.scratch_backlogs,
            loads: &self.scratch_loads,
            seed: self.seed,
        };
        let key = Some(rec.key);
        let idx = shuffle::route(&strategy, &mut self.tasks[t].route[j], &ctx, key)
            .expect("edge validated at expand time");
        self.exec.task_outputs[t][j].channels[idx]
    }

    /// How a send must treat the consumer's current state.
    fn send_gate(&self, consumer: usize) -> SendGate {
        match self.tasks[consumer].state {
            TaskState::Running => SendGate::Accept,
            // a restoring task will resume with its rewound inputs intact;
            // dropping here would lose post-rewind records forever, so the
            // producer waits. Without rewind the loss is the contract.
            TaskState::Recovering if self.cfg.recovery.strategy != RecoveryStrategy::SingleTask => {
                SendGate::Wait
            }
            _ => SendGate::Drop,
        }
    }

    fn send(&mut self, t: usize, ci: usize, mut rec: Record) {
        rec.epoch = self.tasks[t].epoch;
        let consumer = self.channels[ci].consumer;
        match self.send_gate(consumer) {
            SendGate::Drop => {
                self.account_drop_to(consumer, 1);
                return;
            }
            SendGate::Wait => {
                self.block_on(t, ci, rec);
                return;
            }
            SendGate::Accept => {}
        }
        if self.channels[ci].rec_count >= self.channels[ci].capacity {
            self.block_on(t, ci, rec);
            return;
        }
        self.enqueue(ci, Item::Rec(rec));
    }

    /// Producer blocks until a credit returns or the consumer comes back.
    fn block_on(&mut self, t: usize, ci: usize, rec: Record) {
        if self.tasks[t].blocked_on.is_none() {
            self.counters.blocked_events += 1;
            self.tasks[t].blocked_on = Some(ci);
            self.channels[ci].waiters.push_back(t);
        }
        self.tasks[t].pending.push_back((ci, rec));
    }

    fn enqueue(&mut self, ci: usize, item: Item) {
        if let Item::Rec(_) = item {
            self.channels[ci].rec_count += 1;
        }
        if self.channels[ci].delay_ns > 0 {
            let at = (self.now + self.channels[ci].delay_ns).max(self.channels[ci].last_arrival_ns);
            self.channels[ci].last_arrival_ns = at;
            self.channels[ci].in_transit.push_back(item);
            self.push(at, Ev::Arrive(ci));
        } else {
            self.channels[ci].queue.push_back(item);
            let consumer = self.channels[ci].consumer;
            self.try_start(consumer);
        }
    }

    fn on_arrive(&mut self, ci: usize) {
        if let Some(item) = self.channels[ci].in_transit.pop_front() {
            self.channels[ci].queue.push_back(item);
            let consumer = self.channels[ci].consumer;
            self.try_start(consumer);
        }
    }

    /// A record left the consumer queue: return the credit and wake blocked
    /// producers FIFO.
    fn credit_returned(&mut self, ci: usize) {
        self.channels[ci].rec_count -= 1;
        while self.channels[ci].rec_count < self.channels[ci].capacity {
            let Some(&p) = self.channels[ci].waiters.front() else { break };
            // the waiter's pending head must target this channel
            if self.tasks[p].blocked_on != Some(ci) {
                self.channels[ci].waiters.pop_front();
                continue;
            }
            self.channels[ci].waiters.pop_front();
            self.tasks[p].blocked_on = None;
            self.flush_pending(p);
            if self.tasks[p].blocked_on == Some(ci) {
                // immediately re-blocked on us; it re-registered, stop
                break;
            }
        }
    }

    /// Tries to drain a producer's pending sends in order; re-registers it
    /// as a waiter if it blocks again. On full drain the task resumes.
    fn flush_pending(&mut self, p: usize) {
        while let Some(&(ci, rec)) = self.tasks[p].pending.front() {
            let consumer = self.channels[ci].consumer;
            match self.send_gate(consumer) {
                SendGate::Drop => {
                    self.tasks[p].pending.pop_front();
                    self.account_drop_to(consumer, 1);
                    continue;
                }
                SendGate::Wait => {
                    self.tasks[p].blocked_on = Some(ci);
                    self.channels[ci].waiters.push_back(p);
                    return;
                }
                SendGate::Accept => {}
            }
            if self.channels[ci].rec_count >= self.channels[ci].capacity {
                self.tasks[p].blocked_on = Some(ci);
                self.channels[ci].waiters.push_back(p);
                return;
            }
            self.tasks[p].pending.pop_front();
            self.enqueue(ci, Item::Rec(rec));
        }
        self.tasks[p].blocked_on = None;
        if self.tasks[p].state == TaskState::Running {
            if self.wl.ops[self.tasks[p].op].kind == OpKind::Source {
                let (rate, budget) = self.source_params(p);
                if self.tasks[p].src_offset < budget {
                    let at = self.now + self.source_period_ns(p, rate).max(1);
                    self.schedule_emit(p, at);
                }
            } else {
                self.try_start(p);
            }
        }
    }

    /// Attributes a dropped send. Drops covered by replay (full-completeness
    /// strategies rewind sources) count as purged instead of lost.
    fn account_drop_to(&mut self, consumer: usize, n: u64) {
        if self.cfg.recovery.strategy == RecoveryStrategy::SingleTask {
            self.counters.dropped += n;
            if let Some(pi) = self.tasks[consumer].plan {
                self.plans[pi].dropped += n;
            } else if let Some(pi) = self.find_plan_for(consumer) {
                self.plans[pi].dropped += n;
            }
        } else {
            self.counters.purged += n;
        }
    }

    fn find_plan_for(&self, task: usize) -> Option<usize> {
        self.plans.iter().position(|p| p.remaining > 0 && p.tasks.contains(&task))
    }

    // -- task processing -----------------------------------------------------

    fn service_ns(&self, t: usize) -> u64 {
        let base = self.wl.ops[self.tasks[t].op].service_ns;
        let speed = self.tms[self.placement[t]].speed;
        ((base as f64) * speed).max(1.0) as u64
    }

    fn try_start(&mut self, c: usize) {
        loop {
            let task = &self.tasks[c];
            if task.state != TaskState::Running || task.busy || task.blocked_on.is_some() {
                return;
            }
            let n_in = self.exec.task_inputs[c].len();
            if n_in == 0 {
                return;
            }
            let mut picked: Option<(usize, usize)> = None; // (slot, channel)
            for k in 0..n_in {
                let slot = (self.tasks[c].in_rr + k) % n_in;
                if let Some(al) = &self.tasks[c].aligning {
                    if al.got[slot] {
                        continue;
                    }
                }
                let ci = self.exec.task_inputs[c][slot];
                if !self.channels[ci].queue.is_empty() {
                    picked = Some((slot, ci));
                    break;
                }
            }
            let Some((slot, ci)) = picked else { return };
            let item = self.channels[ci].queue.pop_front().unwrap();
            match item {
                Item::Barrier(id) => {
                    self.handle_barrier(c, slot, id);
                    // alignment may have blocked channels or snapshotted;
                    // loop to keep pulling from the remaining inputs
                }
                Item::Rec(rec) => {
                    let producer = self.channels[ci].producer;
                    if rec.epoch < self.tasks[producer].epoch {
                        // stale epoch: partial output of a pre-failure
                        // generation, fence it off
                        self.counters.purged += 1;
                        self.credit_returned(ci);
                        continue;
                    }
                    let mut service = self.service_ns(c);
                    // lazy restore: a non-resident key blocks only this record
                    if let Some(lz) = &mut self.tasks[c].lazy {
                        let chunk =
                            chunk_of(rec.key, lz.resident.len() as u32, self.seed) as usize;
                        if !lz.resident[chunk] {
                            lz.resident[chunk] = true;
                            lz.remaining -= 1;
                            service += self.cfg.recovery.chunk_fetch_ns;
                            if lz.remaining == 0 {
                                self.tasks[c].lazy = None;
                            }
                        }
                    }
                    self.tasks[c].in_rr = (slot + 1) % n_in;
                    self.tasks[c].cur = Some(rec);
                    self.tasks[c].busy = true;
                    let at = self.now + service;
                    self.push(at, Ev::Finish(c));
                    // credit goes back only after this consumer is marked
                    // busy: the woken producer's send may re-enter
                    // try_start for this very task
                    self.credit_returned(ci);
                    return;
                }
            }
        }
    }

    fn on_finish(&mut self, t: usize) {
        if self.tasks[t].state != TaskState::Running {
            return;
        }
        let Some(rec) = self.tasks[t].cur.take() else { return };
        self.tasks[t].busy = false;
        // busy-fraction EWMA used by load-aware routing
        {
            let dt = (self.now - self.tasks[t].last_finish_ns).max(1);
            let bf = (self.service_ns(t) as f64 / dt as f64).min(1.0);
            let task = &mut self.tasks[t];
            task.ewma_busy = 0.2 * bf + 0.8 * task.ewma_busy;
            task.last_finish_ns = self.now;
        }
        let kind = self.wl.ops[self.tasks[t].op].kind;
        if self.is_terminal(t) {
            match kind {
                OpKind::Filter => {
                    if self.filter_passes(t, &rec) {
                        self.consume(t, rec);
                    } else {
                        self.counters.absorbed += 1;
                    }
                }
                _ => self.consume(t, rec),
            }
        } else {
            match kind {
                OpKind::Filter => {
                    self.counters.absorbed += 1;
                    if self.filter_passes(t, &rec) {
                        self.counters.emitted += 1;
                        self.emit_record(t, rec);
                    }
                }
                OpKind::Lookup | OpKind::Sink => {
                    self.counters.absorbed += 1;
                    self.counters.emitted += 1;
                    self.emit_record(t, rec);
                }
                OpKind::WindowCount => {
                    self.counters.absorbed += 1;
                    let w = self.wl.ops[self.tasks[t].op].window_ns;
                    let now = self.now;
                    if let OpState::Window { counts, window_start } = &mut self.tasks[t].ostate {
                        if *window_start == 0 {
                            *window_start = now / w * w;
                        }
                        *counts.entry(rec.key).or_insert(0) += rec.weight;
                    }
                }
                OpKind::Join => {
                    self.counters.absorbed += 1;
                    self.join_input(t, rec);
                }
                OpKind::Source => unreachable!("sources have no inputs"),
            }
        }
        if self.tasks[t].blocked_on.is_none() {
            self.try_start(t);
        }
    }

    fn filter_passes(&self, t: usize, rec: &Record) -> bool {
        let pass = self.wl.ops[self.tasks[t].op].filter_pass;
        let h = stable_hash2(rec.src as u64 ^ rec.key, rec.offset, self.seed ^ 0xf117);
        (h as f64 / u64::MAX as f64) < pass
    }

    fn consume(&mut self, t: usize, rec: Record) {
        self.counters.consumed += 1;
        if let Some(seen) = &mut self.seen {
            if !seen.insert((rec.src, rec.offset)) {
                self.counters.duplicates += 1;
            }
        }
        if let OpState::Counts(m) = &mut self.tasks[t].ostate {
            *m.entry(rec.key).or_insert(0) += rec.weight;
        }
        let bucket = (self.now / NS_PER_SEC) as usize;
        if self.metrics.qps_buckets.len() <= bucket {
            self.metrics.qps_buckets.resize(bucket + 1, 0);
        }
        self.metrics.qps_buckets[bucket] += 1;
        self.metrics.latencies.push((self.now, self.now - rec.emit_ns));
    }

    fn join_input(&mut self, t: usize, rec: Record) {
        // side = position of the record's edge among this task's input edges
        let edge = self.input_edge_of_last_record(t, &rec);
        let side_bit = 1u8 << (edge % 2);
        let now = self.now;
        let matched = if let OpState::Join { pending } = &mut self.tasks[t].ostate {
            match pending.get_mut(&rec.key) {
                Some((mask, _)) if *mask & side_bit == 0 => {
                    pending.remove(&rec.key);
                    true
                }
                Some(_) => false, // same-side duplicate fragment: keep waiting
                None => {
                    pending.insert(rec.key, (side_bit, now));
                    false
                }
            }
        } else {
            false
        };
        if matched {
            let out = Record {
                key: rec.key,
                src: t as u32,
                offset: self.tasks[t].out_seq,
                emit_ns: rec.emit_ns,
                epoch: self.tasks[t].epoch,
                weight: 1,
            };
            self.tasks[t].out_seq += 1;
            self.counters.emitted += 1;
            self.emit_record(t, out);
        }
    }

    fn input_edge_of_last_record(&self, t: usize, rec: &Record) -> usize {
        // fragments carry their source task; map to the producing operator's
        // edge position (0 or 1 for two-source joins)
        let src_op = self.exec.tasks[rec.src as usize].op as usize;
        let mut edges: Vec<usize> = self.exec.task_inputs[t]
            .iter()
            .map(|&ci| self.exec.tasks[self.channels[ci].producer].op as usize)
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.iter().position(|&e| e == src_op).unwrap_or(0)
    }

    fn on_window_flush(&mut self, t: usize) {
        let w = self.wl.ops[self.tasks[t].op].window_ns;
        if self.tasks[t].state == TaskState::Running {
            let drained = if let OpState::Window { counts, window_start } = &mut self.tasks[t].ostate
            {
                *window_start = self.now;
                std::mem::take(counts)
            } else {
                BTreeMap::new()
            };
            for (key, count) in drained {
                let out = Record {
                    key,
                    src: t as u32,
                    offset: self.tasks[t].out_seq,
                    emit_ns: self.now,
                    epoch: self.tasks[t].epoch,
                    weight: count,
                };
                self.tasks[t].out_seq += 1;
                self.counters.emitted += 1;
                self.emit_record(t, out);
            }
        }
        if self.now < self.cfg.duration_ns + 2 * w {
            self.push(self.now + w, Ev::WindowFlush(t));
        }
    }

    fn on_join_sweep(&mut self, t: usize) {
        let timeout = self.wl.ops[self.tasks[t].op].join_timeout_ns;
        let now = self.now;
        if self.tasks[t].state == TaskState::Running {
            if let OpState::Join { pending } = &mut self.tasks[t].ostate {
                let before = pending.len();
                pending.retain(|_, (_, at)| now.saturating_sub(*at) < timeout);
                // expired fragments were already counted as absorbed on
                // input; only the miss statistic moves here
                let expired = (before - pending.len()) as u64;
                self.counters.inherent_misses += expired;
            }
        }
        if self.now < self.cfg.duration_ns + 2 * timeout {
            self.push(self.now + timeout, Ev::JoinSweep(t));
        }
    }

    // -- checkpointing -------------------------------------------------------

    fn on_ckpt_trigger(&mut self) {
        let Some(ck) = self.cfg.checkpoint.clone() else { return };
        if self.now >= self.cfg.duration_ns {
            return;
        }
        if self.now < self.coord.paused_until || self.coord.open.is_some() {
            if self.coord.open.is_some() {
                self.coord.skipped += 1;
            }
            self.push(self.now + ck.interval_ns, Ev::CkptTrigger);
            return;
        }
        self.coord.next_id += 1;
        let id = self.coord.next_id;
        let mut attempt =
            CheckpointAttempt::new(id, ck.mode, self.now, ck.deadline_ns, self.tasks.len());
        if !self.store.available {
            for t in 0..self.tasks.len() {
                attempt.resolve(t, TaskCkptStatus::Failed(FailCause::StoreUnavailable));
            }
            self.finalize_open(attempt);
            self.push(self.now + ck.interval_ns, Ev::CkptTrigger);
            return;
        }
        // failed tasks cannot snapshot
        for t in 0..self.tasks.len() {
            if self.tasks[t].state != TaskState::Running {
                attempt.resolve(t, TaskCkptStatus::Failed(FailCause::TaskFailed));
            }
        }
        self.push(self.now + ck.deadline_ns, Ev::CkptDeadline(id));
        self.push(self.now + ck.interval_ns, Ev::CkptTrigger);
        self.coord.open = Some(attempt);
        // inject barriers at sources (snapshot offsets immediately)
        for t in 0..self.tasks.len() {
            if self.wl.ops[self.tasks[t].op].kind == OpKind::Source
                && self.tasks[t].state == TaskState::Running
            {
                self.snapshot_task(t, id);
                self.broadcast_barrier(t, id);
            }
        }
        self.maybe_finalize_open();
        self.sample_backlog();
    }

    fn sample_backlog(&mut self) {
        let total: u64 = self.channels.iter().map(|c| c.rec_count as u64).sum();
        self.metrics.backlog_samples.push((self.now, total));
    }

    fn snapshot_task(&mut self, t: usize, ckpt: u64) {
        // a source's pending record is not yet enqueued: the snapshot offset
        // excludes it so replay stays exact
        let offset = if self.wl.ops[self.tasks[t].op].kind == OpKind::Source {
            self.tasks[t].src_offset - self.tasks[t].pending.len() as u64
        } else {
            self.tasks[t].src_offset
        };
        let data = SnapshotData::new(self.tasks[t].ostate.clone(), offset);
        let size = data.size_bytes;
        match self.store.put_latency(size, &mut self.rng_store) {
            Some(lat) => {
                self.coord.staged.insert((ckpt, t), data);
                self.push(self.now + lat, Ev::UploadDone { task: t, ckpt });
            }
            None => {
                if let Some(a) = &mut self.coord.open {
                    a.resolve(t, TaskCkptStatus::Failed(FailCause::StoreUnavailable));
                }
            }
        }
    }

    fn broadcast_barrier(&mut self, t: usize, ckpt: u64) {
        // barriers ride the queues but are exempt from credit accounting
        let mut targets: Vec<usize> = Vec::new();
        for oe in &self.exec.task_outputs[t] {
            targets.extend_from_slice(&oe.channels);
        }
        for ci in targets {
            self.enqueue(ci, Item::Barrier(ckpt));
        }
    }

    fn handle_barrier(&mut self, c: usize, slot: usize, id: u64) {
        let open_id = self.coord.open.as_ref().map(|a| a.id);
        if open_id != Some(id) {
            return; // stale barrier from a finalized attempt
        }
        let n_in = self.exec.task_inputs[c].len();
        {
            let task = &mut self.tasks[c];
            let al = task.aligning.get_or_insert_with(|| Align {
                ckpt: id,
                got: vec![false; n_in],
                count: 0,
            });
            if al.ckpt != id {
                *al = Align { ckpt: id, got: vec![false; n_in], count: 0 };
            }
            if !al.got[slot] {
                al.got[slot] = true;
                al.count += 1;
            }
            if al.count < n_in {
                return;
            }
            task.aligning = None;
        }
        self.snapshot_task(c, id);
        self.broadcast_barrier(c, id);
        self.maybe_finalize_open();
    }

    fn on_upload_done(&mut self, task: usize, ckpt: u64) {
        let data = self.coord.staged.remove(&(ckpt, task));
        let open = match &mut self.coord.open {
            Some(a) if a.id == ckpt => a,
            _ => return,
        };
        if !matches!(open.statuses[task], TaskCkptStatus::Pending) {
            return;
        }
        let Some(data) = data else { return };
        open.resolve(task, TaskCkptStatus::Acked { size_bytes: data.size_bytes });
        self.store.commit(ckpt, task, data);
        self.maybe_finalize_open();
    }

    fn on_ckpt_deadline(&mut self, id: u64) {
        if let Some(a) = &self.coord.open {
            if a.id == id {
                let attempt = self.coord.open.take().unwrap();
                self.finalize_open(attempt);
            }
        }
    }

    fn maybe_finalize_open(&mut self) {
        if let Some(a) = &self.coord.open {
            if a.pending == 0 {
                let attempt = self.coord.open.take().unwrap();
                self.finalize_open(attempt);
            }
        }
    }

    fn finalize_open(&mut self, mut attempt: CheckpointAttempt) {
        self.coord.staged.retain(|(ckpt, _), _| *ckpt != attempt.id);
        let out = finalize_attempt(&mut attempt, &self.partition, &mut self.registry, self.now);
        self.store.gc(&self.registry, None);
        self.coord.records.push(out);
    }

    // -- fault injection -----------------------------------------------------

    fn on_inject(&mut self, i: usize) {
        use rand::Rng;
        let spec = self.armed[i].0.clone();
        let dur = spec.duration.ns();
        match spec.kind {
            FaultKind::KillTm { target } => {
                let tm = match target {
                    TargetSel::Tm { tm } => tm,
                    TargetSel::Random(_) => {
                        // draw among machines actually hosting running
                        // tasks, so a random kill always bites
                        let hosting: Vec<usize> = (0..self.tms.len())
                            .filter(|&m| {
                                self.tms[m].alive
                                    && (0..self.tasks.len()).any(|t| {
                                        self.placement[t] == m
                                            && self.tasks[t].state == TaskState::Running
                                    })
                            })
                            .collect();
                        if hosting.is_empty() {
                            return;
                        }
                        hosting[self.rng_chaos.gen_range(0..hosting.len())]
                    }
                };
                if tm < self.tms.len() && self.tms[tm].alive {
                    self.kill_tm(tm);
                }
            }
            FaultKind::KillJm => self.on_kill_jm(),
            FaultKind::SlowStore { p_slow, added_delay } => {
                self.store.slow = Some(checkpoint::SlowFault {
                    p_slow,
                    added_delay_ns: added_delay.ns(),
                });
                if dur > 0 {
                    self.armed[i].1 = Some(ActiveFault::SlowStore);
                    self.push(self.now + dur, Ev::Expire(i));
                }
            }
            FaultKind::NetDelay { ref from, ref to, added } => {
                let edge = self.logical.edges.iter().position(|e| &e.from == from && &e.to == to);
                let Some(edge) = edge else { return };
                let mut prev = Vec::new();
                for ci in 0..self.channels.len() {
                    if self.channels[ci].edge == edge {
                        prev.push((ci, self.channels[ci].delay_ns));
                        self.channels[ci].delay_ns = added.ns();
                    }
                }
                if dur > 0 {
                    self.armed[i].1 = Some(ActiveFault::NetDelay { channels: prev });
                    self.push(self.now + dur, Ev::Expire(i));
                }
            }
            FaultKind::CpuSlow { target, factor } => {
                let tm = match target {
                    TargetSel::Tm { tm } => tm,
                    TargetSel::Random(_) => self.rng_chaos.gen_range(0..self.tms.len()),
                };
                if tm >= self.tms.len() {
                    return;
                }
                let prev = self.tms[tm].speed;
                self.tms[tm].speed = factor;
                if dur > 0 {
                    self.armed[i].1 = Some(ActiveFault::CpuSlow { tm, prev });
                    self.push(self.now + dur, Ev::Expire(i));
                }
            }
            FaultKind::StoreDown { store } => {
                match store {
                    StoreSel::Snapshot => self.store.available = false,
                    StoreSel::Primary => self.ha.primary.available = false,
                    StoreSel::Fallback => self.ha.fallback.available = false,
                }
                if dur > 0 {
                    self.armed[i].1 = Some(ActiveFault::StoreDown(store));
                    self.push(self.now + dur, Ev::Expire(i));
                }
            }
        }
    }

    fn on_expire(&mut self, i: usize) {
        match self.armed[i].1.take() {
            Some(ActiveFault::SlowStore) => self.store.slow = None,
            Some(ActiveFault::CpuSlow { tm, prev }) => self.tms[tm].speed = prev,
            Some(ActiveFault::NetDelay { channels }) => {
                for (ci, prev) in channels {
                    self.channels[ci].delay_ns = prev;
                }
            }
            Some(ActiveFault::StoreDown(store)) => match store {
                StoreSel::Snapshot => self.store.available = true,
                StoreSel::Primary => self.ha.primary.available = true,
                StoreSel::Fallback => self.ha.fallback.available = true,
            },
            None => {}
        }
    }

    // -- failures and recovery -----------------------------------------------

    fn kill_tm(&mut self, tm: usize) {
        self.tms[tm].alive = false;
        self.tms[tm].free_slots = 0;
        // all hosted tasks fail atomically at this instant
        let hosted: Vec<usize> = (0..self.tasks.len())
            .filter(|&t| self.placement[t] == tm && self.tasks[t].state == TaskState::Running)
            .collect();
        for &t in &hosted {
            self.fail_task_inner(t);
        }
        if !hosted.is_empty() {
            let at = self.now + self.cfg.recovery.detection_ns;
            let fail_ns = self.now;
            self.push(at, Ev::Detect { tasks: hosted, fail_ns });
        }
    }

    fn fail_task_inner(&mut self, t: usize) {
        if self.tasks[t].state != TaskState::Running {
            return;
        }
        self.tasks[t].state = TaskState::Failed;
        self.tasks[t].busy = false;
        self.tasks[t].aligning = None;
        if self.tasks[t].cur.take().is_some() {
            self.counters.purged += 1;
        }
        let pending = std::mem::take(&mut self.tasks[t].pending);
        self.counters.purged += pending.len() as u64;
        if let Some(ci) = self.tasks[t].blocked_on.take() {
            self.channels[ci].waiters.retain(|&w| w != t);
        }
        // free the slot so a replacement can be allocated
        let tm = self.placement[t];
        if self.tms[tm].alive {
            self.tms[tm].free_slots += 1;
        }
        // wake producers parked on this task's input channels; their sends
        // will be dropped against the dead consumer
        let inputs: Vec<usize> = self.exec.task_inputs[t].clone();
        for ci in inputs {
            let waiters: Vec<usize> = self.channels[ci].waiters.drain(..).collect();
            for p in waiters {
                if self.tasks[p].blocked_on == Some(ci) {
                    self.tasks[p].blocked_on = None;
                    self.flush_pending(p);
                }
            }
        }
        // an open checkpoint cannot complete for this task
        if let Some(a) = &mut self.coord.open {
            if matches!(a.statuses[t], TaskCkptStatus::Pending) {
                a.resolve(t, TaskCkptStatus::Failed(FailCause::TaskFailed));
            }
        }
        self.maybe_finalize_open();
    }

    /// Fails a single task (internal error or scripted task-level fault).
    pub fn fail_task(&mut self, t: usize) {
        if self.tasks[t].state != TaskState::Running {
            return;
        }
        self.fail_task_inner(t);
        let at = self.now + self.cfg.recovery.detection_ns;
        let fail_ns = self.now;
        self.push(at, Ev::Detect { tasks: vec![t], fail_ns });
    }

    fn on_detect(&mut self, tasks: Vec<usize>, fail_ns: u64) {
        let still: Vec<usize> = tasks
            .into_iter()
            .filter(|&t| self.tasks[t].state == TaskState::Failed && self.tasks[t].plan.is_none())
            .collect();
        if still.is_empty() {
            return;
        }
        let strategy = self.cfg.recovery.strategy;
        let plan = plan_recovery(&still, strategy, &self.partition, self.cfg.gamma)
            .expect("strategy/gamma combination validated at config time");
        // cancel healthy plan members (region/full scopes)
        for &t in &plan.tasks {
            if self.tasks[t].state == TaskState::Running {
                self.fail_task_inner(t);
                self.tasks[t].state = TaskState::Canceled;
            }
        }
        let plan_idx = self.plans.len();
        self.plans.push(PlanRt {
            strategy,
            tasks: plan.tasks.clone(),
            fail_ns,
            detect_ns: self.now,
            remaining: plan.tasks.len(),
            dropped: 0,
            replayed: 0,
        });
        for &t in &plan.tasks {
            self.tasks[t].plan = Some(plan_idx);
            self.tasks[t].state = TaskState::Recovering;
            self.clear_task_inputs(t, strategy, plan_idx);
            self.push(self.now + self.cfg.recovery.reallocate_ns, Ev::AllocDone(t));
        }
    }

    fn clear_task_inputs(&mut self, t: usize, strategy: RecoveryStrategy, plan_idx: usize) {
        let inputs: Vec<usize> = self.exec.task_inputs[t].clone();
        for ci in inputs {
            let mut dropped = 0u64;
            let mut purged = 0u64;
            let drained: Vec<Item> = self.channels[ci].queue.drain(..).collect();
            let transit: Vec<Item> = self.channels[ci].in_transit.drain(..).collect();
            for item in drained.into_iter().chain(transit) {
                if let Item::Rec(_) = item {
                    // rewinding strategies re-produce these records from the
                    // restored source offsets; without rewind they are lost
                    if strategy == RecoveryStrategy::SingleTask {
                        dropped += 1;
                    } else {
                        purged += 1;
                    }
                }
            }
            self.channels[ci].rec_count = 0;
            self.counters.purged += purged;
            self.counters.dropped += dropped;
            self.plans[plan_idx].dropped += dropped;
            // producers blocked on the cleared channel can move again
            let waiters: Vec<usize> = self.channels[ci].waiters.drain(..).collect();
            for p in waiters {
                if self.tasks[p].blocked_on == Some(ci) {
                    self.tasks[p].blocked_on = None;
                    self.flush_pending(p);
                }
            }
        }
    }

    fn on_alloc_done(&mut self, t: usize) {
        if self.tasks[t].state != TaskState::Recovering {
            return;
        }
        // keep the original slot when its TM survives; otherwise take the
        // first alive TM with a free slot (spares included)
        let tm = self.placement[t];
        if !self.tms[tm].alive || self.tms[tm].free_slots == 0 {
            let repl = (0..self.tms.len()).find(|&m| self.tms[m].alive && self.tms[m].free_slots > 0);
            match repl {
                Some(m) => {
                    self.placement[t] = m;
                    self.tms[m].free_slots -= 1;
                }
                None => {
                    // no spare capacity: stall, time accrues into recovery
                    self.push(self.now + NS_PER_SEC, Ev::AllocDone(t));
                    return;
                }
            }
        } else {
            self.tms[tm].free_slots -= 1;
        }
        // resolve the restore source
        let strategy = self.cfg.recovery.strategy;
        let region = self.partition.task_to_region[t];
        let ckpt = match self.cfg.checkpoint.as_ref().map(|c| c.mode) {
            Some(CheckpointMode::Region) => self.registry.region_latest[region],
            Some(CheckpointMode::Global) => self.registry.global_latest,
            None => None,
        };
        let (data, needs_store) = match ckpt {
            Some(id) => {
                if !self.store.available {
                    // re-enter recovering with retry/backoff
                    self.free_slot_of(t);
                    self.push(self.now + self.cfg.recovery.retry_backoff_ns, Ev::AllocDone(t));
                    return;
                }
                (self.store.get(id, t).cloned(), true)
            }
            None => (None, false),
        };
        let _ = needs_store;
        let kind = self.wl.ops[self.tasks[t].op].kind;
        let data = data.unwrap_or_else(|| SnapshotData::new(initial_state(kind), 0));
        let rewind = strategy != RecoveryStrategy::SingleTask;
        let chunks = if data.state.entries() == 0 {
            0
        } else {
            self.cfg.recovery.restore_chunks
        };
        let lat = restore_resume_ns(
            self.cfg.recovery.restore_mode,
            chunks,
            self.cfg.recovery.chunk_fetch_ns,
            self.cfg.recovery.manifest_fetch_ns,
        );
        self.tasks[t].restore_pending = Some((data, rewind));
        self.push(self.now + lat, Ev::RestoreDone(t));
    }

    fn free_slot_of(&mut self, t: usize) {
        let tm = self.placement[t];
        if self.tms[tm].alive {
            self.tms[tm].free_slots += 1;
        }
    }

    fn on_restore_done(&mut self, t: usize) {
        if self.tasks[t].state != TaskState::Recovering {
            return;
        }
        let Some((data, rewind)) = self.tasks[t].restore_pending.take() else { return };
        let kind = self.wl.ops[self.tasks[t].op].kind;
        let plan_idx = self.tasks[t].plan;
        {
            let task = &mut self.tasks[t];
            task.ostate = data.state;
            if kind == OpKind::Source && rewind {
                let replay = task.src_offset.saturating_sub(data.src_offset);
                task.src_offset = data.src_offset;
                if let Some(pi) = plan_idx {
                    // attributed below once we can re-borrow
                    let _ = pi;
                }
                self.counters.replayed += replay;
                if let Some(pi) = plan_idx {
                    self.plans[pi].replayed += replay;
                }
            }
        }
        // SingleTask sources resume from the committed queue position: no
        // rewind, no duplicates
        let task = &mut self.tasks[t];
        task.epoch += 1;
        task.state = TaskState::Running;
        task.busy = false;
        task.in_rr = 0;
        task.aligning = None;
        if self.cfg.recovery.restore_mode == RestoreMode::Lazy {
            let chunks = self.cfg.recovery.restore_chunks as usize;
            if task.ostate.entries() > 0 && chunks > 0 {
                task.lazy = Some(LazyRt { resident: vec![false; chunks], remaining: chunks });
                self.push(self.now + self.cfg.recovery.chunk_fetch_ns, Ev::Prefetch(t));
            }
        }
        if kind == OpKind::Source {
            let (rate, budget) = self.source_params(t);
            if self.tasks[t].src_offset < budget {
                let at = self.now + self.source_period_ns(t, rate).max(1);
                self.schedule_emit(t, at);
            }
        } else {
            self.try_start(t);
        }
        // producers that waited out the restore can deliver again
        let inputs: Vec<usize> = self.exec.task_inputs[t].clone();
        for ci in inputs {
            let waiters: Vec<usize> = self.channels[ci].waiters.drain(..).collect();
            for p in waiters {
                if self.tasks[p].blocked_on == Some(ci) {
                    self.tasks[p].blocked_on = None;
                    self.flush_pending(p);
                }
            }
        }
        if let Some(pi) = plan_idx {
            self.tasks[t].plan = None;
            self.plans[pi].remaining -= 1;
            if self.plans[pi].remaining == 0 {
                let p = &self.plans[pi];
                self.metrics.recoveries.push(RecoveryReport {
                    fail_ns: p.fail_ns,
                    detect_ns: p.detect_ns,
                    done_ns: self.now,
                    strategy: p.strategy,
                    scope: format!("{} task(s)", p.tasks.len()),
                    tasks: p.tasks.clone(),
                    recovery_time_ns: self.now - p.detect_ns,
                    downtime_ns: self.now - p.fail_ns,
                    records_dropped: p.dropped,
                    records_replayed: p.replayed,
                });
            }
        }
    }

    fn on_prefetch(&mut self, t: usize) {
        if self.tasks[t].state != TaskState::Running {
            return;
        }
        let Some(lz) = &mut self.tasks[t].lazy else { return };
        if let Some(idx) = lz.resident.iter().position(|r| !r) {
            lz.resident[idx] = true;
            lz.remaining -= 1;
        }
        if lz.remaining == 0 {
            self.tasks[t].lazy = None;
        } else {
            self.push(self.now + self.cfg.recovery.chunk_fetch_ns, Ev::Prefetch(t));
        }
    }

    pub fn lazy_chunks_remaining(&self, t: usize) -> usize {
        self.tasks[t].lazy.as_ref().map(|l| l.remaining).unwrap_or(0)
    }

    // -- high availability ---------------------------------------------------

    fn ha_views(&self) -> (StoreView, StoreView) {
        let p = if self.ha.primary.available {
            StoreView::Available(self.ha.primary.rec)
        } else {
            StoreView::Unavailable
        };
        let f = if self.ha.fallback.available {
            StoreView::Available(self.ha.fallback.rec)
        } else {
            StoreView::Unavailable
        };
        (p, f)
    }

    fn on_kill_jm(&mut self) {
        let (p, f) = self.ha_views();
        match resolve_leader(&p, &f, self.ha.cached.as_ref()) {
            LeaderResolution::Leader(rec) => {
                // a standby JM takes over with a fresh term and writes the
                // record back to every available store
                let new = LeaderRecord { leader: rec.leader + 1, term: rec.term + 1 };
                if self.ha.primary.available {
                    self.ha.primary.rec = Some(new);
                }
                if self.ha.fallback.available {
                    self.ha.fallback.rec = Some(new);
                }
                self.ha.cached = Some(new);
                self.ha.jm_failovers += 1;
                // coordination blackout: the in-flight attempt is lost
                if let Some(attempt) = self.coord.open.take() {
                    self.finalize_open(attempt);
                }
                self.coord.paused_until = self.now + self.cfg.jm_failover_pause_ns;
            }
            LeaderResolution::TerminateJobs(reason) => {
                self.terminate(format!("leader resolution: {reason:?}"));
            }
        }
    }

    fn on_ha_check(&mut self) {
        let (p, f) = self.ha_views();
        if let LeaderResolution::TerminateJobs(reason) =
            resolve_leader(&p, &f, self.ha.cached.as_ref())
        {
            self.terminate(format!("ha check: {reason:?}"));
            return;
        }
        if self.now + self.cfg.ha_check_interval_ns < self.cfg.duration_ns {
            self.push(self.now + self.cfg.ha_check_interval_ns, Ev::HaCheck);
        }
    }

    fn terminate(&mut self, reason: String) {
        self.terminated = true;
        self.metrics.terminated = true;
        self.metrics.termination_reason = Some(reason);
        self.queue.clear();
    }
}

fn initial_state(kind: OpKind) -> OpState {
    match kind {
        OpKind::Source => OpState::None,
        OpKind::WindowCount => OpState::Window { counts: BTreeMap::new(), window_start: 0 },
        OpKind::Join => OpState::Join { pending: BTreeMap::new() },
        // terminal operators keep a ledger
        _ => OpState::Counts(BTreeMap::new()),
    }
}

fn ev_tag(ev: &Ev) -> u64 {
    match ev {
        Ev::SourceEmit(t) => 1 ^ ((*t as u64) << 8),
        Ev::Finish(t) => 2 ^ ((*t as u64) << 8),
        Ev::Arrive(c) => 3 ^ ((*c as u64) << 8),
        Ev::WindowFlush(t) => 4 ^ ((*t as u64) << 8),
        Ev::JoinSweep(t) => 5 ^ ((*t as u64) << 8),
        Ev::CkptTrigger => 6,
        Ev::CkptDeadline(id) => 7 ^ (id << 8),
        Ev::UploadDone { task, ckpt } => 8 ^ ((*task as u64) << 8) ^ (ckpt << 24),
        Ev::Inject(i) => 9 ^ ((*i as u64) << 8),
        Ev::Expire(i) => 10 ^ ((*i as u64) << 8),
        Ev::Detect { tasks, .. } => 11 ^ ((tasks.len() as u64) << 8),
        Ev::AllocDone(t) => 12 ^ ((*t as u64) << 8),
        Ev::RestoreDone(t) => 13 ^ ((*t as u64) << 8),
        Ev::Prefetch(t) => 14 ^ ((*t as u64) << 8),
        Ev::HaCheck => 15,
    }
}
