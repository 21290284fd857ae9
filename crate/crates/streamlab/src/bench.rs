//! Workload catalog, run orchestration, metrics aggregation, SLO evaluation,
//! report file writers, and host-clock microbenchmarks.
//!
//! A [`RunConfig`] fully determines a run: it names a workload shape from the
//! catalog, an engine configuration, an optional fault plan, and a seed. The
//! same config and seed always produce the same [`Summary`], byte for byte.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chaos::{FaultPlan, FaultSpec};
use crate::checkpoint::AttemptOutcome;
use crate::graph::{chain, expand, EdgeSpec, LogicalGraph, OpKind, OperatorSpec};
use crate::recovery::{Gamma, RecoveryReport};
use crate::runtime::{
    Engine, EngineConfig, EngineError, KeyGen, OpBehavior, RateProfile, WorkloadRuntime,
};
use crate::shuffle::{route, RouteCtx, RouteState, ShuffleStrategy};
use crate::util::{secs, stable_hash2, NS_PER_SEC};

// ---------------------------------------------------------------------------
// Workload catalog
// ---------------------------------------------------------------------------

/// The four canned workload shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    /// Source feeding a stateless filter that drops a fraction of records.
    Q2Filter,
    /// Source feeding a keyed tumbling-window counter and a sink.
    Q12WindowCount,
    /// Identity transfer from a source into a sink ledger.
    DataSync,
    /// Two sources joined on key with a match timeout, then a sink.
    SampleStitch,
}

/// Source rate over virtual time: a single constant or stepped segments of
/// `(start_s, rate_per_s)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSpec {
    Constant(f64),
    Steps(Vec<(f64, f64)>),
}

impl RateSpec {
    pub fn to_profile(&self) -> RateProfile {
        match self {
            RateSpec::Constant(r) => RateProfile::constant(*r),
            RateSpec::Steps(v) => RateProfile {
                segments: v.iter().map(|&(t, r)| (secs(t), r)).collect(),
            },
        }
    }

    fn positive(&self) -> bool {
        match self {
            RateSpec::Constant(r) => *r > 0.0,
            RateSpec::Steps(v) => !v.is_empty() && v.iter().all(|&(_, r)| r > 0.0),
        }
    }
}

/// Shape and intensity of the generated stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// Instances per source operator; the per-instance rate is `rate`.
    pub source_parallelism: u32,
    /// Parallelism of the downstream (non-source) operators.
    pub parallelism: u32,
    pub rate: RateSpec,
    /// Key skew exponent; 0 = uniform.
    pub zipf_s: f64,
    pub key_space: u64,
    pub duration_s: f64,
    /// Per-record service time of non-source operators, microseconds.
    pub service_us: u64,
    /// Fraction of records a filter operator passes through.
    pub filter_pass: f64,
    pub window_s: f64,
    pub join_timeout_s: f64,
    /// Overrides the routing strategy of the main source→operator edge.
    pub shuffle: Option<ShuffleStrategy>,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            kind: WorkloadKind::Q2Filter,
            source_parallelism: 4,
            parallelism: 4,
            rate: RateSpec::Constant(1_000.0),
            zipf_s: 1.0,
            key_space: 1 << 16,
            duration_s: 60.0,
            service_us: 100,
            filter_pass: 0.8,
            window_s: 5.0,
            join_timeout_s: 30.0,
            shuffle: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("graph expansion failed: {0}")]
    Graph(String),
    #[error("engine error: {0}")]
    Engine(#[from] EngineError),
    #[error("conservation audit failed: {0}")]
    Audit(String),
}

fn op(id: &str, kind: OpKind, p: u32) -> OperatorSpec {
    OperatorSpec { id: id.to_string(), kind, parallelism: p, selectivity: 1.0 }
}

/// Builds the logical graph for a workload shape.
pub fn build_logical(spec: &WorkloadSpec) -> LogicalGraph {
    let p1 = spec.source_parallelism;
    let p2 = spec.parallelism;
    match spec.kind {
        WorkloadKind::Q2Filter => chain(
            vec![
                ("source", OpKind::Source, p1, 1.0),
                ("filter", OpKind::Filter, p2, spec.filter_pass),
            ],
            vec![spec.shuffle.unwrap_or(ShuffleStrategy::Rebalance)],
        ),
        WorkloadKind::Q12WindowCount => chain(
            vec![
                ("source", OpKind::Source, p1, 1.0),
                ("window", OpKind::WindowCount, p2, 1.0),
                ("sink", OpKind::Sink, p2, 1.0),
            ],
            vec![spec.shuffle.unwrap_or(ShuffleStrategy::KeyHash), ShuffleStrategy::KeyHash],
        ),
        WorkloadKind::DataSync => chain(
            vec![("source", OpKind::Source, p1, 1.0), ("sink", OpKind::Sink, p1, 1.0)],
            vec![spec.shuffle.unwrap_or(ShuffleStrategy::Forward)],
        ),
        WorkloadKind::SampleStitch => LogicalGraph {
            operators: vec![
                op("left", OpKind::Source, p1),
                op("right", OpKind::Source, p1),
                op("join", OpKind::Join, p2),
                op("sink", OpKind::Sink, p2),
            ],
            edges: vec![
                EdgeSpec {
                    from: "left".into(),
                    to: "join".into(),
                    strategy: ShuffleStrategy::KeyHash,
                },
                EdgeSpec {
                    from: "right".into(),
                    to: "join".into(),
                    strategy: ShuffleStrategy::KeyHash,
                },
                EdgeSpec {
                    from: "join".into(),
                    to: "sink".into(),
                    strategy: spec.shuffle.unwrap_or(ShuffleStrategy::Rebalance),
                },
            ],
        },
    }
}

/// Builds the per-operator runtime behavior and source rate profiles.
pub fn build_runtime(spec: &WorkloadSpec, logical: &LogicalGraph, seed: u64) -> WorkloadRuntime {
    let svc = spec.service_us * 1_000;
    let ops: Vec<OpBehavior> = logical
        .operators
        .iter()
        .map(|o| {
            let mut b = OpBehavior::new(o.kind, svc);
            if o.kind == OpKind::Filter {
                b.filter_pass = spec.filter_pass;
            }
            b.window_ns = secs(spec.window_s);
            b.join_timeout_ns = secs(spec.join_timeout_s);
            b
        })
        .collect();
    let mut rates = BTreeMap::new();
    for (i, o) in logical.operators.iter().enumerate() {
        if o.kind == OpKind::Source {
            rates.insert(i, spec.rate.to_profile());
        }
    }
    WorkloadRuntime { ops, rates, keygen: KeyGen::new(spec.key_space, spec.zipf_s, seed) }
}

fn validate(spec: &WorkloadSpec) -> Result<(), RunError> {
    if !spec.rate.positive() {
        return Err(RunError::InvalidWorkload("rates must be positive".into()));
    }
    if spec.duration_s <= 0.0 {
        return Err(RunError::InvalidWorkload("duration must be positive".into()));
    }
    if spec.source_parallelism == 0 || spec.parallelism == 0 {
        return Err(RunError::InvalidWorkload("parallelism must be positive".into()));
    }
    if !(spec.filter_pass > 0.0 && spec.filter_pass <= 1.0) {
        return Err(RunError::InvalidWorkload("filter_pass must be in (0, 1]".into()));
    }
    if spec.key_space == 0 {
        return Err(RunError::InvalidWorkload("key_space must be positive".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Run configuration and SLO targets
// ---------------------------------------------------------------------------

/// Completeness/latency/recovery bounds for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SloTarget {
    pub gamma: Gamma,
    /// p99 end-to-end latency bound, evaluated outside recovery windows.
    pub lambda_max_ms: u64,
    /// Upper bound on any single recovery time.
    pub tau_max_ms: u64,
    /// Permitted drops under a partial completeness target.
    #[serde(default)]
    pub max_dropped: u64,
}

/// Everything a run needs. `seed` is mandatory: runs never fall back to
/// wall-clock entropy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default = "default_slots")]
    pub slots_per_tm: u32,
    #[serde(default)]
    pub slo: Option<SloTarget>,
    /// Inline fault plan; merged with any plan file loaded by the CLI.
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    /// Path to a fault plan JSON file, resolved by the CLI before running.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_plan: Option<String>,
}

fn default_slots() -> u32 {
    2
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workload: WorkloadSpec::default(),
            engine: EngineConfig::default(),
            slots_per_tm: 2,
            slo: None,
            faults: Vec::new(),
            fault_plan: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Deterministic aggregate view of one run. Serializes with a fixed field
/// order so equal runs produce byte-identical JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub workload: WorkloadKind,
    pub duration_s: f64,
    pub emitted: u64,
    pub consumed: u64,
    pub absorbed: u64,
    pub dropped: u64,
    pub purged: u64,
    pub replayed: u64,
    pub duplicates: u64,
    pub inherent_misses: u64,
    pub qps_mean: f64,
    pub qps_min: u64,
    pub latency_p50_ns: u64,
    pub latency_p99_ns: u64,
    pub ckpt_attempts: u64,
    pub ckpt_successes: u64,
    pub ckpt_success_pct: f64,
    pub ckpt_merged: u64,
    pub ckpt_merged_pct: f64,
    pub ckpt_skipped: u64,
    pub recoveries: u64,
    pub max_recovery_time_ns: u64,
    pub max_downtime_ns: u64,
    pub jm_failovers: u32,
    pub ledger_total: u64,
    pub ledger_hash: u64,
    pub trace_digest: u64,
    pub event_count: u64,
    pub terminated: bool,
    pub termination_reason: Option<String>,
}

/// Full output of one run: the summary plus the raw series it was built from.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub summary: Summary,
    /// Records consumed per 1 s virtual bucket, padded to the run duration.
    pub qps_buckets: Vec<u64>,
    /// (consume time, end-to-end latency) pairs in virtual ns.
    pub latencies: Vec<(u64, u64)>,
    pub backlog: Vec<(u64, u64)>,
    pub checkpoints: Vec<AttemptOutcome>,
    pub recoveries: Vec<RecoveryReport>,
    pub ledger: BTreeMap<u64, u64>,
    /// The exact config the run used, for snapshot/reproduce.
    pub resolved: RunConfig,
}

/// Pass/fail verdict against an [`SloTarget`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SloVerdict {
    pub completeness_ok: bool,
    pub latency_ok: bool,
    pub recovery_ok: bool,
    pub overall: bool,
    pub detail: String,
}

fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn ledger_hash(ledger: &BTreeMap<u64, u64>) -> u64 {
    let mut h = 0u64;
    for (&k, &v) in ledger {
        h = stable_hash2(h ^ k, v, 0x1ed6e2);
    }
    h
}

/// Executes a configured run end to end and aggregates its metrics.
pub fn run(cfg: &RunConfig) -> Result<RunReport, RunError> {
    validate(&cfg.workload)?;
    let logical = build_logical(&cfg.workload);
    let wl = build_runtime(&cfg.workload, &logical, cfg.seed);
    let exec = expand(&logical, cfg.slots_per_tm).map_err(|e| RunError::Graph(e.to_string()))?;
    let mut ecfg = cfg.engine.clone();
    ecfg.duration_ns = secs(cfg.workload.duration_s);
    let mut eng = Engine::new(exec, logical, wl, ecfg, cfg.seed);
    eng.start();
    if !cfg.faults.is_empty() {
        eng.arm_plan(&FaultPlan { specs: cfg.faults.clone(), seed: cfg.seed });
    }
    // generous drain window: recoveries and window flushes finish well within it
    let cap = eng.cfg.duration_ns.saturating_mul(2) + 600 * NS_PER_SEC;
    eng.run_to_quiescence(cap)?;
    eng.audit().map_err(RunError::Audit)?;
    Ok(collect(&eng, cfg))
}

fn collect(eng: &Engine, cfg: &RunConfig) -> RunReport {
    let duration_s = cfg.workload.duration_s;
    let nbuckets = duration_s.ceil() as usize;
    let mut qps = eng.metrics.qps_buckets.clone();
    if qps.len() < nbuckets {
        qps.resize(nbuckets, 0);
    }
    let steady = &qps[..nbuckets.min(qps.len())];
    let qps_mean = if steady.is_empty() {
        0.0
    } else {
        steady.iter().sum::<u64>() as f64 / steady.len() as f64
    };
    let qps_min = steady.iter().copied().min().unwrap_or(0);

    let mut lats: Vec<u64> = eng.metrics.latencies.iter().map(|&(_, l)| l).collect();
    lats.sort_unstable();
    let p50 = percentile(&lats, 0.50);
    let p99 = percentile(&lats, 0.99);

    let ckpts = eng.checkpoint_records();
    let attempts = ckpts.len() as u64;
    let successes = ckpts.iter().filter(|a| a.success).count() as u64;
    let merged = ckpts.iter().filter(|a| a.merged_ok == Some(true)).count() as u64;
    let pct = |num: u64| if attempts == 0 { 0.0 } else { 100.0 * num as f64 / attempts as f64 };

    let recs = &eng.metrics.recoveries;
    let ledger = eng.ledger();
    let c = &eng.counters;

    let summary = Summary {
        seed: cfg.seed,
        workload: cfg.workload.kind,
        duration_s,
        emitted: c.emitted,
        consumed: c.consumed,
        absorbed: c.absorbed,
        dropped: c.dropped,
        purged: c.purged,
        replayed: c.replayed,
        duplicates: c.duplicates,
        inherent_misses: c.inherent_misses,
        qps_mean,
        qps_min,
        latency_p50_ns: p50,
        latency_p99_ns: p99,
        ckpt_attempts: attempts,
        ckpt_successes: successes,
        ckpt_success_pct: pct(successes),
        ckpt_merged: merged,
        ckpt_merged_pct: pct(merged),
        ckpt_skipped: eng.checkpoints_skipped(),
        recoveries: recs.len() as u64,
        max_recovery_time_ns: recs.iter().map(|r| r.recovery_time_ns).max().unwrap_or(0),
        max_downtime_ns: recs.iter().map(|r| r.downtime_ns).max().unwrap_or(0),
        jm_failovers: eng.jm_failovers(),
        ledger_total: ledger.values().sum(),
        ledger_hash: ledger_hash(&ledger),
        trace_digest: eng.trace_digest(),
        event_count: eng.event_count(),
        terminated: eng.terminated(),
        termination_reason: eng.metrics.termination_reason.clone(),
    };

    RunReport {
        summary,
        qps_buckets: qps,
        latencies: eng.metrics.latencies.clone(),
        backlog: eng.metrics.backlog_samples.clone(),
        checkpoints: ckpts.to_vec(),
        recoveries: recs.clone(),
        ledger,
        resolved: cfg.clone(),
    }
}

// ---------------------------------------------------------------------------
// SLO evaluation
// ---------------------------------------------------------------------------

/// Pure function of (report, target): completeness from drop counts, latency
/// from the p99 outside recovery windows, recovery from the worst event.
pub fn evaluate_slo(report: &RunReport, target: &SloTarget) -> SloVerdict {
    let s = &report.summary;
    let (completeness_ok, mut detail) = match target.gamma {
        Gamma::Full => {
            let ok = s.dropped == 0 && s.duplicates == 0;
            (ok, if ok { String::new() } else { format!("dropped={} duplicates={}", s.dropped, s.duplicates) })
        }
        Gamma::Partial => {
            let ok = s.dropped <= target.max_dropped;
            (ok, if ok { String::new() } else { format!("dropped={} > bound {}", s.dropped, target.max_dropped) })
        }
    };

    let windows: Vec<(u64, u64)> =
        report.recoveries.iter().map(|r| (r.fail_ns, r.done_ns)).collect();
    let mut clean: Vec<u64> = report
        .latencies
        .iter()
        .filter(|&&(t, _)| !windows.iter().any(|&(a, b)| t >= a && t <= b))
        .map(|&(_, l)| l)
        .collect();
    clean.sort_unstable();
    let p99 = percentile(&clean, 0.99);
    let lambda_max = target.lambda_max_ms * 1_000_000;
    let latency_ok = p99 <= lambda_max;
    if !latency_ok {
        if !detail.is_empty() {
            detail.push_str("; ");
        }
        detail.push_str(&format!("p99 {} ns > lambda_max {} ns", p99, lambda_max));
    }

    let tau_max = target.tau_max_ms * 1_000_000;
    let worst = s.max_recovery_time_ns;
    let recovery_ok = worst <= tau_max;
    if !recovery_ok {
        if !detail.is_empty() {
            detail.push_str("; ");
        }
        detail.push_str(&format!("recovery_time {} ns > tau_max {} ns", worst, tau_max));
    }

    let overall = completeness_ok && latency_ok && recovery_ok;
    if overall {
        detail = "all bounds met".into();
    }
    SloVerdict { completeness_ok, latency_ok, recovery_ok, overall, detail }
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

/// Writes summary.json, config.json, metrics.jsonl, checkpoints.jsonl,
/// recovery.jsonl, series.csv, and (when present) verdict.json into `dir`.
pub fn write_report(
    dir: &Path,
    report: &RunReport,
    verdict: Option<&SloVerdict>,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let pretty = |v: String| v + "\n";
    std::fs::write(
        dir.join("summary.json"),
        pretty(serde_json::to_string_pretty(&report.summary).unwrap()),
    )?;
    std::fs::write(
        dir.join("config.json"),
        pretty(serde_json::to_string_pretty(&report.resolved).unwrap()),
    )?;

    let mut metrics = std::fs::File::create(dir.join("metrics.jsonl"))?;
    for (i, q) in report.qps_buckets.iter().enumerate() {
        writeln!(metrics, "{{\"series\":\"qps\",\"t_s\":{},\"value\":{}}}", i, q)?;
    }
    // per-second p99 keeps the latency series bounded regardless of volume
    let mut by_bucket: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for &(t, l) in &report.latencies {
        by_bucket.entry(t / NS_PER_SEC).or_default().push(l);
    }
    for (t, mut ls) in by_bucket {
        ls.sort_unstable();
        let p99 = percentile(&ls, 0.99);
        writeln!(metrics, "{{\"series\":\"latency_p99_ns\",\"t_s\":{},\"value\":{}}}", t, p99)?;
    }
    for &(t, b) in &report.backlog {
        writeln!(metrics, "{{\"series\":\"backlog\",\"t_ns\":{},\"value\":{}}}", t, b)?;
    }

    let mut ck = std::fs::File::create(dir.join("checkpoints.jsonl"))?;
    for a in &report.checkpoints {
        writeln!(ck, "{}", serde_json::to_string(a).unwrap())?;
    }
    let mut rc = std::fs::File::create(dir.join("recovery.jsonl"))?;
    for r in &report.recoveries {
        writeln!(rc, "{}", serde_json::to_string(r).unwrap())?;
    }

    let mut csv = String::from("t_s,qps\n");
    for (i, q) in report.qps_buckets.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i, q));
    }
    std::fs::write(dir.join("series.csv"), csv)?;

    if let Some(v) = verdict {
        std::fs::write(
            dir.join("verdict.json"),
            pretty(serde_json::to_string_pretty(v).unwrap()),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Microbenchmarks (host wall clock)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MicrobenchComponent {
    StateStore,
    Routing,
    Scheduler,
}

impl std::str::FromStr for MicrobenchComponent {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "state_store" => Ok(MicrobenchComponent::StateStore),
            "routing" => Ok(MicrobenchComponent::Routing),
            "scheduler" => Ok(MicrobenchComponent::Scheduler),
            other => Err(format!(
                "unknown component '{}' (expected state_store, routing, or scheduler)",
                other
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MicrobenchRow {
    pub component: String,
    pub case: String,
    pub metric: String,
    /// Mean over the repetitions.
    pub value: f64,
    /// Coefficient of variation across the repetitions.
    pub cv: f64,
    pub repetitions: u32,
}

const REPS: usize = 5;

fn mean_cv(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
    (mean, cv)
}

fn bench_reps(mut f: impl FnMut() -> f64) -> (f64, f64) {
    let samples: Vec<f64> = (0..REPS).map(|_| f()).collect();
    mean_cv(&samples)
}

fn row(component: &str, case: &str, metric: &str, value: f64, cv: f64) -> MicrobenchRow {
    MicrobenchRow {
        component: component.into(),
        case: case.into(),
        metric: metric.into(),
        value,
        cv,
        repetitions: REPS as u32,
    }
}

fn bench_state_store() -> Vec<MicrobenchRow> {
    let mut rows = Vec::new();
    const OPS: u64 = 200_000;
    for &key_space in &[1_000u64, 10_000, 100_000, 1_000_000] {
        let (put, put_cv) = bench_reps(|| {
            let mut m: std::collections::HashMap<u64, u64> = std::collections::HashMap::new();
            let t0 = Instant::now();
            for i in 0..OPS {
                let k = stable_hash2(i, 0, 7) % key_space;
                *m.entry(k).or_insert(0) += 1;
            }
            OPS as f64 / t0.elapsed().as_secs_f64()
        });
        rows.push(row("state_store", &format!("keys_{}", key_space), "put_ops_per_s", put, put_cv));
        let mut m: std::collections::HashMap<u64, u64> = std::collections::HashMap::new();
        for i in 0..OPS {
            m.insert(stable_hash2(i, 0, 7) % key_space, i);
        }
        let (get, get_cv) = bench_reps(|| {
            let t0 = Instant::now();
            let mut acc = 0u64;
            for i in 0..OPS {
                let k = stable_hash2(i, 1, 7) % key_space;
                acc = acc.wrapping_add(m.get(&k).copied().unwrap_or(0));
            }
            std::hint::black_box(acc);
            OPS as f64 / t0.elapsed().as_secs_f64()
        });
        rows.push(row("state_store", &format!("keys_{}", key_space), "get_ops_per_s", get, get_cv));
    }
    rows
}

fn bench_routing() -> Vec<MicrobenchRow> {
    const N: u64 = 200_000;
    let down = 16usize;
    let backlogs: Vec<u32> = (0..down as u32).map(|i| i * 3 % 40).collect();
    let loads: Vec<f64> = (0..down).map(|i| (i as f64 / down as f64) * 0.9).collect();
    let strategies: Vec<(&str, ShuffleStrategy)> = vec![
        ("rebalance", ShuffleStrategy::Rebalance),
        ("key_hash", ShuffleStrategy::KeyHash),
        ("backlog_aware", ShuffleStrategy::BacklogAware { threshold: 32 }),
    ];
    let mut rows = Vec::new();
    for (name, strat) in strategies {
        let (v, cv) = bench_reps(|| {
            let mut state = RouteState::default();
            let ctx = RouteCtx {
                producer_sub: 0,
                up: 1,
                down: down as u32,
                candidates: down,
                backlogs: &backlogs,
                loads: &loads,
                seed: 7,
            };
            let t0 = Instant::now();
            let mut acc = 0usize;
            for i in 0..N {
                acc += route(&strat, &mut state, &ctx, Some(stable_hash2(i, 2, 7))).unwrap();
            }
            std::hint::black_box(acc);
            N as f64 / t0.elapsed().as_secs_f64()
        });
        rows.push(row("routing", name, "decisions_per_s", v, cv));
    }
    rows
}

fn bench_scheduler() -> Vec<MicrobenchRow> {
    let cfg = RunConfig {
        seed: 7,
        workload: WorkloadSpec {
            kind: WorkloadKind::DataSync,
            source_parallelism: 4,
            parallelism: 4,
            rate: RateSpec::Constant(5_000.0),
            duration_s: 5.0,
            service_us: 50,
            ..WorkloadSpec::default()
        },
        ..RunConfig::default()
    };
    let (v, cv) = bench_reps(|| {
        let logical = build_logical(&cfg.workload);
        let wl = build_runtime(&cfg.workload, &logical, cfg.seed);
        let exec = expand(&logical, cfg.slots_per_tm).unwrap();
        let mut ecfg = cfg.engine.clone();
        ecfg.duration_ns = secs(cfg.workload.duration_s);
        let mut eng = Engine::new(exec, logical, wl, ecfg, cfg.seed);
        eng.start();
        let t0 = Instant::now();
        eng.run_to_quiescence(secs(cfg.workload.duration_s) * 2 + 60 * NS_PER_SEC).unwrap();
        eng.event_count() as f64 / t0.elapsed().as_secs_f64()
    });
    vec![row("scheduler", "data_sync_4x4", "events_per_s", v, cv)]
}

/// Wall-clock throughput measurements for the engine's hot paths, reported
/// with cross-repetition variance for regression tracking.
pub fn run_microbench(component: MicrobenchComponent) -> Vec<MicrobenchRow> {
    match component {
        MicrobenchComponent::StateStore => bench_state_store(),
        MicrobenchComponent::Routing => bench_routing(),
        MicrobenchComponent::Scheduler => bench_scheduler(),
    }
}
