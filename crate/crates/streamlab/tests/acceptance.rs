//! End-to-end acceptance scenarios. Each test prints exactly one
//! `ACCEPTANCE <n> ...: PASS|FAIL` line so the suite can be skimmed from the
//! test log (run with `--nocapture` to see the lines for passing tests).

use std::panic::{catch_unwind, resume_unwind};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use streamlab::autoscale::{
    run_control_loop, AutoscaleConfig, Guard, GuardDecision, HoldReason, ScalePlant,
};
use streamlab::bench::{run, RateSpec, RunConfig, WorkloadKind, WorkloadSpec};
use streamlab::chaos::{FaultKind, FaultSpec, StoreSel, TargetSel, RANDOM};
use streamlab::checkpoint::{predict_global_success, CheckpointMode};
use streamlab::control::{
    hot_update, resolve_leader, run_startup, submit_with_retry, AllocModel, AttemptBehavior,
    CostModel, LeaderRecord, LeaderResolution, Mitigation, RetryPolicy, StartupParams,
    StoreView, SubmitServer, TerminateReason,
};
use streamlab::recovery::{Gamma, RecoveryStrategy};
use streamlab::runtime::CkptConfig;
use streamlab::util::{secs, VDuration, NS_PER_SEC};

/// Runs a criterion body and prints its single pass/fail line.
fn criterion(n: u32, desc: &str, body: impl FnOnce() + std::panic::UnwindSafe) {
    match catch_unwind(body) {
        Ok(()) => println!("ACCEPTANCE {} ({}): PASS", n, desc),
        Err(e) => {
            println!("ACCEPTANCE {} ({}): FAIL", n, desc);
            resume_unwind(e);
        }
    }
}

fn within_pp(a: f64, b: f64, pp: f64) -> bool {
    (a - b).abs() <= pp / 100.0
}

// ---------------------------------------------------------------------------
// 1. Region vs global checkpointing under a slow snapshot store
// ---------------------------------------------------------------------------

fn checkpoint_store_cfg(mode: CheckpointMode) -> RunConfig {
    // 8 forward source->sink pipelines = 8 independent regions, 16 tasks;
    // 420 checkpoint attempts at a 30 s interval
    let duration_s = 420.0 * 30.0;
    let mut cfg = RunConfig {
        seed: 1,
        workload: WorkloadSpec {
            kind: WorkloadKind::DataSync,
            source_parallelism: 8,
            parallelism: 8,
            rate: RateSpec::Constant(2.0),
            duration_s,
            service_us: 100,
            key_space: 64,
            ..WorkloadSpec::default()
        },
        ..RunConfig::default()
    };
    cfg.engine.checkpoint =
        Some(CkptConfig { mode, interval_ns: secs(30.0), deadline_ns: 0 });
    // each upload independently delayed past the 30 s deadline with p=0.05
    cfg.faults = vec![FaultSpec {
        at: VDuration(0),
        kind: FaultKind::SlowStore { p_slow: 0.05, added_delay: VDuration(secs(60.0)) },
        duration: VDuration(secs(duration_s)),
    }];
    cfg
}

#[test]
fn criterion_1_region_vs_global_checkpoint_success() {
    criterion(1, "region vs global checkpoint success under slow store", || {
        let t0 = Instant::now();
        let global = run(&checkpoint_store_cfg(CheckpointMode::Global)).unwrap();
        let region = run(&checkpoint_store_cfg(CheckpointMode::Region)).unwrap();
        assert!(global.summary.ckpt_attempts >= 400, "only {} attempts", global.summary.ckpt_attempts);

        // independent oracle: an attempt succeeds iff none of the 16 uploads
        // draws the 5% slow path
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let trials = 200_000u64;
        let ok = (0..trials).filter(|_| (0..16).all(|_| rng.gen::<f64>() >= 0.05)).count();
        let oracle = ok as f64 / trials as f64;
        assert!(within_pp(oracle, predict_global_success(0.05, 16), 1.0));

        let global_rate = global.summary.ckpt_success_pct / 100.0;
        let merged_rate = region.summary.ckpt_merged_pct / 100.0;
        assert!(
            within_pp(global_rate, oracle, 3.0),
            "global success {:.3} vs oracle {:.3}",
            global_rate,
            oracle
        );
        assert!(
            merged_rate >= global_rate + 0.25,
            "merged {:.3} not >= global {:.3} + 25pp",
            merged_rate,
            global_rate
        );
        assert!(t0.elapsed() < Duration::from_secs(60), "took {:?}", t0.elapsed());
    });
}

// ---------------------------------------------------------------------------
// 2. Closed-form global success probability at scale
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_global_success_formula_at_scale() {
    criterion(2, "global success with 10^4 uploads at p=1e-4", || {
        let t0 = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let failures_per_attempt = Binomial::new(10_000, 1e-4).unwrap();
        let attempts = 10_000u64;
        let ok = (0..attempts).filter(|_| failures_per_attempt.sample(&mut rng) == 0).count();
        let empirical = ok as f64 / attempts as f64;
        let analytic = predict_global_success(1e-4, 10_000);
        assert!(within_pp(analytic, 0.3679, 0.1));
        assert!(
            within_pp(empirical, 0.3679, 2.0),
            "empirical {:.4} vs 0.3679",
            empirical
        );
        assert!(t0.elapsed() < Duration::from_secs(30), "took {:?}", t0.elapsed());
    });
}

// ---------------------------------------------------------------------------
// 3. Backlog-aware shuffle vs round-robin under one straggler
// ---------------------------------------------------------------------------

fn straggler_cfg(shuffle: streamlab::shuffle::ShuffleStrategy) -> RunConfig {
    RunConfig {
        seed: 3,
        workload: WorkloadSpec {
            kind: WorkloadKind::Q2Filter,
            source_parallelism: 1,
            parallelism: 8,
            rate: RateSpec::Constant(2_000.0),
            duration_s: 60.0,
            service_us: 1_000, // healthy consumer rate 1000/s
            key_space: 1 << 12,
            filter_pass: 1.0, // count every delivered record in QPS
            shuffle: Some(shuffle),
            ..WorkloadSpec::default()
        },
        slots_per_tm: 1, // source on machine 0, one consumer per machine 1..=8
        faults: vec![FaultSpec {
            at: VDuration(0),
            kind: FaultKind::CpuSlow { target: TargetSel::Tm { tm: 1 }, factor: 100.0 },
            duration: VDuration(secs(60.0)),
        }],
        ..RunConfig::default()
    }
}

fn steady_qps(buckets: &[u64], from_s: usize, to_s: usize) -> f64 {
    let w = &buckets[from_s..to_s.min(buckets.len())];
    w.iter().sum::<u64>() as f64 / w.len() as f64
}

#[test]
fn criterion_3_backlog_aware_beats_round_robin_straggler() {
    criterion(3, "backlog-aware shuffle bypasses a 100x straggler", || {
        let t0 = Instant::now();
        let rr = run(&straggler_cfg(streamlab::shuffle::ShuffleStrategy::Rebalance)).unwrap();
        let ba = run(&straggler_cfg(streamlab::shuffle::ShuffleStrategy::BacklogAware {
            threshold: 32,
        }))
        .unwrap();
        let rr_steady = steady_qps(&rr.qps_buckets, 30, 60);
        let ba_steady = steady_qps(&ba.qps_buckets, 30, 60);
        // queueing bound: every round-robin cycle of 8 records waits on the
        // straggler, so throughput is 8 x its 10/s service rate
        let bound = 8.0 * (1_000.0 / 100.0);
        assert!(
            (rr_steady - bound).abs() <= 0.10 * bound,
            "round-robin steady {:.1} vs bound {:.1}",
            rr_steady,
            bound
        );
        assert!(
            ba_steady >= 5.0 * rr_steady,
            "backlog-aware {:.1} not >= 5x round-robin {:.1}",
            ba_steady,
            rr_steady
        );
        assert!(t0.elapsed() < Duration::from_secs(30), "took {:?}", t0.elapsed());
    });
}

// ---------------------------------------------------------------------------
// 4. Recovery scope: whole-region rewind vs single-task passthrough
// ---------------------------------------------------------------------------

fn recovery_scope_cfg(strategy: RecoveryStrategy) -> RunConfig {
    // all-to-all two-operator job: 8 sources -> 8 filters over rebalance,
    // machine 4 hosts exactly two filter tasks
    let mut cfg = RunConfig {
        seed: 4,
        workload: WorkloadSpec {
            kind: WorkloadKind::Q2Filter,
            source_parallelism: 8,
            parallelism: 8,
            rate: RateSpec::Constant(50.0),
            duration_s: 1_200.0,
            service_us: 500,
            key_space: 1 << 10,
            filter_pass: 1.0,
            ..WorkloadSpec::default()
        },
        slots_per_tm: 2,
        faults: vec![FaultSpec {
            at: VDuration(secs(900.0)), // 15 min
            kind: FaultKind::KillTm { target: TargetSel::Tm { tm: 4 } },
            duration: VDuration(0),
        }],
        ..RunConfig::default()
    };
    cfg.engine.checkpoint =
        Some(CkptConfig { mode: CheckpointMode::Region, interval_ns: secs(30.0), deadline_ns: 0 });
    cfg.engine.recovery.strategy = strategy;
    cfg.engine.recovery.detection_ns = secs(2.0);
    cfg.engine.track_duplicates = true;
    if strategy == RecoveryStrategy::SingleTask {
        cfg.engine.gamma = Gamma::Partial;
    } else {
        // slow machine reallocation so the whole-job outage spans full 1 s
        // buckets and the stall is visible in the QPS series
        cfg.engine.recovery.reallocate_ns = secs(3.0);
    }
    cfg
}

#[test]
fn criterion_4_single_task_recovery_keeps_flowing() {
    criterion(4, "region rewind stalls to zero; single-task keeps >=85% QPS", || {
        let t0 = Instant::now();

        let region = run(&recovery_scope_cfg(RecoveryStrategy::RegionFailover)).unwrap();
        assert_eq!(region.recoveries.len(), 1);
        assert!(region.recoveries[0].recovery_time_ns > 0);
        let stalled = region.qps_buckets[900..915].iter().any(|&q| q == 0);
        assert!(stalled, "region failover never drove QPS to zero");

        let single = run(&recovery_scope_cfg(RecoveryStrategy::SingleTask)).unwrap();
        assert_eq!(single.recoveries.len(), 1);
        let rep = &single.recoveries[0];

        // 10 s buckets after warmup; steady state from the pre-failure window
        let tens: Vec<u64> = single.qps_buckets[..1200]
            .chunks(10)
            .map(|c| c.iter().sum::<u64>())
            .collect();
        let steady =
            tens[30..89].iter().sum::<u64>() as f64 / 59.0;
        let min_bucket = *tens[6..].iter().min().unwrap() as f64;
        assert!(
            min_bucket >= 0.85 * steady,
            "min 10s bucket {} below 85% of steady {}",
            min_bucket,
            steady
        );

        // two of the eight consumers were down, so their inbound share is
        // 2/8 of the 400/s total
        let inbound_rate = 2.0 / 8.0 * 400.0;
        let downtime_s = rep.downtime_ns as f64 / NS_PER_SEC as f64;
        let bound = 1.1 * inbound_rate * downtime_s;
        assert!(
            (single.summary.dropped as f64) <= bound,
            "dropped {} exceeds 1.1 x {} /s x {:.2} s",
            single.summary.dropped,
            inbound_rate,
            downtime_s
        );
        assert_eq!(single.summary.duplicates, 0);
        assert!(t0.elapsed() < Duration::from_secs(60), "took {:?}", t0.elapsed());
    });
}

// ---------------------------------------------------------------------------
// 5. Autoscaler: step tracking, cooldown, rollback, breaker
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_autoscaler_tracks_steps_and_guards() {
    criterion(5, "autoscaler tracks 1->4->2 steps with rollback and breaker", || {
        let t0 = Instant::now();
        let mut cfg = AutoscaleConfig { window: 3, cooldown_intervals: 10, ..Default::default() };
        let plant = ScalePlant::ideal(100.0);
        let mut offered = vec![100.0; 40];
        offered.extend(vec![400.0; 40]);
        offered.extend(vec![200.0; 40]);
        let trace = run_control_loop(&offered, &plant, &cfg, 1);

        // settled parallelism after each step + cooldown: ceil(demand/rate) +-1
        for (idx, demand) in [(35usize, 100.0f64), (75, 400.0), (115, 200.0)] {
            let target = (demand / 100.0).ceil() as i64;
            let got = trace.parallelism[idx] as i64;
            assert!(
                (got - target).abs() <= 1,
                "at interval {} parallelism {} vs target {}+-1",
                idx,
                got,
                target
            );
        }
        // changes respect the cooldown: consecutive changes >= 10 apart
        let changes: Vec<usize> = trace
            .parallelism
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] != w[1])
            .map(|(i, _)| i + 1)
            .collect();
        for pair in changes.windows(2) {
            assert!(
                pair[1] - pair[0] >= 10,
                "changes at {} and {} violate the cooldown",
                pair[0],
                pair[1]
            );
        }
        assert_eq!(trace.rollbacks, 0);

        // 60% post-apply degradation rolls back to the exact prior vector
        cfg.cooldown_intervals = 0;
        let mut guard = Guard::new(cfg.clone(), vec![2]);
        let predict = |p: &[u32]| p[0] as f64 * 100.0;
        match guard.on_interval(&[4], 200.0, predict) {
            GuardDecision::Apply(v) => assert_eq!(v, vec![4]),
            other => panic!("expected apply, got {:?}", other),
        }
        let mut rolled = None;
        for _ in 0..cfg.probation_intervals + 1 {
            if let GuardDecision::Rollback(v) = guard.on_interval(&[4], 160.0, predict) {
                rolled = Some(v);
                break;
            }
        }
        assert_eq!(rolled, Some(vec![2]), "degraded apply must restore the prior vector");

        // three consecutive failed rescales open the breaker
        let mut guard = Guard::new(cfg.clone(), vec![2]);
        for round in 0..3 {
            match guard.on_interval(&[4], 200.0, predict) {
                GuardDecision::Apply(_) => {}
                other => panic!("round {}: expected apply, got {:?}", round, other),
            }
            loop {
                match guard.on_interval(&[4], 100.0, predict) {
                    GuardDecision::Rollback(_) => break,
                    GuardDecision::Hold(HoldReason::Probation) => {}
                    GuardDecision::Hold(HoldReason::BreakerOpen) => break,
                    other => panic!("unexpected {:?}", other),
                }
            }
        }
        assert!(guard.breaker_open());
        assert!(matches!(
            guard.on_interval(&[4], 200.0, predict),
            GuardDecision::Hold(HoldReason::BreakerOpen)
        ));
        assert!(t0.elapsed() < Duration::from_secs(60), "took {:?}", t0.elapsed());
    });
}

// ---------------------------------------------------------------------------
// 6. Startup acceleration: batching, cost model, mitigation, hot update
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_startup_acceleration() {
    criterion(6, "startup cost model, batched deploy, slow-machine mitigation", || {
        let t0 = Instant::now();
        let costs = CostModel::default();
        let alloc = AllocModel::slow_provisioning();
        let base = StartupParams {
            tasks: 1024,
            tms_needed: 512,
            batched_deploy: false,
            mitigation: None,
            straggler_extra: None,
        };

        // calibration against the 512-machine reference row (ms): parse 315,
        // allocate 234,977 (mean over seeds), deploy 9,446 -- all within 20%
        let within20 = |v: f64, r: f64| (v - r).abs() <= 0.20 * r;
        let parse_ms = costs.parse_ns(1024) as f64 / 1e6;
        assert!(within20(parse_ms, 315.0), "parse {} ms", parse_ms);
        let mean_alloc_ms = (0..200)
            .map(|seed| run_startup(&costs, &alloc, &base, seed).allocate_ns as f64 / 1e6)
            .sum::<f64>()
            / 200.0;
        assert!(within20(mean_alloc_ms, 234_977.0), "allocate {} ms", mean_alloc_ms);
        let unbatched = run_startup(&costs, &alloc, &base, 0);
        let deploy_ms = unbatched.deploy_ns as f64 / 1e6;
        assert!(within20(deploy_ms, 9_446.0), "deploy {} ms", deploy_ms);

        // (a) batching cuts the RPC count from task count to machine count
        let batched =
            run_startup(&costs, &alloc, &StartupParams { batched_deploy: true, ..base }, 0);
        assert_eq!(unbatched.rpc_count, 1024);
        assert_eq!(batched.rpc_count, 512);

        // (b) deploy time matches the per-rpc + per-task linear model
        let model = |rpcs: u64| (9_000_000 * rpcs + 225_000 * 1024) as f64;
        assert!((unbatched.deploy_ns as f64 - model(1024)).abs() <= 0.10 * model(1024));
        assert!((batched.deploy_ns as f64 - model(512)).abs() <= 0.10 * model(512));

        // (c) one 5-minute straggler with a 2-minute spare threshold: spares
        // cover the slot, total allocation stays under threshold + spare p99,
        // and every surplus machine is released
        let mitigated = run_startup(
            &costs,
            &alloc,
            &StartupParams {
                batched_deploy: true,
                mitigation: Some(Mitigation {
                    threshold_ns: secs(120.0),
                    spare_frac: 0.30,
                    spare_cap: 5,
                }),
                straggler_extra: Some((1, secs(300.0))),
                ..base
            },
            0,
        );
        assert!(mitigated.mitigated);
        let p99_spare = secs(157.5);
        assert!(
            mitigated.allocate_ns <= secs(120.0) + p99_spare,
            "mitigated allocation {} ms",
            mitigated.allocate_ns / 1_000_000
        );
        assert!(mitigated.surplus_released >= 1);
        assert_eq!(mitigated.surplus_released, mitigated.spares_provisioned);

        // (d) in-place reconfiguration skips allocation entirely
        let hot = hot_update(&costs, 1024, 512, true);
        assert_eq!(hot.allocate_ns, 0);
        assert!(t0.elapsed() < Duration::from_secs(30), "took {:?}", t0.elapsed());
    });
}

// ---------------------------------------------------------------------------
// 7. Exactly-once ledgers across checkpoint modes and rewind strategies
// ---------------------------------------------------------------------------

fn ledger_cfg(
    kind: WorkloadKind,
    seed: u64,
    faulted: Option<(CheckpointMode, RecoveryStrategy)>,
) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        workload: WorkloadSpec {
            kind,
            source_parallelism: 4,
            parallelism: 4,
            rate: RateSpec::Constant(100.0),
            duration_s: 40.0,
            service_us: 200,
            key_space: 256,
            ..WorkloadSpec::default()
        },
        ..RunConfig::default()
    };
    if let Some((mode, strategy)) = faulted {
        cfg.engine.checkpoint =
            Some(CkptConfig { mode, interval_ns: secs(5.0), deadline_ns: 0 });
        cfg.engine.recovery.strategy = strategy;
        cfg.faults = vec![FaultSpec {
            at: VDuration(secs(12.0)),
            kind: FaultKind::KillTm { target: RANDOM },
            duration: VDuration(0),
        }];
    }
    cfg
}

#[test]
fn criterion_7_exactly_once_ledger_equality() {
    criterion(7, "ledgers equal failure-free across modes x strategies x 20 seeds", || {
        let t0 = Instant::now();
        for kind in [WorkloadKind::DataSync, WorkloadKind::Q2Filter] {
            for seed in 0..20u64 {
                let clean = run(&ledger_cfg(kind, seed, None)).unwrap().ledger;
                for mode in [CheckpointMode::Global, CheckpointMode::Region] {
                    for strategy in
                        [RecoveryStrategy::FullRestart, RecoveryStrategy::RegionFailover]
                    {
                        let faulted =
                            run(&ledger_cfg(kind, seed, Some((mode, strategy)))).unwrap();
                        assert!(!faulted.recoveries.is_empty());
                        assert_eq!(
                            faulted.ledger, clean,
                            "{:?}/{:?}/{:?} seed {} ledger diverged",
                            kind, mode, strategy, seed
                        );
                    }
                }
            }
        }
        assert!(t0.elapsed() < Duration::from_secs(300), "took {:?}", t0.elapsed());
    });
}

// ---------------------------------------------------------------------------
// 8. Coordination HA rules and idempotent retry submission
// ---------------------------------------------------------------------------

fn ha_cfg(faults: Vec<FaultSpec>) -> RunConfig {
    RunConfig {
        seed: 8,
        workload: WorkloadSpec {
            kind: WorkloadKind::DataSync,
            source_parallelism: 2,
            parallelism: 2,
            rate: RateSpec::Constant(200.0),
            duration_s: 60.0,
            service_us: 100,
            key_space: 64,
            ..WorkloadSpec::default()
        },
        faults,
        ..RunConfig::default()
    }
}

#[test]
fn criterion_8_ha_rules_and_idempotent_submission() {
    criterion(8, "leader-store HA rule table and at-most-once submission", || {
        let t0 = Instant::now();

        // primary store lost mid-run: fallback carries the leader record
        let primary_down = run(&ha_cfg(vec![FaultSpec {
            at: VDuration(secs(20.0)),
            kind: FaultKind::StoreDown { store: StoreSel::Primary },
            duration: VDuration(secs(20.0)),
        }]))
        .unwrap();
        assert!(!primary_down.summary.terminated, "primary outage must not terminate");

        // both stores lost: no safe leader evidence remains
        let both_down = run(&ha_cfg(vec![
            FaultSpec {
                at: VDuration(secs(20.0)),
                kind: FaultKind::StoreDown { store: StoreSel::Primary },
                duration: VDuration(secs(30.0)),
            },
            FaultSpec {
                at: VDuration(secs(20.0)),
                kind: FaultKind::StoreDown { store: StoreSel::Fallback },
                duration: VDuration(secs(30.0)),
            },
        ]))
        .unwrap();
        assert!(both_down.summary.terminated);
        assert!(both_down
            .summary
            .termination_reason
            .as_deref()
            .unwrap()
            .contains("BothStoresDown"));

        // fallback serving a term older than already observed: inconsistent
        let cached = LeaderRecord { leader: 2, term: 5 };
        let res = resolve_leader(
            &StoreView::Unavailable,
            &StoreView::Available(Some(LeaderRecord { leader: 2, term: 3 })),
            Some(&cached),
        );
        assert!(matches!(
            res,
            LeaderResolution::TerminateJobs(TerminateReason::TermRegression)
        ));

        // 10^3 scripted loss/duplication schedules: at most one execution per
        // idempotency key, and backoff sums base * factor^i exactly
        let policy = RetryPolicy::default();
        let mut server = SubmitServer::default();
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        for i in 0..1_000u64 {
            let len = rng.gen_range(0..6);
            let schedule: Vec<AttemptBehavior> = (0..len)
                .map(|_| match rng.gen_range(0..3) {
                    0 => AttemptBehavior::Delivered,
                    1 => AttemptBehavior::LoseRequest,
                    _ => AttemptBehavior::LoseResponse,
                })
                .collect();
            let before = server.executions;
            let key = format!("job-{}", i);
            let report = submit_with_retry(&mut server, &key, &schedule, &policy);
            assert!(server.executions - before <= 1, "key {} executed twice", key);
            let observed_attempts = report.attempts.min(policy.max_attempts);
            let expected_backoff: u64 = (0..observed_attempts.saturating_sub(
                if report.job_id.is_some() { 1 } else { 0 },
            ))
                .map(|j| (policy.base_backoff_ns as f64 * policy.factor.powi(j as i32)) as u64)
                .sum();
            assert_eq!(report.backoff_wait_ns, expected_backoff, "key {} backoff", key);
        }
        assert_eq!(server.executions, 1_000);
        assert!(t0.elapsed() < Duration::from_secs(30), "took {:?}", t0.elapsed());
    });
}

// ---------------------------------------------------------------------------
// 9. Byte-identical summaries on re-run
// ---------------------------------------------------------------------------

fn summary_bytes(cfg: &RunConfig) -> Vec<u8> {
    let report = run(cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    streamlab::bench::write_report(dir.path(), &report, None).unwrap();
    std::fs::read(dir.path().join("summary.json")).unwrap()
}

#[test]
fn criterion_9_rerun_summaries_are_byte_identical() {
    criterion(9, "same-seed reruns write byte-identical summary.json", || {
        let scenarios: Vec<(&str, RunConfig)> = vec![
            ("checkpoint-store", checkpoint_store_cfg(CheckpointMode::Global)),
            ("straggler", straggler_cfg(streamlab::shuffle::ShuffleStrategy::Rebalance)),
            ("single-task-recovery", recovery_scope_cfg(RecoveryStrategy::SingleTask)),
        ];
        for (name, cfg) in scenarios {
            let a = summary_bytes(&cfg);
            let b = summary_bytes(&cfg);
            assert_eq!(a, b, "scenario {} not reproducible", name);
        }
    });
}
