//! Rate-based parallelism recommendation with a safety guard.
//!
//! The recommender estimates each operator's per-instance capacity from
//! smoothed busy/throughput metrics, propagates demand downstream through
//! operator selectivities, and proposes ceil(headroom * demand / capacity).
//! The guard wraps every proposal with cooldown, step clamping, probation
//! with rollback, and a circuit breaker so a misbehaving plant cannot drive
//! oscillation.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutoscaleConfig {
    /// samples in the smoothing window
    pub window: usize,
    /// calibration factor applied to source busy signals
    pub c_source: f64,
    /// busy fraction above which an operator is treated as fully saturated
    pub s_sat: f64,
    /// provisioning headroom multiplier
    pub headroom: f64,
    /// probation passes only if achieved >= rho * predicted
    pub rho: f64,
    pub probation_intervals: u32,
    pub cooldown_intervals: u32,
    /// per-interval multiplicative step clamp
    pub max_step_factor: f64,
    /// consecutive rollbacks before the breaker opens
    pub breaker_k: u32,
    pub min_parallelism: u32,
    pub max_parallelism: u32,
}

impl Default for AutoscaleConfig {
    fn default() -> Self {
        AutoscaleConfig {
            window: 5,
            c_source: 1.0,
            s_sat: 0.95,
            headroom: 1.2,
            rho: 0.8,
            probation_intervals: 2,
            cooldown_intervals: 30, // 5 min at a 10 s metric interval
            max_step_factor: 2.0,
            breaker_k: 3,
            min_parallelism: 1,
            max_parallelism: 128,
        }
    }
}

// ---------------------------------------------------------------------------
// Metric smoothing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default)]
pub struct OpSample {
    /// busy fraction in [0,1], aggregated over instances
    pub busy: f64,
    /// records/s processed, aggregated over instances
    pub proc_rate: f64,
}

#[derive(Debug)]
pub struct Smoother {
    window: usize,
    bufs: Vec<VecDeque<OpSample>>,
}

impl Smoother {
    pub fn new(ops: usize, window: usize) -> Smoother {
        Smoother { window: window.max(1), bufs: vec![VecDeque::new(); ops] }
    }

    pub fn push(&mut self, op: usize, s: OpSample) {
        let b = &mut self.bufs[op];
        if b.len() == self.window {
            b.pop_front();
        }
        b.push_back(s);
    }

    pub fn smoothed(&self, op: usize) -> OpSample {
        let b = &self.bufs[op];
        if b.is_empty() {
            return OpSample::default();
        }
        let n = b.len() as f64;
        OpSample {
            busy: b.iter().map(|s| s.busy).sum::<f64>() / n,
            proc_rate: b.iter().map(|s| s.proc_rate).sum::<f64>() / n,
        }
    }
}

// ---------------------------------------------------------------------------
// Demand propagation and targets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PlanOp {
    /// indices of upstream operators; must refer to earlier entries
    /// (operators are given in topological order)
    pub upstreams: Vec<usize>,
    pub selectivity: f64,
    pub parallelism: u32,
    pub is_source: bool,
}

/// Per-instance capacity estimate. A saturated operator's busy signal is
/// clipped to 1.0 before dividing, so noise near saturation cannot inflate
/// the capacity estimate.
pub fn true_rate_per_instance(
    sample: OpSample,
    parallelism: u32,
    is_source: bool,
    cfg: &AutoscaleConfig,
) -> f64 {
    let mut busy = sample.busy;
    if is_source {
        busy *= cfg.c_source;
    }
    let busy = if busy >= cfg.s_sat { 1.0 } else { busy };
    if busy <= 0.0 || parallelism == 0 {
        return f64::INFINITY; // an idle operator is not a bottleneck
    }
    (sample.proc_rate / parallelism as f64) / busy
}

/// Offered load propagated through selectivities: demand(op) = sum over
/// upstreams of demand(u) * selectivity(u). Sources take the offered rate
/// directly.
pub fn propagate_demand(ops: &[PlanOp], source_offered: &[f64]) -> Vec<f64> {
    let mut demand = vec![0.0f64; ops.len()];
    let mut next_source = 0usize;
    for (i, op) in ops.iter().enumerate() {
        if op.is_source {
            demand[i] = source_offered.get(next_source).copied().unwrap_or(0.0);
            next_source += 1;
        } else {
            demand[i] =
                op.upstreams.iter().map(|&u| demand[u] * ops[u].selectivity).sum::<f64>();
        }
    }
    demand
}

/// Raw targets before the guard: ceil(headroom * demand / capacity), clamped
/// to the configured bounds. Source parallelism is left unchanged.
pub fn target_parallelism(
    ops: &[PlanOp],
    samples: &[OpSample],
    source_offered: &[f64],
    cfg: &AutoscaleConfig,
) -> Vec<u32> {
    let demand = propagate_demand(ops, source_offered);
    ops.iter()
        .enumerate()
        .map(|(i, op)| {
            if op.is_source {
                return op.parallelism;
            }
            let r = true_rate_per_instance(samples[i], op.parallelism, false, cfg);
            if !r.is_finite() || r <= 0.0 {
                return op.parallelism;
            }
            let t = (cfg.headroom * demand[i] / r).ceil() as u32;
            t.clamp(cfg.min_parallelism, cfg.max_parallelism)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Guard
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum GuardDecision {
    Apply(Vec<u32>),
    Rollback(Vec<u32>),
    Hold(HoldReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoldReason {
    Cooldown,
    Frozen,
    BreakerOpen,
    Probation,
    NoChange,
}

#[derive(Debug)]
pub struct Guard {
    cfg: AutoscaleConfig,
    current: Vec<u32>,
    prev: Option<Vec<u32>>,
    predicted_rate: f64,
    probation_left: u32,
    cooldown_left: u32,
    consecutive_rollbacks: u32,
    breaker_open: bool,
    frozen: bool,
    pub applied: u32,
    pub rollbacks: u32,
}

impl Guard {
    pub fn new(cfg: AutoscaleConfig, initial: Vec<u32>) -> Guard {
        Guard {
            cfg,
            current: initial,
            prev: None,
            predicted_rate: 0.0,
            probation_left: 0,
            cooldown_left: 0,
            consecutive_rollbacks: 0,
            breaker_open: false,
            frozen: false,
            applied: 0,
            rollbacks: 0,
        }
    }

    pub fn current(&self) -> &[u32] {
        &self.current
    }

    pub fn breaker_open(&self) -> bool {
        self.breaker_open
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    /// Manual operator action after investigating why rescales kept failing.
    pub fn reset_breaker(&mut self) {
        self.breaker_open = false;
        self.consecutive_rollbacks = 0;
    }

    /// One control interval: evaluates probation on the last applied change
    /// (rolling back when it under-delivered), then gates the next proposal
    /// through freeze, breaker, cooldown, and the step clamp. `predict`
    /// maps a parallelism vector to its expected throughput; it is invoked
    /// on the clamped assignment actually applied, so step clamping cannot
    /// create unmeetable probation targets.
    pub fn on_interval(
        &mut self,
        proposal: &[u32],
        achieved_rate: f64,
        predict: impl Fn(&[u32]) -> f64,
    ) -> GuardDecision {
        if self.probation_left > 0 {
            self.probation_left -= 1;
            if achieved_rate < self.cfg.rho * self.predicted_rate {
                let back = self.prev.take().unwrap_or_else(|| self.current.clone());
                self.current = back.clone();
                self.probation_left = 0;
                self.cooldown_left = self.cfg.cooldown_intervals;
                self.consecutive_rollbacks += 1;
                self.rollbacks += 1;
                if self.consecutive_rollbacks >= self.cfg.breaker_k {
                    self.breaker_open = true;
                }
                return GuardDecision::Rollback(back);
            }
            if self.probation_left == 0 {
                self.consecutive_rollbacks = 0;
                self.prev = None;
            } else {
                return GuardDecision::Hold(HoldReason::Probation);
            }
        }
        if self.frozen {
            return GuardDecision::Hold(HoldReason::Frozen);
        }
        if self.breaker_open {
            return GuardDecision::Hold(HoldReason::BreakerOpen);
        }
        if self.cooldown_left > 0 {
            self.cooldown_left -= 1;
            return GuardDecision::Hold(HoldReason::Cooldown);
        }
        let clamped: Vec<u32> = proposal
            .iter()
            .zip(&self.current)
            .map(|(&p, &cur)| {
                let hi = ((cur as f64) * self.cfg.max_step_factor).floor().max(1.0) as u32;
                let lo = ((cur as f64) / self.cfg.max_step_factor).ceil().max(1.0) as u32;
                p.clamp(lo, hi)
            })
            .collect();
        if clamped == self.current {
            return GuardDecision::Hold(HoldReason::NoChange);
        }
        self.prev = Some(self.current.clone());
        self.current = clamped.clone();
        self.predicted_rate = predict(&clamped);
        self.probation_left = self.cfg.probation_intervals;
        self.cooldown_left = self.cfg.cooldown_intervals;
        self.applied += 1;
        GuardDecision::Apply(clamped)
    }
}

// ---------------------------------------------------------------------------
// Scripted control loop against a plant model
// ---------------------------------------------------------------------------

/// Closed-form plant: a single scaled operator fed by a source. Achieved
/// rate = min(offered, p * per_instance_rate * efficiency(p)).
pub struct ScalePlant {
    pub per_instance_rate: f64,
    pub efficiency: Box<dyn Fn(u32) -> f64>,
}

impl ScalePlant {
    pub fn ideal(per_instance_rate: f64) -> ScalePlant {
        ScalePlant { per_instance_rate, efficiency: Box::new(|_| 1.0) }
    }

    pub fn achieved(&self, p: u32, offered: f64) -> f64 {
        (p as f64 * self.per_instance_rate * (self.efficiency)(p)).min(offered)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LoopTrace {
    pub parallelism: Vec<u32>,
    pub achieved: Vec<f64>,
    pub applied: u32,
    pub rollbacks: u32,
    pub breaker_opened: bool,
}

/// Drives the recommender + guard against the plant for one offered-load
/// sample per interval. This is the harness the scaling scenarios run on:
/// metrics are synthesized from the plant, no live dataflow is rescaled.
pub fn run_control_loop(
    offered: &[f64],
    plant: &ScalePlant,
    cfg: &AutoscaleConfig,
    initial_parallelism: u32,
) -> LoopTrace {
    let mut smoother = Smoother::new(1, cfg.window);
    let mut guard = Guard::new(cfg.clone(), vec![initial_parallelism]);
    let mut trace = LoopTrace {
        parallelism: Vec::with_capacity(offered.len()),
        achieved: Vec::with_capacity(offered.len()),
        applied: 0,
        rollbacks: 0,
        breaker_opened: false,
    };
    for &lambda in offered {
        let p = guard.current()[0];
        let achieved = plant.achieved(p, lambda);
        let capacity = p as f64 * plant.per_instance_rate * (plant.efficiency)(p);
        let busy = if capacity > 0.0 { (achieved / capacity).min(1.0) } else { 1.0 };
        smoother.push(0, OpSample { busy, proc_rate: achieved });
        let s = smoother.smoothed(0);
        let r = true_rate_per_instance(s, p, false, cfg);
        let proposal = if r.is_finite() && r > 0.0 {
            ((cfg.headroom * lambda / r).ceil() as u32)
                .clamp(cfg.min_parallelism, cfg.max_parallelism)
        } else {
            p
        };
        guard.on_interval(&[proposal], achieved, |applied| {
            (applied[0] as f64 * r).min(lambda)
        });
        trace.parallelism.push(guard.current()[0]);
        trace.achieved.push(achieved);
    }
    trace.applied = guard.applied;
    trace.rollbacks = guard.rollbacks;
    trace.breaker_opened = guard.breaker_open();
    trace
}
