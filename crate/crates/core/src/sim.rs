//! Discrete-time closed loop: one trace sample per sampling period.

use crate::cluster::{dispatch_requests, measure_output, ClusterConfig, ClusterState};
use crate::error::{Error, Result};
use crate::policy::{Observation, ScalingPolicy};
use crate::workload::WorkloadTrace;

/// One row of per-period telemetry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Start of the period, seconds.
    pub t: f64,
    pub arrivals: f64,
    pub served: f64,
    pub failed: f64,
    pub y: f64,
    pub y_d: f64,
    pub e: f64,
    pub f_estim: Option<f64>,
    pub u_raw: f64,
    /// VM count requested at the end of the period.
    pub m_commanded: u32,
    /// VMs that served traffic during the period.
    pub m_active: u32,
    pub avg_cpu_pct: f64,
    pub response_time_proxy: f64,
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub label: String,
    pub h: f64,
    pub records: Vec<StepRecord>,
    /// `(id, start, stop)` for every VM ever launched.
    pub lifetimes: Vec<(u32, f64, f64)>,
    /// VM-seconds counted period by period while the run progressed.
    pub vm_seconds_accrued: f64,
}

impl SimRun {
    pub fn duration(&self) -> f64 {
        self.records.len() as f64 * self.h
    }
}

/// Initial cluster size for a policy: static runs start at their size,
/// elastic ones at the floor.
pub fn initial_size(policy: &ScalingPolicy, m_min: u32) -> u32 {
    match policy {
        ScalingPolicy::Static(n) => *n,
        _ => m_min,
    }
}

/// Runs `policy` against `trace`. The trace is resampled to the sampling
/// period when its spacing differs.
pub fn simulate(
    trace: &WorkloadTrace,
    mut policy: ScalingPolicy,
    cfg: &ClusterConfig,
) -> Result<SimRun> {
    cfg.validate()?;
    if trace.is_empty() {
        return Err(Error::invalid("trace", "empty workload trace"));
    }
    let resampled;
    let trace = if (trace.spacing() - cfg.h).abs() > 1e-9 * cfg.h {
        resampled = trace.resample(cfg.h)?;
        &resampled
    } else {
        trace
    };

    let label = policy.label();
    let mut cluster = ClusterState::new(cfg, initial_size(&policy, cfg.m_min))?;
    let mut records = Vec::with_capacity(trace.len());

    for (k, point) in trace.points().iter().enumerate() {
        let t = k as f64 * cfg.h;
        cluster.begin_period();
        let d = dispatch_requests(point.rate, &cluster)?;
        cluster.apply_dispatch(&d);

        let y = measure_output(&cluster);
        let m_active = cluster.active_count();
        let y_d = m_active as f64 / 2.0;
        let avg_cpu = if m_active > 0 {
            y / m_active as f64
        } else {
            0.0
        };

        let obs = Observation {
            period: k as u64,
            clock: t + cfg.h,
            y,
            y_d,
            avg_cpu_pct: 100.0 * avg_cpu,
            active: m_active,
            commanded: cluster.commanded_count(),
        };
        let decision = policy.decide(&obs)?;
        cluster.finish_period();
        cluster.apply_scaling(decision.target)?;

        let arrivals = point.rate * cfg.h;
        let served = d.served_rate * cfg.h;
        records.push(StepRecord {
            t,
            arrivals,
            served,
            failed: arrivals - served,
            y,
            y_d,
            e: y_d - y,
            f_estim: decision.f_estim,
            u_raw: decision.u_raw,
            m_commanded: decision.target,
            m_active,
            avg_cpu_pct: 100.0 * avg_cpu,
            response_time_proxy: cfg.base_rt_seconds / (1.0 - avg_cpu.min(0.99)),
        });
    }
    cluster.close();

    Ok(SimRun {
        label,
        h: cfg.h,
        records,
        lifetimes: cluster.lifetimes(),
        vm_seconds_accrued: cluster.vm_seconds_accrued(),
    })
}
