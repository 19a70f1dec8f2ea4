//! Scaling policies: the model-free iP controller, an emulation of a
//! commercial target-tracking autoscaler, and static provisioning.

use std::fmt;

use crate::cluster::quantize;
use crate::error::{Error, Result};
use crate::mfc::{Controller, ControllerConfig, EstimatorKind, OnlineKpSign};

/// What a policy sees at the end of a sampling period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Period index, starting at 0.
    pub period: u64,
    /// End of the period, seconds.
    pub clock: f64,
    pub y: f64,
    pub y_d: f64,
    pub avg_cpu_pct: f64,
    pub active: u32,
    /// Active plus Booting VMs.
    pub commanded: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub target: u32,
    /// Continuous command before quantization.
    pub u_raw: f64,
    pub f_estim: Option<f64>,
}

/// Settings of the MFC policy. Times are in seconds; the controller itself
/// runs with the sampling period as its time unit, so `k_p` is per period.
#[derive(Debug, Clone, PartialEq)]
pub struct MfcSettings {
    pub alpha: f64,
    pub k_p: f64,
    pub tau_seconds: f64,
    pub estimator: EstimatorKind,
    pub online_kp_sign: OnlineKpSign,
}

impl Default for MfcSettings {
    fn default() -> Self {
        MfcSettings {
            // Σcpu does not depend on the VM count below saturation while
            // y_d = M/2 grows with it, so the command acts on e = y_d - y
            // with a positive sign: α must be negative.
            alpha: -1.0,
            k_p: 0.8,
            tau_seconds: 120.0,
            estimator: EstimatorKind::Online,
            online_kp_sign: OnlineKpSign::Literal,
        }
    }
}

impl MfcSettings {
    pub fn controller_config(&self, h_seconds: f64, m_min: u32, m_max: u32) -> ControllerConfig {
        ControllerConfig {
            alpha: self.alpha,
            k_p: self.k_p,
            tau: self.tau_seconds / h_seconds,
            h: 1.0,
            estimator: self.estimator,
            online_kp_sign: self.online_kp_sign,
            u_min: m_min as f64,
            u_max: m_max as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MfcPolicy {
    controller: Controller,
    m_min: u32,
    m_max: u32,
}

impl MfcPolicy {
    pub fn new(
        settings: &MfcSettings,
        h_seconds: f64,
        m_min: u32,
        m_max: u32,
        initial: u32,
    ) -> Result<Self> {
        if m_min >= m_max {
            return Err(Error::invalid("m_max", "MFC needs m_min < m_max"));
        }
        let cfg = settings.controller_config(h_seconds, m_min, m_max);
        Ok(MfcPolicy {
            controller: Controller::with_initial_command(cfg, initial as f64)?,
            m_min,
            m_max,
        })
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    fn decide(&mut self, obs: &Observation) -> Result<Decision> {
        let out = self.controller.observe(obs.period as f64, obs.y, obs.y_d)?;
        Ok(Decision {
            target: quantize(out.u, self.m_min, self.m_max),
            u_raw: out.u,
            f_estim: Some(out.f_estim),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TtConfig {
    pub target_pct: f64,
    /// Consecutive observations on one side of the target before acting.
    pub eval_periods: u32,
    pub scale_out_cooldown: f64,
    pub scale_in_cooldown: f64,
}

impl Default for TtConfig {
    fn default() -> Self {
        TtConfig {
            target_pct: 50.0,
            eval_periods: 3,
            scale_out_cooldown: 0.0,
            scale_in_cooldown: 300.0,
        }
    }
}

impl TtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_pct > 0.0 && self.target_pct < 100.0) {
            return Err(Error::invalid(
                "target_pct",
                format!("must be in (0, 100), got {}", self.target_pct),
            ));
        }
        if self.eval_periods == 0 {
            return Err(Error::invalid("eval_periods", "must be >= 1"));
        }
        if !(self.scale_out_cooldown >= 0.0 && self.scale_in_cooldown >= 0.0) {
            return Err(Error::invalid("cooldown", "cooldowns must be >= 0"));
        }
        Ok(())
    }
}

/// Emulated target tracking. The vendor does not publish how the capacity
/// is computed; this uses the proportional rule
/// `desired = ceil(current · cpu / target)` gated by evaluation periods
/// and cooldowns.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTracker {
    cfg: TtConfig,
    m_min: u32,
    m_max: u32,
    above: u32,
    below: u32,
    last_scale_out: Option<f64>,
    last_scale_event: Option<f64>,
}

impl TargetTracker {
    pub fn new(cfg: TtConfig, m_min: u32, m_max: u32) -> Result<Self> {
        cfg.validate()?;
        Ok(TargetTracker {
            cfg,
            m_min,
            m_max,
            above: 0,
            below: 0,
            last_scale_out: None,
            last_scale_event: None,
        })
    }

    pub fn config(&self) -> &TtConfig {
        &self.cfg
    }
}

fn elapsed_at_least(since: Option<f64>, now: f64, cooldown: f64) -> bool {
    since.is_none_or(|t| now - t >= cooldown - 1e-9)
}

/// One evaluation of the target tracker. `current` is the capacity last
/// commanded (Active plus Booting); `avg_cpu_pct` is averaged over the VMs
/// in service.
pub fn target_tracking_step(
    tt: &mut TargetTracker,
    avg_cpu_pct: f64,
    current: u32,
    clock: f64,
) -> u32 {
    let target = tt.cfg.target_pct;
    if avg_cpu_pct > target {
        tt.above += 1;
        tt.below = 0;
    } else if avg_cpu_pct < target {
        tt.below += 1;
        tt.above = 0;
    } else {
        tt.above = 0;
        tt.below = 0;
    }
    let current = current.max(1);
    let ratio = current as f64 * avg_cpu_pct / target;
    let desired = (ratio - 1e-9)
        .ceil()
        .clamp(tt.m_min as f64, tt.m_max as f64) as u32;

    if desired > current
        && avg_cpu_pct > target
        && tt.above >= tt.cfg.eval_periods
        && elapsed_at_least(tt.last_scale_out, clock, tt.cfg.scale_out_cooldown)
    {
        tt.last_scale_out = Some(clock);
        tt.last_scale_event = Some(clock);
        return desired;
    }
    if desired < current
        && avg_cpu_pct < target
        && tt.below >= tt.cfg.eval_periods
        && elapsed_at_least(tt.last_scale_event, clock, tt.cfg.scale_in_cooldown)
    {
        tt.last_scale_event = Some(clock);
        return desired;
    }
    current.clamp(tt.m_min, tt.m_max)
}

pub fn static_step(count: u32) -> u32 {
    count
}

#[derive(Debug, Clone)]
pub enum ScalingPolicy {
    Mfc(Box<MfcPolicy>),
    TargetTracking(TargetTracker),
    Static(u32),
}

impl ScalingPolicy {
    pub fn label(&self) -> String {
        match self {
            ScalingPolicy::Mfc(_) => "mfc".to_string(),
            ScalingPolicy::TargetTracking(_) => "target_tracking".to_string(),
            ScalingPolicy::Static(n) => format!("static_{n}"),
        }
    }

    pub fn decide(&mut self, obs: &Observation) -> Result<Decision> {
        match self {
            ScalingPolicy::Mfc(p) => p.decide(obs),
            ScalingPolicy::TargetTracking(tt) => {
                let target = target_tracking_step(tt, obs.avg_cpu_pct, obs.commanded, obs.clock);
                Ok(Decision {
                    target,
                    u_raw: target as f64,
                    f_estim: None,
                })
            }
            ScalingPolicy::Static(n) => {
                let target = static_step(*n);
                Ok(Decision {
                    target,
                    u_raw: target as f64,
                    f_estim: None,
                })
            }
        }
    }
}

impl fmt::Display for ScalingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}
