//! Discrete-time model of a VM cluster behind a load balancer.
//!
//! Each sampling period the balancer splits the arrival rate evenly over
//! the Active VMs. A VM's CPU fraction is `min(1, load/capacity)` and load
//! above capacity is dropped. Scaling commands create Booting VMs that
//! start serving `boot_delay_periods` periods later, or terminate the
//! youngest VMs immediately.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Admitted traffic may grow by at most this factor within
/// [`ELB_RAMP_WINDOW_SECONDS`].
pub const ELB_RAMP_FACTOR: f64 = 1.5;
pub const ELB_RAMP_WINDOW_SECONDS: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lifecycle {
    Booting,
    Active,
    Terminating,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmRecord {
    pub id: u32,
    pub lifecycle: Lifecycle,
    /// Requests per second served at 100% CPU.
    pub capacity: f64,
    pub boot_remaining: u32,
    /// CPU fraction over the last period, in `[0, 1]`.
    pub cpu: f64,
    pub started_at: f64,
    pub stopped_at: Option<f64>,
}

impl VmRecord {
    pub fn is_live(&self) -> bool {
        self.lifecycle != Lifecycle::Terminating
    }

    /// Lifetime in seconds, closing an open interval at `now`.
    pub fn lifetime(&self, now: f64) -> f64 {
        self.stopped_at.unwrap_or(now) - self.started_at
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    /// Sampling period in seconds.
    pub h: f64,
    pub m_min: u32,
    pub m_max: u32,
    pub boot_delay_periods: u32,
    pub vm_capacity_rps: f64,
    pub elb_ramp_limit: bool,
    pub base_rt_seconds: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            h: 60.0,
            m_min: 1,
            m_max: 60,
            boot_delay_periods: 2,
            vm_capacity_rps: 12.0,
            elb_ramp_limit: false,
            base_rt_seconds: 0.1,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::invalid("h", format!("must be > 0, got {}", self.h)));
        }
        if self.m_min < 1 {
            return Err(Error::invalid("m_min", "must be >= 1"));
        }
        if self.m_min > self.m_max {
            return Err(Error::invalid(
                "m_max",
                format!("must be >= m_min ({} < {})", self.m_max, self.m_min),
            ));
        }
        if !(self.vm_capacity_rps.is_finite() && self.vm_capacity_rps > 0.0) {
            return Err(Error::invalid(
                "vm_capacity_rps",
                format!("must be > 0, got {}", self.vm_capacity_rps),
            ));
        }
        if !(self.base_rt_seconds.is_finite() && self.base_rt_seconds >= 0.0) {
            return Err(Error::invalid(
                "base_rt_seconds",
                format!("must be >= 0, got {}", self.base_rt_seconds),
            ));
        }
        Ok(())
    }
}

/// Outcome of splitting one period's arrival rate over the Active VMs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispatch {
    pub arrival_rate: f64,
    /// Rate let through by the balancer (equal to the arrival rate unless
    /// the ramp limit bites).
    pub admitted_rate: f64,
    pub active: u32,
    /// Load assigned to each Active VM.
    pub per_vm_load: f64,
    pub cpu: f64,
    pub served_rate: f64,
    /// Dropped by saturated VMs, the ramp limit or unavailability.
    pub failed_rate: f64,
    pub ramp_dropped_rate: f64,
    /// No Active VM: every arrival failed.
    pub unavailable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    vms: Vec<VmRecord>,
    pub m_min: u32,
    pub m_max: u32,
    pub clock: f64,
    pub h: f64,
    boot_delay: u32,
    capacity: f64,
    next_id: u32,
    elb_ramp_limit: bool,
    admitted_history: VecDeque<(f64, f64)>,
    periods: u64,
    vm_periods: u64,
}

impl ClusterState {
    /// Cluster at `clock = 0` with `initial` Active VMs.
    pub fn new(cfg: &ClusterConfig, initial: u32) -> Result<Self> {
        cfg.validate()?;
        if initial < cfg.m_min || initial > cfg.m_max {
            return Err(Error::invalid(
                "initial",
                format!("{initial} outside [{}, {}]", cfg.m_min, cfg.m_max),
            ));
        }
        let mut state = ClusterState {
            vms: Vec::new(),
            m_min: cfg.m_min,
            m_max: cfg.m_max,
            clock: 0.0,
            h: cfg.h,
            boot_delay: cfg.boot_delay_periods,
            capacity: cfg.vm_capacity_rps,
            next_id: 0,
            elb_ramp_limit: cfg.elb_ramp_limit,
            admitted_history: VecDeque::new(),
            periods: 0,
            vm_periods: 0,
        };
        for _ in 0..initial {
            state.spawn(Lifecycle::Active, 0);
        }
        Ok(state)
    }

    fn spawn(&mut self, lifecycle: Lifecycle, boot_remaining: u32) {
        self.vms.push(VmRecord {
            id: self.next_id,
            lifecycle,
            capacity: self.capacity,
            boot_remaining,
            cpu: 0.0,
            started_at: self.clock,
            stopped_at: None,
        });
        self.next_id += 1;
    }

    /// Every VM ever created, including terminated ones.
    pub fn vms(&self) -> &[VmRecord] {
        &self.vms
    }

    pub fn active_count(&self) -> u32 {
        self.count(Lifecycle::Active)
    }

    pub fn booting_count(&self) -> u32 {
        self.count(Lifecycle::Booting)
    }

    /// Active plus Booting: the cardinality most recently commanded.
    pub fn commanded_count(&self) -> u32 {
        self.active_count() + self.booting_count()
    }

    fn count(&self, lifecycle: Lifecycle) -> u32 {
        self.vms.iter().filter(|v| v.lifecycle == lifecycle).count() as u32
    }

    /// Upper bound on the admitted rate imposed by the ramp limit, if any.
    pub fn ramp_cap(&self) -> Option<f64> {
        if !self.elb_ramp_limit {
            return None;
        }
        let floor = self
            .admitted_history
            .iter()
            .map(|&(_, r)| r)
            .fold(f64::INFINITY, f64::min);
        // an idle balancer has no baseline to ramp from
        (floor.is_finite() && floor > 0.0).then_some(ELB_RAMP_FACTOR * floor)
    }

    /// Starts a period: Booting VMs advance one period and join once done.
    pub fn begin_period(&mut self) {
        for vm in self
            .vms
            .iter_mut()
            .filter(|v| v.lifecycle == Lifecycle::Booting)
        {
            vm.boot_remaining = vm.boot_remaining.saturating_sub(1);
            if vm.boot_remaining == 0 {
                vm.lifecycle = Lifecycle::Active;
            }
        }
    }

    /// Writes a dispatch outcome into the per-VM CPU readings and the
    /// balancer's ramp history.
    pub fn apply_dispatch(&mut self, d: &Dispatch) {
        for vm in self.vms.iter_mut() {
            vm.cpu = if vm.lifecycle == Lifecycle::Active {
                d.cpu
            } else {
                0.0
            };
        }
        if self.elb_ramp_limit {
            self.admitted_history
                .push_back((self.clock, d.admitted_rate));
            let horizon = self.clock + self.h - ELB_RAMP_WINDOW_SECONDS;
            while let Some(&(t, _)) = self.admitted_history.front() {
                // keep periods starting within the window ending at the next period
                if t < horizon - 1e-9 {
                    self.admitted_history.pop_front();
                } else {
                    break;
                }
            }
        }
    }

    /// Closes the period: live VMs accrue `h` seconds, the clock advances.
    pub fn finish_period(&mut self) {
        self.vm_periods += self.vms.iter().filter(|v| v.is_live()).count() as u64;
        self.periods += 1;
        self.clock = self.periods as f64 * self.h;
    }

    /// Moves the cluster to `target` VMs (Active plus Booting).
    ///
    /// Scale-out adds Booting VMs; scale-in terminates the youngest live VMs
    /// first, so Booting ones go before any Active one.
    pub fn apply_scaling(&mut self, target: u32) -> Result<()> {
        if target < self.m_min || target > self.m_max {
            return Err(Error::invalid(
                "target",
                format!("{target} outside [{}, {}]", self.m_min, self.m_max),
            ));
        }
        let current = self.commanded_count();
        if target > current {
            for _ in current..target {
                if self.boot_delay == 0 {
                    self.spawn(Lifecycle::Active, 0);
                } else {
                    self.spawn(Lifecycle::Booting, self.boot_delay);
                }
            }
        } else if target < current {
            let mut victims: Vec<usize> = self
                .vms
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_live())
                .map(|(i, _)| i)
                .collect();
            // ids grow with creation time: youngest last
            victims.sort_by(|&a, &b| self.vms[b].id.cmp(&self.vms[a].id));
            let now = self.clock;
            for &i in victims.iter().take((current - target) as usize) {
                let vm = &mut self.vms[i];
                vm.lifecycle = Lifecycle::Terminating;
                vm.stopped_at = Some(now);
                vm.cpu = 0.0;
            }
        }
        Ok(())
    }

    /// Ends the run: every live VM stops at the current clock.
    pub fn close(&mut self) {
        let now = self.clock;
        for vm in self.vms.iter_mut().filter(|v| v.is_live()) {
            vm.lifecycle = Lifecycle::Terminating;
            vm.stopped_at = Some(now);
        }
    }

    /// VM-seconds accrued period by period.
    pub fn vm_seconds_accrued(&self) -> f64 {
        self.vm_periods as f64 * self.h
    }

    /// `(id, started_at, stopped_at)` for every VM, open intervals closed at
    /// the current clock.
    pub fn lifetimes(&self) -> Vec<(u32, f64, f64)> {
        self.vms
            .iter()
            .map(|v| (v.id, v.started_at, v.stopped_at.unwrap_or(self.clock)))
            .collect()
    }
}

/// Even split of `arrival_rate` over the Active VMs.
pub fn dispatch_requests(arrival_rate: f64, cluster: &ClusterState) -> Result<Dispatch> {
    if !(arrival_rate.is_finite() && arrival_rate >= 0.0) {
        return Err(Error::invalid(
            "arrival_rate",
            format!("must be finite and >= 0, got {arrival_rate}"),
        ));
    }
    let active = cluster.active_count();
    if active == 0 {
        return Ok(Dispatch {
            arrival_rate,
            admitted_rate: 0.0,
            active,
            per_vm_load: 0.0,
            cpu: 0.0,
            served_rate: 0.0,
            failed_rate: arrival_rate,
            ramp_dropped_rate: 0.0,
            unavailable: true,
        });
    }
    let admitted_rate = match cluster.ramp_cap() {
        Some(cap) => arrival_rate.min(cap),
        None => arrival_rate,
    };
    let ramp_dropped_rate = arrival_rate - admitted_rate;
    let per_vm_load = admitted_rate / active as f64;
    let capacity = cluster.capacity;
    let cpu = (per_vm_load / capacity).min(1.0);
    let per_vm_served = per_vm_load.min(capacity);
    let served_rate = if per_vm_load <= capacity {
        admitted_rate
    } else {
        per_vm_served * active as f64
    };
    Ok(Dispatch {
        arrival_rate,
        admitted_rate,
        active,
        per_vm_load,
        cpu,
        served_rate,
        failed_rate: arrival_rate - served_rate,
        ramp_dropped_rate,
        unavailable: false,
    })
}

/// `y = Σ cpu_i` over the Active VMs.
pub fn measure_output(cluster: &ClusterState) -> f64 {
    cluster
        .vms
        .iter()
        .filter(|v| v.lifecycle == Lifecycle::Active)
        .map(|v| v.cpu)
        .sum()
}

/// `y_d = M_act / 2`, i.e. a 50% average CPU target.
pub fn reference(cluster: &ClusterState) -> Result<f64> {
    match cluster.active_count() {
        0 => Err(Error::invalid(
            "cluster",
            "reference undefined with no Active VM",
        )),
        m => Ok(m as f64 / 2.0),
    }
}

/// Nearest integer with ties toward more capacity, clamped to
/// `[m_min, m_max]`. Non-finite input saturates (NaN maps to `m_min`).
pub fn quantize_command(u_raw: f64, cluster: &ClusterState) -> u32 {
    quantize(u_raw, cluster.m_min, cluster.m_max)
}

pub(crate) fn quantize(u_raw: f64, m_min: u32, m_max: u32) -> u32 {
    if u_raw.is_nan() {
        return m_min;
    }
    let rounded = (u_raw + 0.5).floor();
    rounded.clamp(m_min as f64, m_max as f64) as u32
}
