//! Experiment configuration: a flat `key = value` file with `#` comments,
//! overridable key by key.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::cluster::ClusterConfig;
use crate::error::{Error, Result};
use crate::policy::{MfcPolicy, MfcSettings, ScalingPolicy, TargetTracker, TtConfig};
use crate::workload::{
    default_step_trace, load_trace_csv, spiky_trace, SpikyParams, WorkloadTrace,
};

pub const KEYS: &[&str] = &[
    "h_seconds",
    "tau_seconds",
    "alpha",
    "k_p",
    "estimator",
    "online_kp_sign",
    "m_min",
    "m_max",
    "boot_delay_periods",
    "vm_capacity_rps",
    "elb_ramp_limit",
    "base_rt_seconds",
    "seed",
    "policy",
    "static_count",
    "tt_target_pct",
    "tt_eval_periods",
    "tt_scale_out_cooldown_seconds",
    "tt_scale_in_cooldown_seconds",
    "trace",
    "trace_path",
    "out",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySpec {
    Mfc,
    TargetTracking,
    /// Expands to one run per configured static count.
    Static,
    StaticCount(u32),
}

impl FromStr for PolicySpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mfc" => Ok(PolicySpec::Mfc),
            "target_tracking" => Ok(PolicySpec::TargetTracking),
            "static" => Ok(PolicySpec::Static),
            other => other
                .strip_prefix("static_")
                .and_then(|n| n.parse().ok())
                .map(PolicySpec::StaticCount)
                .ok_or_else(|| {
                    format!("unknown policy `{other}` (mfc, target_tracking, static, static_<n>)")
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceSource {
    Step,
    Spiky,
    Csv,
}

impl FromStr for TraceSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "step" => Ok(TraceSource::Step),
            "spiky" => Ok(TraceSource::Spiky),
            "csv" => Ok(TraceSource::Csv),
            other => Err(format!("unknown trace source `{other}` (step, spiky, csv)")),
        }
    }
}

impl fmt::Display for TraceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceSource::Step => "step",
            TraceSource::Spiky => "spiky",
            TraceSource::Csv => "csv",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub cluster: ClusterConfig,
    pub mfc: MfcSettings,
    pub tt: TtConfig,
    pub seed: u64,
    pub policies: Vec<PolicySpec>,
    pub static_counts: Vec<u32>,
    pub trace: TraceSource,
    pub trace_path: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            cluster: ClusterConfig::default(),
            mfc: MfcSettings::default(),
            tt: TtConfig::default(),
            seed: 42,
            policies: vec![
                PolicySpec::Mfc,
                PolicySpec::TargetTracking,
                PolicySpec::Static,
            ],
            static_counts: vec![20, 30],
            trace: TraceSource::Step,
            trace_path: None,
            out: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_switch(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(Error::config(
            key,
            format!("expected on or off, got `{value}`"),
        )),
    }
}

/// Maps a downstream validation field to the config key a user would edit.
fn key_for_field(field: &str) -> &'static str {
    match field {
        "h" => "h_seconds",
        "tau" => "tau_seconds",
        "alpha" => "alpha",
        "k_p" => "k_p",
        "u_min" | "m_min" => "m_min",
        "u_max" | "m_max" => "m_max",
        "vm_capacity_rps" => "vm_capacity_rps",
        "base_rt_seconds" => "base_rt_seconds",
        "target_pct" => "tt_target_pct",
        "eval_periods" => "tt_eval_periods",
        "cooldown" => "tt_scale_in_cooldown_seconds",
        _ => "config",
    }
}

fn diagnose(r: Result<()>, out: &mut Vec<Error>) {
    match r {
        Ok(()) => {}
        Err(Error::Invalid { field, reason }) => {
            out.push(Error::config(key_for_field(field), reason))
        }
        Err(e) => out.push(e),
    }
}

impl ExperimentConfig {
    /// Parses a config file body. Unknown keys are rejected.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("line {}", lineno + 1),
                    format!("expected key = value, got `{line}`"),
                )
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    /// Sets one key. Range checks happen in [`ExperimentConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "h_seconds" => self.cluster.h = parse(key, value)?,
            "tau_seconds" => self.mfc.tau_seconds = parse(key, value)?,
            "alpha" => self.mfc.alpha = parse(key, value)?,
            "k_p" => self.mfc.k_p = parse(key, value)?,
            "estimator" => self.mfc.estimator = parse(key, value)?,
            "online_kp_sign" => self.mfc.online_kp_sign = parse(key, value)?,
            "m_min" => self.cluster.m_min = parse(key, value)?,
            "m_max" => self.cluster.m_max = parse(key, value)?,
            "boot_delay_periods" => self.cluster.boot_delay_periods = parse(key, value)?,
            "vm_capacity_rps" => self.cluster.vm_capacity_rps = parse(key, value)?,
            "elb_ramp_limit" => self.cluster.elb_ramp_limit = parse_switch(key, value)?,
            "base_rt_seconds" => self.cluster.base_rt_seconds = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "policy" => self.policies = parse_list(key, value)?,
            "static_count" => self.static_counts = parse_list(key, value)?,
            "tt_target_pct" => self.tt.target_pct = parse(key, value)?,
            "tt_eval_periods" => self.tt.eval_periods = parse(key, value)?,
            "tt_scale_out_cooldown_seconds" => self.tt.scale_out_cooldown = parse(key, value)?,
            "tt_scale_in_cooldown_seconds" => self.tt.scale_in_cooldown = parse(key, value)?,
            "trace" => self.trace = parse(key, value)?,
            "trace_path" => self.trace_path = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Every invariant violation, each naming its key. Empty means valid.
    pub fn diagnostics(&self) -> Vec<Error> {
        let mut out = Vec::new();
        diagnose(self.cluster.validate(), &mut out);
        let c = &self.cluster;
        // A fixed-size cluster (m_min = m_max) only matters to the MFC policy.
        let u_max = if self.policies.contains(&PolicySpec::Mfc) {
            c.m_max
        } else {
            c.m_max.max(c.m_min + 1)
        };
        for e in self.mfc.controller_config(c.h, c.m_min, u_max).problems() {
            diagnose(Err(e), &mut out);
        }
        diagnose(self.tt.validate(), &mut out);
        if self.policies.is_empty() {
            out.push(Error::config("policy", "no policy selected"));
        }
        if self.policies.contains(&PolicySpec::Static) && self.static_counts.is_empty() {
            out.push(Error::config(
                "static_count",
                "static policy needs at least one count",
            ));
        }
        for n in self.static_counts() {
            if n < self.cluster.m_min || n > self.cluster.m_max {
                out.push(Error::config(
                    "static_count",
                    format!(
                        "{n} outside [{}, {}]",
                        self.cluster.m_min, self.cluster.m_max
                    ),
                ));
            }
        }
        if self.trace == TraceSource::Csv {
            match &self.trace_path {
                None => out.push(Error::config("trace_path", "required when trace = csv")),
                Some(p) if !p.is_file() => out.push(Error::config(
                    "trace_path",
                    format!("{} does not exist", p.display()),
                )),
                Some(_) => {}
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.diagnostics().into_iter().next() {
            None => Ok(()),
            Some(e) => Err(e),
        }
    }

    fn static_counts(&self) -> Vec<u32> {
        let mut counts = Vec::new();
        for p in &self.policies {
            match p {
                PolicySpec::Static => counts.extend(&self.static_counts),
                PolicySpec::StaticCount(n) => counts.push(*n),
                _ => {}
            }
        }
        counts
    }

    /// Fresh policy instances in run order, duplicates removed.
    pub fn build_policies(&self) -> Result<Vec<ScalingPolicy>> {
        let c = &self.cluster;
        let mut out: Vec<ScalingPolicy> = Vec::new();
        for p in &self.policies {
            let new: Vec<ScalingPolicy> = match p {
                PolicySpec::Mfc => vec![ScalingPolicy::Mfc(Box::new(MfcPolicy::new(
                    &self.mfc, c.h, c.m_min, c.m_max, c.m_min,
                )?))],
                PolicySpec::TargetTracking => vec![ScalingPolicy::TargetTracking(
                    TargetTracker::new(self.tt.clone(), c.m_min, c.m_max)?,
                )],
                PolicySpec::Static => self
                    .static_counts
                    .iter()
                    .map(|&n| ScalingPolicy::Static(n))
                    .collect(),
                PolicySpec::StaticCount(n) => vec![ScalingPolicy::Static(*n)],
            };
            for policy in new {
                if !out.iter().any(|q| q.label() == policy.label()) {
                    out.push(policy);
                }
            }
        }
        Ok(out)
    }

    pub fn build_trace(&self) -> Result<WorkloadTrace> {
        match self.trace {
            TraceSource::Step => default_step_trace(self.cluster.h),
            TraceSource::Spiky => spiky_trace(self.seed, self.cluster.h, &SpikyParams::default()),
            TraceSource::Csv => {
                let path = self
                    .trace_path
                    .as_ref()
                    .ok_or_else(|| Error::config("trace_path", "required when trace = csv"))?;
                load_trace_csv(path, self.cluster.h)
            }
        }
    }

    /// Canonical `key=value` lines covering everything that affects results.
    pub fn canonical(&self) -> String {
        let c = &self.cluster;
        let m = &self.mfc;
        let t = &self.tt;
        let policies: Vec<String> = self
            .build_policies()
            .map(|ps| ps.iter().map(|p| p.label()).collect())
            .unwrap_or_default();
        let mut lines = vec![
            format!("alpha={}", m.alpha),
            format!("base_rt_seconds={}", c.base_rt_seconds),
            format!("boot_delay_periods={}", c.boot_delay_periods),
            format!(
                "elb_ramp_limit={}",
                if c.elb_ramp_limit { "on" } else { "off" }
            ),
            format!("estimator={}", m.estimator),
            format!("h_seconds={}", c.h),
            format!("k_p={}", m.k_p),
            format!("m_max={}", c.m_max),
            format!("m_min={}", c.m_min),
            format!("online_kp_sign={}", m.online_kp_sign),
            format!("policy={}", policies.join(",")),
            format!("seed={}", self.seed),
            format!("tau_seconds={}", m.tau_seconds),
            format!("trace={}", self.trace),
            format!("tt_eval_periods={}", t.eval_periods),
            format!("tt_scale_in_cooldown_seconds={}", t.scale_in_cooldown),
            format!("tt_scale_out_cooldown_seconds={}", t.scale_out_cooldown),
            format!("tt_target_pct={}", t.target_pct),
            format!("vm_capacity_rps={}", c.vm_capacity_rps),
        ];
        if let Some(p) = &self.trace_path {
            lines.push(format!("trace_path={}", p.display()));
        }
        lines.sort();
        lines.join("\n")
    }

    /// Short SHA-256 digest of [`ExperimentConfig::canonical`].
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
