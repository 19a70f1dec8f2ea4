//! Cost and quality-of-service indicators and the policy comparison.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::sim::{SimRun, StepRecord};

/// Average CPU the controllers aim for, in percent.
pub const CPU_REFERENCE_PCT: f64 = 50.0;

/// Sum of VM lifetimes, `(id, start, stop)` triples.
pub fn vm_seconds(lifetimes: &[(u32, f64, f64)]) -> f64 {
    lifetimes.iter().map(|&(_, start, stop)| stop - start).sum()
}

/// Mean of `|avg_cpu - reference|` over periods with at least one VM in
/// service.
pub fn mean_cpu_deviation(records: &[StepRecord], reference_pct: f64) -> Result<f64> {
    let (sum, n) = records
        .iter()
        .filter(|r| r.m_active > 0)
        .fold((0.0, 0usize), |(s, n), r| {
            (s + (r.avg_cpu_pct - reference_pct).abs(), n + 1)
        });
    if n == 0 {
        return Err(Error::invalid("records", "no period with an Active VM"));
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpiReport {
    pub label: String,
    pub vm_seconds: f64,
    pub mean_cpu_deviation_pct: f64,
    pub failed_requests: f64,
    /// Periods in which some arrivals were dropped.
    pub failure_periods: usize,
    pub unavailable_periods: usize,
    pub config_fingerprint: String,
}

impl KpiReport {
    pub fn from_run(run: &SimRun, fingerprint: &str) -> Result<Self> {
        let vm_s = vm_seconds(&run.lifetimes);
        let tol = 1e-9 * vm_s.max(1.0);
        if (vm_s - run.vm_seconds_accrued).abs() > tol {
            return Err(Error::invalid(
                "vm_seconds",
                format!(
                    "lifetimes give {vm_s}, accrual gave {}",
                    run.vm_seconds_accrued
                ),
            ));
        }
        Ok(KpiReport {
            label: run.label.clone(),
            vm_seconds: vm_s,
            mean_cpu_deviation_pct: mean_cpu_deviation(&run.records, CPU_REFERENCE_PCT)?,
            failed_requests: run.records.iter().map(|r| r.failed).sum(),
            failure_periods: run.records.iter().filter(|r| r.failed > 1e-9).count(),
            unavailable_periods: run.records.iter().filter(|r| r.m_active == 0).count(),
            config_fingerprint: fingerprint.to_string(),
        })
    }
}

/// A named ordering claim checked against the reports.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCheck {
    pub claim: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub reports: Vec<KpiReport>,
    /// Indices into `reports`, cheapest first.
    pub by_vm_seconds: Vec<usize>,
    /// Indices into `reports`, closest to the reference first.
    pub by_deviation: Vec<usize>,
    pub checks: Vec<OrderingCheck>,
}

fn rank(reports: &[KpiReport], key: impl Fn(&KpiReport) -> f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..reports.len()).collect();
    idx.sort_by(|&a, &b| {
        key(&reports[a])
            .partial_cmp(&key(&reports[b]))
            .unwrap_or(Ordering::Equal)
            .then_with(|| reports[a].label.cmp(&reports[b].label))
    });
    idx
}

pub fn compare(reports: Vec<KpiReport>) -> Result<Comparison> {
    if reports.is_empty() {
        return Err(Error::invalid("reports", "nothing to compare"));
    }
    let by_vm_seconds = rank(&reports, |r| r.vm_seconds);
    let by_deviation = rank(&reports, |r| r.mean_cpu_deviation_pct);

    let find = |label: &str| reports.iter().find(|r| r.label == label);
    let mut checks = Vec::new();
    if let Some(mfc) = find("mfc") {
        let others: Vec<&KpiReport> = reports.iter().filter(|r| r.label != "mfc").collect();
        if !others.is_empty() {
            checks.push(OrderingCheck {
                claim: "mfc has the lowest mean CPU deviation".into(),
                holds: others
                    .iter()
                    .all(|o| mfc.mean_cpu_deviation_pct < o.mean_cpu_deviation_pct),
            });
        }
        if let Some(tt) = find("target_tracking") {
            checks.push(OrderingCheck {
                claim: "mfc uses fewer VM-seconds than target_tracking".into(),
                holds: mfc.vm_seconds < tt.vm_seconds,
            });
        }
        // The largest static fleet is the overprovisioned reference.
        let big_static = reports
            .iter()
            .filter_map(|r| {
                r.label
                    .strip_prefix("static_")
                    .and_then(|n| n.parse::<u32>().ok())
                    .map(|n| (n, r))
            })
            .max_by_key(|(n, _)| *n);
        if let Some((_, st)) = big_static {
            checks.push(OrderingCheck {
                claim: format!("mfc uses fewer VM-seconds than {}", st.label),
                holds: mfc.vm_seconds < st.vm_seconds,
            });
            if let Some(tt) = find("target_tracking") {
                checks.push(OrderingCheck {
                    claim: format!("target_tracking uses fewer VM-seconds than {}", st.label),
                    holds: tt.vm_seconds < st.vm_seconds,
                });
            }
        }
    }
    Ok(Comparison {
        reports,
        by_vm_seconds,
        by_deviation,
        checks,
    })
}

fn rank_of(order: &[usize], i: usize) -> usize {
    order.iter().position(|&j| j == i).map_or(0, |p| p + 1)
}

impl Comparison {
    pub fn report(&self, label: &str) -> Option<&KpiReport> {
        self.reports.iter().find(|r| r.label == label)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "policy",
            "vm_seconds",
            "mean_cpu_deviation_pct",
            "failed_requests",
            "failure_periods",
            "unavailable_periods",
            "rank_vm_seconds",
            "rank_deviation",
            "config_fingerprint",
            "note",
        ])?;
        for &i in &self.by_vm_seconds {
            let r = &self.reports[i];
            let note = if r.label == "target_tracking" {
                "emulated target tracking (proportional capacity rule)"
            } else {
                ""
            };
            w.write_record([
                r.label.clone(),
                format!("{:.1}", r.vm_seconds),
                format!("{:.4}", r.mean_cpu_deviation_pct),
                format!("{:.1}", r.failed_requests),
                r.failure_periods.to_string(),
                r.unavailable_periods.to_string(),
                rank_of(&self.by_vm_seconds, i).to_string(),
                rank_of(&self.by_deviation, i).to_string(),
                r.config_fingerprint.clone(),
                note.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned plain-text table, cheapest first, plus the ordering checks.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<18} {:>12} {:>10} {:>12} {:>9}",
            "policy", "VM-seconds", "CPU dev %", "failed req", "fail per"
        );
        for r in self.by_vm_seconds.iter().map(|&i| &self.reports[i]) {
            let _ = writeln!(
                s,
                "{:<18} {:>12.0} {:>10.2} {:>12.0} {:>9}",
                r.label,
                r.vm_seconds,
                r.mean_cpu_deviation_pct,
                r.failed_requests,
                r.failure_periods
            );
        }
        for c in &self.checks {
            let _ = writeln!(
                s,
                "[{}] {}",
                if c.holds { "ok" } else { "violated" },
                c.claim
            );
        }
        s
    }
}
