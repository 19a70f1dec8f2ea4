//! Runs every configured policy on one trace and writes the artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::kpi::{compare, Comparison, KpiReport};
use crate::sim::{simulate, SimRun, StepRecord};
use crate::workload::WorkloadTrace;

/// Bumped whenever a column is added, removed or changes meaning.
pub const STEPS_SCHEMA_VERSION: u32 = 1;

pub const STEP_COLUMNS: [&str; 13] = [
    "t",
    "arrivals",
    "served",
    "failed",
    "y",
    "y_d",
    "e",
    "f_estim",
    "u_raw",
    "m_commanded",
    "m_active",
    "avg_cpu_pct",
    "response_time_proxy",
];

#[derive(Debug, Clone)]
pub struct Experiment {
    pub trace: WorkloadTrace,
    pub runs: Vec<SimRun>,
    pub comparison: Comparison,
    pub fingerprint: String,
}

/// Validates `cfg`, then simulates each policy on its own thread. Results
/// come back in policy order, so output does not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate()?;
    let trace = cfg.build_trace()?;
    let policies = cfg.build_policies()?;
    let runs: Vec<Result<SimRun>> = thread::scope(|s| {
        let handles: Vec<_> = policies
            .into_iter()
            .map(|p| {
                let trace = &trace;
                s.spawn(move || simulate(trace, p, &cfg.cluster))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::invalid("simulation", "worker panicked")))
            })
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let fingerprint = cfg.fingerprint();
    let reports = runs
        .iter()
        .map(|r| KpiReport::from_run(r, &fingerprint))
        .collect::<Result<Vec<_>>>()?;
    Ok(Experiment {
        trace,
        comparison: compare(reports)?,
        runs,
        fingerprint,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-period telemetry with a schema comment line ahead of the header.
/// Floats use shortest round-trip formatting; an empty `f_estim` means
/// the policy has no estimator.
pub fn write_steps_csv<W: Write>(
    mut out: W,
    label: &str,
    fingerprint: &str,
    records: &[StepRecord],
) -> Result<()> {
    writeln!(
        out,
        "# elastic-mfc steps schema v{STEPS_SCHEMA_VERSION} policy={label} config={fingerprint}"
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STEP_COLUMNS)?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.arrivals.to_string(),
            r.served.to_string(),
            r.failed.to_string(),
            r.y.to_string(),
            r.y_d.to_string(),
            r.e.to_string(),
            opt(r.f_estim),
            r.u_raw.to_string(),
            r.m_commanded.to_string(),
            r.m_active.to_string(),
            r.avg_cpu_pct.to_string(),
            r.response_time_proxy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `steps_<policy>.csv` per run and `kpi.csv` into `dir`.
pub fn write_artifacts(exp: &Experiment, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for run in &exp.runs {
        let path = dir.join(format!("steps_{}.csv", run.label));
        let file = BufWriter::new(File::create(&path)?);
        write_steps_csv(file, &run.label, &exp.fingerprint, &run.records)?;
        written.push(path);
    }
    let path = dir.join("kpi.csv");
    exp.comparison
        .write_csv(BufWriter::new(File::create(&path)?))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_csv_has_schema_line_and_all_columns() {
        let rec = StepRecord {
            t: 0.0,
            arrivals: 600.0,
            served: 600.0,
            failed: 0.0,
            y: 0.5,
            y_d: 0.5,
            e: 0.0,
            f_estim: None,
            u_raw: 1.0,
            m_commanded: 1,
            m_active: 1,
            avg_cpu_pct: 50.0,
            response_time_proxy: 0.2,
        };
        let mut buf = Vec::new();
        write_steps_csv(&mut buf, "static_1", "abc", &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines
            .next()
            .unwrap()
            .starts_with("# elastic-mfc steps schema v1"));
        assert_eq!(lines.next().unwrap(), STEP_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "0,600,600,0,0.5,0.5,0,,1,1,1,50,0.2");
    }
}
