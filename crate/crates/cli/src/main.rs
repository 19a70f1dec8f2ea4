use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use elastic_mfc::config::{ExperimentConfig, KEYS};
use elastic_mfc::{run_experiment, write_artifacts, Error};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Run the elasticity experiment: simulate each scaling policy on a
/// workload trace, write per-period telemetry and the KPI comparison.
#[derive(Debug, Parser)]
#[command(name = "elastic-mfc", version)]
struct Args {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Policy to run: mfc, target_tracking, static or static_<n>. Repeatable.
    #[arg(long = "policy", value_name = "NAME")]
    policies: Vec<String>,

    /// VM count for `--policy static`. Repeatable.
    #[arg(long = "static-count", value_name = "N")]
    static_counts: Vec<u32>,

    /// Workload source.
    #[arg(long, value_parser = ["csv", "step", "spiky"])]
    trace: Option<String>,

    /// Trace file for `--trace csv` (columns t_seconds, rate_rps).
    #[arg(long, value_name = "PATH")]
    trace_path: Option<PathBuf>,

    #[arg(long, env = "ELASTIC_MFC_SEED")]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override any config key, e.g. `--set k_p=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Check the configuration and exit.
    #[arg(long)]
    validate_only: bool,
}

fn build_config(args: &Args) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::Io(io) => Error::Config {
                key: "config".into(),
                reason: format!("{}: {io}", path.display()),
            },
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config {
            key: kv.clone(),
            reason: format!("expected KEY=VALUE; known keys: {}", KEYS.join(", ")),
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    if !args.policies.is_empty() {
        cfg.set("policy", &args.policies.join(","))?;
    }
    if !args.static_counts.is_empty() {
        cfg.static_counts = args.static_counts.clone();
    }
    if let Some(t) = &args.trace {
        cfg.set("trace", t)?;
    }
    if let Some(p) = &args.trace_path {
        cfg.trace_path = Some(p.clone());
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match build_config(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let diagnostics = cfg.diagnostics();
    if !diagnostics.is_empty() {
        for d in &diagnostics {
            eprintln!("config error: {d}");
        }
        return ExitCode::from(EXIT_CONFIG);
    }
    if args.validate_only {
        println!("ok");
        return ExitCode::SUCCESS;
    }

    let exp = match run_experiment(&cfg) {
        Ok(exp) => exp,
        Err(e) => {
            eprintln!("run failed: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let written = match write_artifacts(&exp, &cfg.out) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("cannot write artifacts to {}: {e}", cfg.out.display());
            return ExitCode::from(EXIT_RUNTIME);
        }
    };

    println!(
        "trace: {} ({} periods, {:.0} requests), config {}",
        cfg.trace,
        exp.trace.len(),
        exp.trace.total_requests(),
        exp.fingerprint
    );
    print!("{}", exp.comparison.to_table());
    for p in written {
        println!("wrote {}", p.display());
    }
    ExitCode::SUCCESS
}
