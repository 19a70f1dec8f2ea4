//! Model-free control of a VM cluster's size, with a simulated cluster,
//! workload generators, baseline autoscalers and cost/QoS indicators.
//!
//! The controller ([`mfc`]) is plant-agnostic. [`sim::simulate`] closes the
//! loop around [`cluster`] with any [`policy::ScalingPolicy`], and [`kpi`]
//! turns runs into the VM-seconds / CPU-deviation comparison.

pub mod cluster;
pub mod config;
pub mod error;
pub mod experiment;
pub mod kpi;
pub mod mfc;
pub mod policy;
pub mod sim;
pub mod workload;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use experiment::{run_experiment, write_artifacts, Experiment};
pub use mfc::{Controller, ControllerConfig, EstimatorKind, OnlineKpSign};
pub use policy::ScalingPolicy;
pub use sim::{simulate, SimRun, StepRecord};
