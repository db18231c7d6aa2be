//! Training runs, sweeps and result summaries.

pub mod config;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{Algorithm, RunConfig, Scheme, SweepConfig};
pub use report::{emit_plot_data, Observation, SummaryRow};
pub use run::{evaluate_policy, evaluate_run, load_run, run_training, train, train_or_load, EvalSummary, Policy, RunRecord};
pub use sweep::{run_power_sweep, run_qos_sweep, SweepAxis, SweepResult};
