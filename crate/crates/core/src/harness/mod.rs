//! End-to-end experiment driver: single runs, sweeps, initial-error CDFs and
//! convergence comparisons, with report and data-file emission.

mod config;
mod run;
mod study;
mod table;

pub use config::{
    Engine, ExperimentConfig, InitStrategy, PlacementStrategy, RtOverrides, SceneSource, Seeds, VlmModeName, VlmSettings,
};
pub use run::{run_estimation, run_experiment, Prepared, RunOutcome, RunReport, TimingBreakdown};
pub use study::{
    compare_convergence, complexity_study, init_cdf_study, summaries_from_csv, summaries_to_csv, sweep, Arm, ArmCurve, ArmSummary,
    CdfTable, Comparison, SweepAxis, SweepRow, SweepSummary, SweepTable, ITERATIONS_THRESHOLD,
};
pub use table::{linear_fit_r2, median};
