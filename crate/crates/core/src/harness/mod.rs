//! Seeded replication experiments: error tables, bound overlays, coverage
//! checks and the reproduction of the numerical study.
//!
//! Every history is drawn from a seed derived from the master seed and the
//! tuple `(policy, T, N, replication)`, so results do not depend on the
//! number of workers or on which other estimators are configured. OS and AS
//! share their adaptive-reset histories; FHN and FHC with the same `T`
//! share their fixed-horizon histories.

mod config;
mod emit;
mod runner;
mod table1;

pub use config::{
    figure2_config, ChainSource, EstimatorEntry, ExperimentConfig, OutputFormat, OutputPaths,
    ResolvedChain,
};
pub use emit::{
    read_json, read_results_csv, write_coverage_csv, write_json, write_results_csv,
    write_summary_csv, write_sweep_csv, ExperimentOutput,
};
pub use runner::{
    coverage_check, run_experiment, summarize, sweep_horizon, CoverageRow, CoverageStatus,
    ResultRow, SummaryRow, SweepOutput, SweepRow,
};
pub use table1::{fh_rate_chain, loglog_slope, table1, Table1Config, Table1Row};
