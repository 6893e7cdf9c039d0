//! Experiment orchestration: config files, execution of seeded
//! (algorithm, topology, SNR, seed) grids, result persistence, and
//! seed-averaged summary tables.

mod config;
mod grid;
mod summary;

pub use config::{parse_config, ExperimentConfig, TRANSMIT_POWER};
pub use grid::{run_grid, AgentDiagnostics, RunRecord, CENTRALIZED, RESULTS_FILE};
pub use summary::{
    read_results_csv, summarize_dir, summarize_records, SummaryRow, SUMMARY_FILE,
};
