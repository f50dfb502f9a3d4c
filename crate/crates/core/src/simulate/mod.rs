//! Simulation study: synthetic populations, replicated sweeps, coverage.

pub mod auc;
pub mod dgp;
pub mod logistic;
pub mod sweep;

pub use auc::group_auc;
pub use dgp::{generate_population, Membership, SimConfig, SimPopulation};
pub use logistic::{fit_logistic, LogisticModel};
pub use sweep::{
    population_truth, run_coverage_study, run_replication, run_scenario_sweep, simulate_replication, write_sweep_csv,
    CellSummary, CoverageRun, CoverageSummary, PopulationTruth, ReplicationRow, SweepAxis, SweepTable,
};
