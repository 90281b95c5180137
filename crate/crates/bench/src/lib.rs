//! Scalability scenarios comparing the coded memory with replication
//! baselines, plus CSV and SVG output.

pub mod emit;
pub mod scenario;

pub use emit::{csv_string, emit, read_csv, write_csv, EmitError, CSV_HEADER};
pub use scenario::{
    rows_for, run_many, run_point, run_scenario, Algo, BenchError, PointResult, ResultRow, Samples, Scenario,
    ScenarioOutcome, ScenarioSpec,
};
