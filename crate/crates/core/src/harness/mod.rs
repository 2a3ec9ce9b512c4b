//! Experiment driver: configuration, the active-learning loop and artifact emission.

pub mod config;
pub mod emit;
pub mod run;

pub use config::{ALConfig, DatasetConfig, InitConfig, MnistConfig, SelectionRule};
pub use emit::{
    emit_aggregate_csv, emit_csv, emit_heatmap, emit_latent_dump, emit_score_dump, heatmap_grid,
    HeatmapGrid, HeatmapKind,
};
pub use run::{
    aggregate, compare, oracle, prepare, run_once, run_prepared, run_repeated, AggregateRow,
    CycleMetrics, OracleAnswer, Prepared, RepeatedResult, RunOptions, RunResult,
};
