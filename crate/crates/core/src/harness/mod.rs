//! Experiment configs, the four experiment families, batch statistics and
//! output writers behind the `sim` binary.

mod config;
mod experiments;
mod output;
pub mod plot;
mod stats;

pub use config::{BoundsConfig, ExperimentConfig, ExperimentKind, PAPER_SCALE_TRIALS};
pub use experiments::{
    bounds_disc, bounds_hex, bounds_knn, bounds_poisson, calibrate_sponsored, converge_times, run_bounds, run_compare,
    run_converge, run_lifetime, series_value, trial_seeds, AggregateRow, BatchResult, BoundsReport, BoundsRow, Cell,
    CellResult, TrialRun, DISC_TOLERANCE, HEX_D_TOLERANCE, HEX_U_RANGE, KNN_RELATIVE_TOLERANCE, POISSON_TOLERANCE,
    SERIES,
};
pub use output::{
    raw_dir, read_aggregate_csv, write_aggregate_csv, write_batch, write_bounds, write_bounds_csv,
    write_config_header, write_half_life_csv, write_raw, AggregateRecord, AGGREGATE_CSV_HEADER, BOUNDS_CSV_HEADER,
    HALF_LIFE_CSV_HEADER,
};
pub use plot::emit_plots;
pub use stats::{batch_interval, t_critical, Interval};

/// Runs the batch experiment a config describes.
pub fn run_batch(config: &ExperimentConfig) -> crate::Result<BatchResult> {
    match config.experiment {
        ExperimentKind::Converge => run_converge(config),
        ExperimentKind::Compare => run_compare(config),
        ExperimentKind::Lifetime => run_lifetime(config),
        ExperimentKind::Bounds => {
            Err(crate::Error::Config("bounds produces a report, not a batch; use run_bounds".into()))
        }
    }
}
