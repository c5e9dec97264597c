//! Experiment orchestration: configs, seeded streams, parallel runs,
//! aggregation and artifacts.

mod aggregate;
mod experiment;
mod seed;
mod svg;

pub use aggregate::{
    aggregate, curve_rounds, quantile, AggregateReport, RegretCurve, RunSummary, Scaling, MAX_CURVE_POINTS,
};
pub use experiment::{
    csv_name, run_experiment, workers_from_env, Algorithm, ExperimentSpec, Manifest, ManifestEntry, Prepared,
    AGGREGATE_FILE, MANIFEST_FILE, PLOT_FILE,
};
pub use seed::{seed_derive, RunStreams, ENV_TAG, EXP3_TAG, SCHEDULE_TAG};
pub use svg::render_regret_svg;
