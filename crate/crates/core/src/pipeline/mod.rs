//! The offline and online stages wired into resumable commands that read
//! and write artifacts under one output directory.
//!
//! Layout of the output directory:
//!
//! ```text
//! apps/<id>/vanilla.ckpt   apps/<id>/train.json
//! apps/<id>/roadmap.json   apps/<id>/seed.ckpt
//! apps/<id>/multicap.bin   apps/<id>/recover.json
//! apps/<id>/profile.json
//! schedule.json
//! traces.json  metrics.json  sweep.json
//! report.md  sweep.csv
//! manifests/<command>.json
//! ```

mod commands;
mod config;
mod manifest;

pub use commands::{
    exit_code, MetricsReport, OracleCheck, Pipeline, RecoverReport, RequestApp, ScheduleRequest,
    ScheduleResponse, ScheduledPlan, SweepReport, TraceSet, TrainReport, ARTIFACT_SCHEMA_VERSION,
    COMMANDS,
};
pub use config::{
    AppConfig, BenchmarkSettings, DatasetSource, PipelineConfig, ProfileSettings, PruneSettings,
    SweepSettings, TrainSettings, CONFIG_SCHEMA_VERSION,
};
pub use manifest::{
    sha256_bytes, sha256_file, timestamp, ArtifactRef, RunManifest, MANIFEST_SCHEMA_VERSION,
};
