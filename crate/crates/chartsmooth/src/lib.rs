//! Command-line pipeline around `chartsmooth-core`: metric and atlas files,
//! stage orchestration, JSON reports and CSV plot data.

pub mod error;
pub mod formats;
pub mod pipeline;
pub mod plot;
pub mod stages;

pub use error::{Error, Result};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineReport};

/// Schema tag carried by every pipeline report.
pub const SCHEMA_TAG: &str = "chartsmooth.pipeline-report/1";

/// JSON schema of [`PipelineReport`].
pub const REPORT_SCHEMA: &str = include_str!("../schema/pipeline-report.schema.json");
