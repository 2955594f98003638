//! Real-time face analysis pipeline: a detector and a multi-attribute
//! recognizer fed from a shared frame buffer, a centroid tracker that keeps
//! identities across frames, and per-track temporal smoothing of age, gender
//! and expression estimates.
//!
//! The heavy models are replaced by seeded synthetic stand-ins driven by a
//! [`scenario::Scenario`], so every run can be replayed exactly under the
//! virtual clock and scored against ground truth with [`evaluation`].

pub mod aggregation;
pub mod alignment;
pub mod error;
pub mod evaluation;
pub mod frame_buffer;
pub mod model;
pub mod runtime;
pub mod scenario;
pub mod scheduler;
pub mod synthetic;
pub mod tracker;

pub use error::{Error, Result};
pub use model::{
    AttributeMeasurement, BBox, Detection, Expression, ExpressionDist, Frame, Gender, Point,
    Timestamp,
};
pub use runtime::{run, ClockMode, PipelineConfig, RunMetrics, RunOutput};
pub use scenario::Scenario;
