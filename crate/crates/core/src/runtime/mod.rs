//! Pipeline engine: grabber, controller with visualization, detection worker
//! and recognition worker.
//!
//! [`ClockMode::Virtual`] replays the message contract as a discrete-event
//! simulation, so every timing is exact and reruns are byte-identical.
//! [`ClockMode::Realtime`] runs the same contract on OS threads against the
//! wall clock.

mod controller;
mod ppm;
mod realtime;
mod trace;
mod virtual_clock;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use controller::{
    run_detection, run_face, Controller, DetectJob, FaceJob, FaceResult, RecognizeJob,
};
pub use ppm::render_ppm;
pub use trace::{
    read_trace, to_jsonl_string, write_jsonl, AnnotatedFrame, AnnotatedTrack, AssignedTrack,
    EventKind, TraceEvent,
};
pub use virtual_clock::EventQueue;

use crate::aggregation::DEFAULT_WINDOW;
use crate::alignment::FaceTemplate;
use crate::error::{Error, Result};
use crate::frame_buffer::DEFAULT_CAPACITY;
use crate::scenario::Scenario;
use crate::scheduler::CadencePolicy;
use crate::tracker::TrackerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    Realtime,
    #[default]
    Virtual,
}

impl fmt::Display for ClockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClockMode::Realtime => "realtime",
            ClockMode::Virtual => "virtual",
        })
    }
}

impl FromStr for ClockMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "realtime" => Ok(ClockMode::Realtime),
            "virtual" => Ok(ClockMode::Virtual),
            other => Err(Error::Config(format!("unknown clock mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub clock_mode: ClockMode,
    /// Grabber rate, frames per second.
    pub frame_rate: f64,
    /// Visualization tick rate, frames per second.
    pub visualization_rate: f64,
    pub buffer_capacity: usize,
    pub tracker: TrackerConfig,
    pub cadence: CadencePolicy,
    /// Aggregation window length K.
    pub window: usize,
    pub template: FaceTemplate,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            clock_mode: ClockMode::Virtual,
            frame_rate: 25.0,
            visualization_rate: 25.0,
            buffer_capacity: DEFAULT_CAPACITY,
            tracker: TrackerConfig::default(),
            cadence: CadencePolicy::default(),
            window: DEFAULT_WINDOW,
            template: FaceTemplate::canonical68(),
        }
    }
}

impl PipelineConfig {
    /// Defaults, overridden by the scenario's frame rate and `pipeline` block.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        let p = &scenario.pipeline;
        let d = PipelineConfig::default();
        PipelineConfig {
            frame_rate: scenario.frame_rate,
            visualization_rate: p.visualization_rate.unwrap_or(d.visualization_rate),
            buffer_capacity: p.buffer_capacity.unwrap_or(d.buffer_capacity),
            tracker: p.tracker.unwrap_or(d.tracker),
            cadence: p.cadence.unwrap_or(d.cadence),
            window: p.window.unwrap_or(d.window),
            ..d
        }
    }

    pub fn with_clock(mut self, mode: ClockMode) -> Self {
        self.clock_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("frame_rate", self.frame_rate),
            ("visualization_rate", self.visualization_rate),
        ] {
            if !rate.is_finite() || rate <= 0.0 || 1e6 / rate < 1.0 {
                return Err(Error::Config(format!(
                    "{name} must be positive and at most 1 MHz, got {rate}"
                )));
            }
        }
        if self.buffer_capacity == 0 {
            return Err(Error::Config("buffer capacity must be positive".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("aggregation window must be positive".into()));
        }
        self.tracker.validate()?;
        self.cadence.validate()?;
        Ok(())
    }

    pub fn frame_interval_us(&self) -> u64 {
        (1e6 / self.frame_rate).round() as u64
    }

    pub fn tick_interval_us(&self) -> u64 {
        (1e6 / self.visualization_rate).round() as u64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub frames_grabbed: u64,
    pub ticks: u64,
    pub detections_completed: u64,
    pub faces_recognized: u64,
    pub tracks_created: u64,
    pub drop_count: u64,
    /// Mean recognizer time per face, milliseconds.
    pub mean_face_recognition_ms: f64,
    pub achieved_fps: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceEvent>,
    pub annotated: Vec<AnnotatedFrame>,
    pub metrics: RunMetrics,
}

impl RunOutput {
    pub fn trace_jsonl(&self) -> String {
        to_jsonl_string(&self.trace)
    }

    pub fn annotated_jsonl(&self) -> String {
        to_jsonl_string(&self.annotated)
    }
}

/// Run the pipeline over a scenario until its duration elapses.
pub fn run(scenario: &Scenario, config: &PipelineConfig) -> Result<RunOutput> {
    scenario.validate()?;
    config.validate()?;
    match config.clock_mode {
        ClockMode::Virtual => virtual_clock::run_virtual(scenario, config),
        ClockMode::Realtime => realtime::run_realtime(scenario, config),
    }
}
