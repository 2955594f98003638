//! Trace events and annotated frames, plus their JSON-lines encoding.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::aggregation::SmoothedAttributes;
use crate::alignment::SimilarityTransform;
use crate::error::{Error, Result};
use crate::model::{
    AttributeMeasurement, BBox, Detection, Expression, FrameId, Gender, Stage, Timestamp, TrackId,
};
use crate::scheduler::TaskSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub ts: Timestamp,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignedTrack {
    pub track_id: TrackId,
    pub detection: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub new: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// First event of every trace; identifies the scenario and rates.
    Start {
        scenario: String,
        seed: u64,
        clock: String,
        duration_ms: u64,
        frame_rate: f64,
        visualization_rate: f64,
        frame_size: [u32; 2],
    },
    Grab {
        frame_id: FrameId,
        frame_ts: Timestamp,
    },
    Evict {
        frame_id: FrameId,
        unprocessed: bool,
    },
    Checkout {
        stage: Stage,
        frame_id: FrameId,
    },
    DetectDone {
        frame_id: FrameId,
        frame_ts: Timestamp,
        latency_ms: f64,
        detections: Vec<Detection>,
    },
    TrackUpdate {
        frame_id: FrameId,
        frame_ts: Timestamp,
        assigned: Vec<AssignedTrack>,
        missed: Vec<TrackId>,
    },
    Prune {
        removed: Vec<TrackId>,
    },
    Landmarks {
        frame_id: FrameId,
        track_id: TrackId,
        /// Template-to-image transform the synthetic landmarks came from.
        generating: SimilarityTransform,
        /// Image-to-template alignment recovered from the landmarks.
        estimated: Option<SimilarityTransform>,
        residual: Option<f64>,
    },
    RecognizeDone {
        frame_id: FrameId,
        frame_ts: Timestamp,
        track_id: TrackId,
        #[serde(rename = "box")]
        bbox: BBox,
        tasks: TaskSet,
        latency_ms: f64,
        measurement: AttributeMeasurement,
    },
    Tick {
        frame_id: Option<FrameId>,
        tracks: usize,
        /// Staleness of every labelled track on screen.
        staleness_ms: Vec<f64>,
    },
    DropNoop {
        stage: Stage,
        frame_id: FrameId,
    },
    /// Last event of every complete trace; `events` counts those before it.
    Finish {
        events: u64,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Start { .. } => "start",
            EventKind::Grab { .. } => "grab",
            EventKind::Evict { .. } => "evict",
            EventKind::Checkout { .. } => "checkout",
            EventKind::DetectDone { .. } => "detect_done",
            EventKind::TrackUpdate { .. } => "track_update",
            EventKind::Prune { .. } => "prune",
            EventKind::Landmarks { .. } => "landmarks",
            EventKind::RecognizeDone { .. } => "recognize_done",
            EventKind::Tick { .. } => "tick",
            EventKind::DropNoop { .. } => "drop_noop",
            EventKind::Finish { .. } => "finish",
        }
    }
}

/// One visible track as drawn by the visualization loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedTrack {
    pub track_id: TrackId,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub age: Option<i64>,
    pub gender: Option<Gender>,
    pub expression: Option<Expression>,
    pub staleness_ms: Option<f64>,
}

impl AnnotatedTrack {
    pub fn from_smoothed(
        track_id: TrackId,
        bbox: BBox,
        smoothed: Option<&SmoothedAttributes>,
        now: Timestamp,
    ) -> Self {
        AnnotatedTrack {
            track_id,
            bbox,
            age: smoothed.and_then(|s| s.age).map(|a| a.round() as i64),
            gender: smoothed.and_then(|s| s.gender).map(|g| g.label),
            expression: smoothed.and_then(|s| s.expression).map(|e| e.label),
            staleness_ms: smoothed
                .map(|s| now.saturating_sub(s.newest_measurement) as f64 / 1000.0),
        }
    }

    pub fn has_labels(&self) -> bool {
        self.age.is_some() || self.gender.is_some() || self.expression.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedFrame {
    pub ts: Timestamp,
    pub frame_id: Option<FrameId>,
    pub frame_ts: Option<Timestamp>,
    pub tracks: Vec<AnnotatedTrack>,
}

/// Serialize values one JSON document per line.
pub fn write_jsonl<T: Serialize, W: Write>(mut out: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn to_jsonl_string<T: Serialize>(items: &[T]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, items).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Parse a JSON-lines trace. A line that fails to parse, including a
/// truncated final line, is an error.
pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<TraceEvent>> {
    let mut events = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: TraceEvent = serde_json::from_str(&line)
            .map_err(|e| Error::Mismatch(format!("trace line {}: {e}", n + 1)))?;
        events.push(ev);
    }
    Ok(events)
}
