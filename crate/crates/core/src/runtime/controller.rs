//! The controller: sole owner of the frame buffer, the tracks and their
//! attribute windows. Both clock modes drive the same state machine; workers
//! only ever see the job messages it hands out.

use std::collections::HashMap;

use crate::alignment::{alignment_residual, estimate_similarity, SimilarityTransform};
use crate::error::Result;
use crate::frame_buffer::{Completion, FrameStore, StageOutput};
use crate::model::{BBox, Frame, FrameId, Stage, Timestamp, TrackId};
use crate::runtime::trace::{AnnotatedFrame, AnnotatedTrack, AssignedTrack, EventKind, TraceEvent};
use crate::runtime::{PipelineConfig, RunMetrics};
use crate::scenario::Scenario;
use crate::scheduler::TaskSet;
use crate::synthetic::{
    associate, phantom_truth, stream_rng, synth_detect, synth_landmarks, synth_recognize,
    DetectorOutput, RecognizerOutput, StreamKind,
};
use crate::tracker::TrackRegistry;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectJob {
    pub frame_id: FrameId,
    pub frame_ts: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceJob {
    /// Index of the detection within its frame.
    pub face_index: usize,
    pub track_id: TrackId,
    pub bbox: BBox,
    pub tasks: TaskSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognizeJob {
    pub frame_id: FrameId,
    pub frame_ts: Timestamp,
    pub faces: Vec<FaceJob>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceResult {
    pub generating: SimilarityTransform,
    pub estimated: Option<SimilarityTransform>,
    pub residual: Option<f64>,
    pub recognition: RecognizerOutput,
}

/// Detection worker body.
pub fn run_detection(scenario: &Scenario, job: &DetectJob) -> DetectorOutput {
    let gt = scenario
        .ground_truth_at(job.frame_ts.min(scenario.duration()))
        .unwrap_or_default();
    let mut rng = stream_rng(scenario.seed, job.frame_id, StreamKind::Detection, 0);
    synth_detect(
        &gt,
        (scenario.width(), scenario.height()),
        job.frame_ts,
        &scenario.detector_model,
        &mut rng,
    )
}

/// Recognition worker body for one face: landmarks, alignment, attributes.
pub fn run_face(
    scenario: &Scenario,
    config: &PipelineConfig,
    frame_id: FrameId,
    frame_ts: Timestamp,
    face: &FaceJob,
) -> FaceResult {
    let idx = face.face_index as u64;
    let template = &config.template;
    let mut lm_rng = stream_rng(scenario.seed, frame_id, StreamKind::Landmarks, idx);
    let landmarks = synth_landmarks(&face.bbox, template, &scenario.landmark_model, &mut lm_rng);
    let estimated = estimate_similarity(&landmarks.points, template.points()).ok();
    let residual =
        estimated.and_then(|t| alignment_residual(&landmarks.points, template.points(), &t).ok());

    let gt = scenario
        .ground_truth_at(frame_ts.min(scenario.duration()))
        .unwrap_or_default();
    let truth = match associate(&gt, &face.bbox) {
        Some(f) => f.truth,
        None => phantom_truth(&mut stream_rng(
            scenario.seed,
            frame_id,
            StreamKind::Phantom,
            idx,
        )),
    };
    let mut rng = stream_rng(scenario.seed, frame_id, StreamKind::Recognition, idx);
    let recognition = synth_recognize(&truth, face.tasks, &scenario.recognizer_model, &mut rng);
    FaceResult {
        generating: landmarks.generating,
        estimated,
        residual,
        recognition,
    }
}

pub struct Controller<'a> {
    config: &'a PipelineConfig,
    store: FrameStore,
    tracks: TrackRegistry,
    /// Track owning each detection of a detected frame.
    face_tracks: HashMap<FrameId, Vec<Option<TrackId>>>,
    detect_floor: Option<FrameId>,
    recog_floor: Option<FrameId>,
    trace: Vec<TraceEvent>,
    annotated: Vec<AnnotatedFrame>,
    metrics: RunMetrics,
    face_ms_total: f64,
}

impl<'a> Controller<'a> {
    pub fn new(scenario: &Scenario, config: &'a PipelineConfig) -> Result<Self> {
        let [w, h] = scenario.frame_size;
        let mut c = Controller {
            config,
            store: FrameStore::new(config.buffer_capacity)?,
            tracks: TrackRegistry::new(config.tracker, w, h, config.window)?,
            face_tracks: HashMap::new(),
            detect_floor: None,
            recog_floor: None,
            trace: Vec::new(),
            annotated: Vec::new(),
            metrics: RunMetrics::default(),
            face_ms_total: 0.0,
        };
        c.emit(
            Timestamp::ZERO,
            EventKind::Start {
                scenario: scenario.fingerprint(),
                seed: scenario.seed,
                clock: config.clock_mode.to_string(),
                duration_ms: scenario.duration_ms,
                frame_rate: config.frame_rate,
                visualization_rate: config.visualization_rate,
                frame_size: scenario.frame_size,
            },
        );
        Ok(c)
    }

    fn emit(&mut self, ts: Timestamp, kind: EventKind) {
        self.trace.push(TraceEvent { ts, kind });
    }

    pub fn tracks(&self) -> &TrackRegistry {
        &self.tracks
    }

    pub fn store(&self) -> &FrameStore {
        &self.store
    }

    pub fn grab(&mut self, ts: Timestamp, frame: Frame) -> Result<()> {
        let (frame_id, frame_ts) = (frame.id, frame.timestamp);
        let evicted = self.store.push(frame)?;
        self.metrics.frames_grabbed += 1;
        self.emit(ts, EventKind::Grab { frame_id, frame_ts });
        if let Some(ev) = evicted {
            self.face_tracks.remove(&ev.id);
            self.emit(
                ts,
                EventKind::Evict {
                    frame_id: ev.id,
                    unprocessed: !ev.meta.detection_done,
                },
            );
        }
        Ok(())
    }

    /// Hand the detection worker the newest undetected frame, if it is idle.
    /// Frames older than the last one handed out are never served.
    pub fn next_detection_job(&mut self, ts: Timestamp) -> Result<Option<DetectJob>> {
        if self.store.in_flight(Stage::Detection).is_some() {
            return Ok(None);
        }
        let Some(frame) = self
            .store
            .checkout_after(Stage::Detection, self.detect_floor)?
        else {
            return Ok(None);
        };
        self.detect_floor = Some(frame.id);
        self.emit(
            ts,
            EventKind::Checkout {
                stage: Stage::Detection,
                frame_id: frame.id,
            },
        );
        Ok(Some(DetectJob {
            frame_id: frame.id,
            frame_ts: frame.timestamp,
        }))
    }

    pub fn detection_done(
        &mut self,
        ts: Timestamp,
        job: &DetectJob,
        output: DetectorOutput,
    ) -> Result<()> {
        let detections = output.detections;
        let completion = self
            .store
            .complete(job.frame_id, StageOutput::Detected(detections.clone()))?;
        if completion == Completion::Evicted {
            self.emit(
                ts,
                EventKind::DropNoop {
                    stage: Stage::Detection,
                    frame_id: job.frame_id,
                },
            );
            return Ok(());
        }
        self.metrics.detections_completed += 1;
        self.emit(
            ts,
            EventKind::DetectDone {
                frame_id: job.frame_id,
                frame_ts: job.frame_ts,
                latency_ms: output.latency_ms,
                detections: detections.clone(),
            },
        );

        let assignment = self
            .tracks
            .match_detections(&detections, job.frame_id, job.frame_ts)?;
        self.metrics.tracks_created += assignment.new_tracks.len() as u64;
        let mut assigned: Vec<AssignedTrack> = assignment
            .matched
            .iter()
            .map(|&(t, d)| (t, d, false))
            .chain(assignment.new_tracks.iter().map(|&(t, d)| (t, d, true)))
            .map(|(track_id, detection, new)| AssignedTrack {
                track_id,
                detection,
                bbox: detections[detection].bbox,
                new,
            })
            .collect();
        assigned.sort_by_key(|a| a.detection);
        self.face_tracks.insert(
            job.frame_id,
            assignment.tracks_by_detection(detections.len()),
        );
        self.emit(
            ts,
            EventKind::TrackUpdate {
                frame_id: job.frame_id,
                frame_ts: job.frame_ts,
                assigned,
                missed: assignment.missed,
            },
        );
        let removed = self.tracks.prune(ts);
        if !removed.is_empty() {
            self.emit(ts, EventKind::Prune { removed });
        }
        Ok(())
    }

    /// Hand the recognition worker the newest detected, unrecognized frame
    /// with live tracked faces. Frames whose tracks have all expired are
    /// closed immediately.
    pub fn next_recognition_job(&mut self, ts: Timestamp) -> Result<Option<RecognizeJob>> {
        if self.store.in_flight(Stage::Recognition).is_some() {
            return Ok(None);
        }
        loop {
            let Some(frame) = self
                .store
                .checkout_after(Stage::Recognition, self.recog_floor)?
            else {
                return Ok(None);
            };
            self.recog_floor = Some(frame.id);
            let owners = self.face_tracks.remove(&frame.id).unwrap_or_default();
            let faces: Vec<FaceJob> = frame
                .meta
                .detections
                .iter()
                .enumerate()
                .filter_map(|(i, det)| {
                    let track_id = owners.get(i).copied().flatten()?;
                    let track = self.tracks.get(track_id)?;
                    Some(FaceJob {
                        face_index: i,
                        track_id,
                        bbox: det.bbox,
                        tasks: self.config.cadence.tasks_for(track.recognition_cycle),
                    })
                })
                .collect();
            if faces.is_empty() {
                self.store.complete(frame.id, StageOutput::Recognized)?;
                continue;
            }
            self.emit(
                ts,
                EventKind::Checkout {
                    stage: Stage::Recognition,
                    frame_id: frame.id,
                },
            );
            return Ok(Some(RecognizeJob {
                frame_id: frame.id,
                frame_ts: frame.timestamp,
                faces,
            }));
        }
    }

    pub fn face_done(
        &mut self,
        ts: Timestamp,
        job: &RecognizeJob,
        face: &FaceJob,
        result: FaceResult,
    ) -> Result<()> {
        self.emit(
            ts,
            EventKind::Landmarks {
                frame_id: job.frame_id,
                track_id: face.track_id,
                generating: result.generating,
                estimated: result.estimated,
                residual: result.residual,
            },
        );
        let mut measurement = result.recognition.measurement;
        measurement.measured_at = ts;
        self.metrics.faces_recognized += 1;
        self.face_ms_total += result.recognition.latency_ms;
        self.emit(
            ts,
            EventKind::RecognizeDone {
                frame_id: job.frame_id,
                frame_ts: job.frame_ts,
                track_id: face.track_id,
                bbox: face.bbox,
                tasks: face.tasks,
                latency_ms: result.recognition.latency_ms,
                measurement: measurement.clone(),
            },
        );
        if let Some(track) = self.tracks.get_mut(face.track_id) {
            if !measurement.is_empty() {
                track.estimates.update(&measurement)?;
            }
            track.recognition_cycle += 1;
        }
        Ok(())
    }

    pub fn recognition_done(&mut self, ts: Timestamp, job: &RecognizeJob) -> Result<()> {
        if self.store.complete(job.frame_id, StageOutput::Recognized)? == Completion::Evicted {
            self.emit(
                ts,
                EventKind::DropNoop {
                    stage: Stage::Recognition,
                    frame_id: job.frame_id,
                },
            );
        }
        Ok(())
    }

    /// Compose the on-screen view from the newest frame and current tracks.
    /// Never waits on a worker.
    pub fn tick(&mut self, ts: Timestamp) -> AnnotatedFrame {
        let latest = self.store.latest().map(|f| (f.id, f.timestamp));
        let tracks: Vec<AnnotatedTrack> = self
            .tracks
            .tracks()
            .map(|t| {
                AnnotatedTrack::from_smoothed(
                    t.track_id,
                    t.last_box,
                    t.estimates.smoothed().as_ref(),
                    ts,
                )
            })
            .collect();
        let staleness_ms = tracks.iter().filter_map(|t| t.staleness_ms).collect();
        self.emit(
            ts,
            EventKind::Tick {
                frame_id: latest.map(|l| l.0),
                tracks: tracks.len(),
                staleness_ms,
            },
        );
        self.metrics.ticks += 1;
        let frame = AnnotatedFrame {
            ts,
            frame_id: latest.map(|l| l.0),
            frame_ts: latest.map(|l| l.1),
            tracks,
        };
        self.annotated.push(frame.clone());
        frame
    }

    pub fn finish(mut self) -> (Vec<TraceEvent>, Vec<AnnotatedFrame>, RunMetrics) {
        self.metrics.drop_count = self.store.drop_count();
        if self.metrics.faces_recognized > 0 {
            self.metrics.mean_face_recognition_ms =
                self.face_ms_total / self.metrics.faces_recognized as f64;
        }
        let ticks: Vec<Timestamp> = self.annotated.iter().map(|a| a.ts).collect();
        if ticks.len() >= 2 {
            let span = (ticks[ticks.len() - 1] - ticks[0]) as f64;
            self.metrics.achieved_fps = 1e6 / (span / (ticks.len() - 1) as f64);
        }
        let last = self.trace.last().map_or(Timestamp::ZERO, |e| e.ts);
        let events = self.trace.len() as u64;
        self.emit(last, EventKind::Finish { events });
        (self.trace, self.annotated, self.metrics)
    }
}
