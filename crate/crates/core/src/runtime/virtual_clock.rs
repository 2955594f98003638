//! Discrete-event driver for the controller.
//!
//! Events are processed in `(ts, sequence)` order; events scheduled for the
//! same instant run in the order they were scheduled.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::Result;
use crate::model::{ms_to_us, Frame, Timestamp};
use crate::runtime::controller::{
    run_detection, run_face, Controller, DetectJob, FaceJob, FaceResult, RecognizeJob,
};
use crate::runtime::{PipelineConfig, RunOutput};
use crate::scenario::Scenario;
use crate::synthetic::DetectorOutput;

struct Entry<E> {
    ts: Timestamp,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.ts, self.seq) == (other.ts, other.seq)
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.ts, self.seq).cmp(&(other.ts, other.seq))
    }
}

/// Min-queue of timestamped events with FIFO tie-breaking.
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    next_seq: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
        }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, ts: Timestamp, event: E) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry { ts, seq, event }));
    }

    pub fn pop(&mut self) -> Option<(Timestamp, E)> {
        self.heap.pop().map(|Reverse(e)| (e.ts, e.event))
    }

    pub fn peek_ts(&self) -> Option<Timestamp> {
        self.heap.peek().map(|Reverse(e)| e.ts)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

enum SimEvent {
    Grab(u64),
    Tick(u64),
    DetectDone(DetectJob, DetectorOutput),
    FaceDone(FaceJob, Box<FaceResult>),
    RecognitionDone,
}

pub(crate) fn run_virtual(scenario: &Scenario, config: &PipelineConfig) -> Result<RunOutput> {
    let mut ctl = Controller::new(scenario, config)?;
    let end = scenario.duration();
    let frame_us = config.frame_interval_us();
    let tick_us = config.tick_interval_us();
    let [w, h] = scenario.frame_size;

    // the one recognition job whose face events are still queued
    let mut pending: Option<RecognizeJob> = None;
    let mut queue = EventQueue::new();
    queue.schedule(Timestamp::ZERO, SimEvent::Grab(0));
    queue.schedule(Timestamp::ZERO, SimEvent::Tick(0));

    while let Some((ts, event)) = queue.pop() {
        if ts >= end {
            break;
        }
        match event {
            SimEvent::Grab(k) => {
                ctl.grab(ts, Frame::with_size(k, ts, w, h))?;
                queue.schedule(Timestamp((k + 1) * frame_us), SimEvent::Grab(k + 1));
            }
            SimEvent::Tick(k) => {
                ctl.tick(ts);
                queue.schedule(Timestamp((k + 1) * tick_us), SimEvent::Tick(k + 1));
            }
            SimEvent::DetectDone(job, output) => ctl.detection_done(ts, &job, output)?,
            SimEvent::FaceDone(face, result) => {
                let job = pending.as_ref().expect("recognition job pending");
                ctl.face_done(ts, job, &face, *result)?;
            }
            SimEvent::RecognitionDone => {
                let job = pending.take().expect("recognition job pending");
                ctl.recognition_done(ts, &job)?;
            }
        }

        if let Some(job) = ctl.next_detection_job(ts)? {
            let output = run_detection(scenario, &job);
            let done = ts + ms_to_us(output.latency_ms);
            queue.schedule(done, SimEvent::DetectDone(job, output));
        }
        if let Some(job) = ctl.next_recognition_job(ts)? {
            let mut t = ts;
            for face in &job.faces {
                let result = run_face(scenario, config, job.frame_id, job.frame_ts, face);
                t = t + ms_to_us(result.recognition.latency_ms);
                queue.schedule(t, SimEvent::FaceDone(face.clone(), Box::new(result)));
            }
            queue.schedule(t, SimEvent::RecognitionDone);
            pending = Some(job);
        }
    }

    let (trace, annotated, metrics) = ctl.finish();
    Ok(RunOutput {
        trace,
        annotated,
        metrics,
    })
}
