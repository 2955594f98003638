//! Controller-owned bounded store of recent frames.
//!
//! Workers claim frames with [`FrameStore::checkout`] and hand results back
//! with [`FrameStore::complete`]. Checkout always serves the newest eligible
//! frame, and eviction drops the oldest frame that no worker is holding.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{Detection, Frame, FrameId, Stage};

pub const DEFAULT_CAPACITY: usize = 32;

/// Result handed back by a worker for a checked-out frame.
#[derive(Debug, Clone, PartialEq)]
pub enum StageOutput {
    Detected(Vec<Detection>),
    Recognized,
}

impl StageOutput {
    pub fn stage(&self) -> Stage {
        match self {
            StageOutput::Detected(_) => Stage::Detection,
            StageOutput::Recognized => Stage::Recognition,
        }
    }
}

/// What `complete` did with a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    Applied,
    /// The frame was evicted while in flight; the result was discarded.
    Evicted,
}

#[derive(Debug, Clone)]
pub struct FrameStore {
    capacity: usize,
    frames: VecDeque<Frame>,
    drop_count: u64,
    in_flight: [Option<FrameId>; 2],
    last_pushed: Option<FrameId>,
}

impl Default for FrameStore {
    fn default() -> Self {
        FrameStore::new(DEFAULT_CAPACITY).expect("default capacity is positive")
    }
}

/// Eligibility of a frame for a stage, ignoring in-flight marks.
pub fn is_eligible(frame: &Frame, stage: Stage) -> bool {
    let m = &frame.meta;
    match stage {
        Stage::Detection => !m.detection_done,
        Stage::Recognition => m.detection_done && !m.recognition_done && !m.detections.is_empty(),
    }
}

impl FrameStore {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config(
                "frame buffer capacity must be positive".into(),
            ));
        }
        Ok(FrameStore {
            capacity,
            frames: VecDeque::with_capacity(capacity + 1),
            drop_count: 0,
            in_flight: [None; 2],
            last_pushed: None,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frames evicted before detection ever ran on them.
    pub fn drop_count(&self) -> u64 {
        self.drop_count
    }

    pub fn in_flight(&self, stage: Stage) -> Option<FrameId> {
        self.in_flight[stage.index()]
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter()
    }

    pub fn get(&self, id: FrameId) -> Option<&Frame> {
        self.position(id).map(|i| &self.frames[i])
    }

    fn position(&self, id: FrameId) -> Option<usize> {
        // ids are strictly increasing, so binary search works
        self.frames.binary_search_by_key(&id, |f| f.id).ok()
    }

    /// Append a frame, evicting one if the store is over capacity.
    ///
    /// The evicted frame is the oldest one not checked out by any stage. If
    /// every older frame is in flight, the oldest in-flight frame goes and its
    /// later completion becomes a no-op.
    pub fn push(&mut self, mut frame: Frame) -> Result<Option<Frame>> {
        if let Some(last) = self.last_pushed {
            if frame.id <= last {
                return Err(Error::Ordering {
                    last,
                    got: frame.id,
                });
            }
        }
        frame.meta.in_flight = None;
        self.last_pushed = Some(frame.id);
        self.frames.push_back(frame);
        if self.frames.len() <= self.capacity {
            return Ok(None);
        }
        let older = self.frames.len() - 1;
        let victim = (0..older)
            .find(|&i| self.frames[i].meta.in_flight.is_none())
            .unwrap_or(0);
        let evicted = self.frames.remove(victim).expect("victim index in range");
        if !evicted.meta.detection_done {
            self.drop_count += 1;
        }
        Ok(Some(evicted))
    }

    /// Claim the newest eligible frame for `stage`.
    pub fn checkout(&mut self, stage: Stage) -> Result<Option<Frame>> {
        self.checkout_after(stage, None)
    }

    /// Like [`checkout`](Self::checkout), restricted to ids above `floor`.
    pub fn checkout_after(
        &mut self,
        stage: Stage,
        floor: Option<FrameId>,
    ) -> Result<Option<Frame>> {
        if let Some(held) = self.in_flight[stage.index()] {
            return Err(Error::Contract(format!(
                "{stage} already holds frame {held}"
            )));
        }
        let found = self.frames.iter().rposition(|f| {
            f.meta.in_flight.is_none() && is_eligible(f, stage) && floor.is_none_or(|fl| f.id > fl)
        });
        let Some(i) = found else {
            return Ok(None);
        };
        let frame = &mut self.frames[i];
        frame.meta.in_flight = Some(stage);
        self.in_flight[stage.index()] = Some(frame.id);
        Ok(Some(frame.clone()))
    }

    /// Hand back the result for a checked-out frame.
    pub fn complete(&mut self, frame_id: FrameId, output: StageOutput) -> Result<Completion> {
        let stage = output.stage();
        if self.in_flight[stage.index()] != Some(frame_id) {
            return Err(Error::Contract(format!(
                "frame {frame_id} is not checked out for {stage}"
            )));
        }
        self.in_flight[stage.index()] = None;
        let Some(i) = self.position(frame_id) else {
            return Ok(Completion::Evicted);
        };
        let meta = &mut self.frames[i].meta;
        meta.in_flight = None;
        match output {
            StageOutput::Detected(detections) => {
                meta.detections = detections;
                meta.detection_done = true;
            }
            StageOutput::Recognized => meta.recognition_done = true,
        }
        Ok(Completion::Applied)
    }

    /// Newest frame regardless of processing state.
    pub fn latest(&self) -> Option<&Frame> {
        self.frames.back()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, Timestamp};

    fn frame(id: FrameId) -> Frame {
        Frame::new(id, Timestamp(id * 40_000))
    }

    fn face() -> Detection {
        Detection::new(BBox::new(10.0, 10.0, 20.0, 20.0), 0.9).unwrap()
    }

    fn store_with(capacity: usize, ids: impl IntoIterator<Item = FrameId>) -> FrameStore {
        let mut s = FrameStore::new(capacity).unwrap();
        for id in ids {
            s.push(frame(id)).unwrap();
        }
        s
    }

    #[test]
    fn push_without_eviction() {
        let s = store_with(4, 1..=4);
        assert_eq!(s.len(), 4);
        assert_eq!(s.drop_count(), 0);
    }

    #[test]
    fn push_evicts_oldest_fifo() {
        let mut s = store_with(4, 1..=4);
        let ev = s.push(frame(5)).unwrap().unwrap();
        assert_eq!(ev.id, 1);
        assert_eq!(s.drop_count(), 1);
    }

    #[test]
    fn processed_eviction_is_not_a_drop() {
        let mut s = store_with(2, 1..=2);
        let f = s.checkout(Stage::Detection).unwrap().unwrap();
        assert_eq!(f.id, 2);
        s.complete(2, StageOutput::Detected(vec![])).unwrap();
        let f = s.checkout(Stage::Detection).unwrap().unwrap();
        s.complete(f.id, StageOutput::Detected(vec![])).unwrap();
        s.push(frame(3)).unwrap();
        assert_eq!(s.drop_count(), 0);
    }

    #[test]
    fn push_rejects_non_monotone_ids() {
        let mut s = store_with(4, [3]);
        assert!(matches!(
            s.push(frame(3)),
            Err(Error::Ordering { last: 3, got: 3 })
        ));
        assert!(matches!(s.push(frame(2)), Err(Error::Ordering { .. })));
    }

    #[test]
    fn zero_capacity_is_rejected() {
        assert!(FrameStore::new(0).is_err());
    }

    #[test]
    fn eviction_skips_checked_out_frame() {
        let mut s = store_with(4, [1]);
        assert_eq!(s.checkout(Stage::Detection).unwrap().unwrap().id, 1);
        for id in 2..=4 {
            s.push(frame(id)).unwrap();
        }
        assert_eq!(s.push(frame(5)).unwrap().unwrap().id, 2);
    }

    /// Exhaustive check of the eviction rule: capacity 4, frames 1..=4, every
    /// assignment of at most one detection and one recognition checkout.
    #[test]
    fn eviction_rule_exhaustive() {
        for det in [None, Some(1u64), Some(2), Some(3), Some(4)] {
            for rec in [None, Some(1u64), Some(2), Some(3), Some(4)] {
                if det.is_some() && det == rec {
                    continue;
                }
                let mut s = FrameStore::new(4).unwrap();
                for id in 1..=4 {
                    s.push(frame(id)).unwrap();
                }
                // make the recognition target eligible, then check it out
                if let Some(r) = rec {
                    s.frames[(r - 1) as usize].meta.detection_done = true;
                    s.frames[(r - 1) as usize].meta.detections = vec![face()];
                    s.frames[(r - 1) as usize].meta.in_flight = Some(Stage::Recognition);
                    s.in_flight[1] = Some(r);
                }
                if let Some(d) = det {
                    s.frames[(d - 1) as usize].meta.in_flight = Some(Stage::Detection);
                    s.in_flight[0] = Some(d);
                }
                let held: Vec<u64> = [det, rec].into_iter().flatten().collect();
                let expected = (1..=4).find(|id| !held.contains(id)).unwrap();
                let ev = s.push(frame(5)).unwrap().unwrap();
                assert_eq!(ev.id, expected, "det={det:?} rec={rec:?}");
                assert_eq!(s.len(), 4);
            }
        }
    }

    #[test]
    fn orphaned_completion_is_noop() {
        let mut s = store_with(1, [1]);
        assert_eq!(s.checkout(Stage::Detection).unwrap().unwrap().id, 1);
        let ev = s.push(frame(2)).unwrap().unwrap();
        assert_eq!(ev.id, 1);
        assert_eq!(
            s.complete(1, StageOutput::Detected(vec![face()])).unwrap(),
            Completion::Evicted
        );
        assert_eq!(s.in_flight(Stage::Detection), None);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn checkout_serves_newest_undetected() {
        let mut s = store_with(8, [1, 2]);
        assert_eq!(s.checkout(Stage::Detection).unwrap().unwrap().id, 2);
    }

    #[test]
    fn checkout_none_when_all_detected() {
        let mut s = store_with(8, [1]);
        s.checkout(Stage::Detection).unwrap();
        s.complete(1, StageOutput::Detected(vec![])).unwrap();
        assert!(s.checkout(Stage::Detection).unwrap().is_none());
        assert_eq!(s.in_flight(Stage::Detection), None);
    }

    #[test]
    fn recognition_skips_faceless_frames() {
        let mut s = store_with(8, [3, 4]);
        s.checkout(Stage::Detection).unwrap();
        s.complete(4, StageOutput::Detected(vec![])).unwrap();
        s.checkout(Stage::Detection).unwrap();
        s.complete(3, StageOutput::Detected(vec![face(), face()]))
            .unwrap();
        assert_eq!(s.checkout(Stage::Recognition).unwrap().unwrap().id, 3);
    }

    #[test]
    fn detected_frame_becomes_recognition_eligible() {
        let mut s = store_with(8, [3]);
        s.checkout(Stage::Detection).unwrap();
        s.complete(3, StageOutput::Detected(vec![face()])).unwrap();
        let f = s.get(3).unwrap();
        assert!(f.meta.detection_done && is_eligible(f, Stage::Recognition));
    }

    #[test]
    fn double_checkout_is_contract_error() {
        let mut s = store_with(8, [1, 2]);
        s.checkout(Stage::Detection).unwrap();
        assert!(matches!(
            s.checkout(Stage::Detection),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn completing_unclaimed_frame_is_contract_error() {
        let mut s = store_with(8, [1, 2]);
        assert!(matches!(
            s.complete(1, StageOutput::Recognized),
            Err(Error::Contract(_))
        ));
        s.checkout(Stage::Detection).unwrap();
        assert!(s.complete(1, StageOutput::Detected(vec![])).is_err());
    }

    #[test]
    fn checkout_floor_excludes_older_frames() {
        let mut s = store_with(8, [1, 2]);
        assert!(s
            .checkout_after(Stage::Detection, Some(2))
            .unwrap()
            .is_none());
        assert_eq!(
            s.checkout_after(Stage::Detection, Some(0))
                .unwrap()
                .unwrap()
                .id,
            2
        );
    }

    #[test]
    fn latest_examples() {
        let s = FrameStore::new(4).unwrap();
        assert!(s.latest().is_none());
        let mut s = store_with(8, 1..=5);
        assert_eq!(s.latest().unwrap().id, 5);
        s.checkout(Stage::Detection).unwrap();
        assert_eq!(s.latest().unwrap().id, 5);
    }
}
