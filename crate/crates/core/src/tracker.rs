//! Nearest-centroid association of detections to persistent face tracks.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::aggregation::AttributeWindows;
use crate::error::{Error, Result};
use crate::model::{BBox, Detection, FrameId, Point, Timestamp, TrackId};

const CENTROID_HISTORY: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Match gate as a fraction of the frame diagonal.
    pub max_match_distance: f64,
    /// A track is dropped once it has missed more than this many detection passes.
    pub expiry_misses: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            max_match_distance: 0.10,
            expiry_misses: 10,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.max_match_distance.is_finite() || self.max_match_distance <= 0.0 {
            return Err(Error::Config(format!(
                "max_match_distance must be positive, got {}",
                self.max_match_distance
            )));
        }
        if self.expiry_misses < 1 {
            return Err(Error::Config("expiry_misses must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FaceTrack {
    pub track_id: TrackId,
    pub last_box: BBox,
    pub centroid_history: VecDeque<(Timestamp, Point)>,
    pub last_seen_frame: FrameId,
    pub missed_count: u32,
    pub estimates: AttributeWindows,
    pub recognition_cycle: u64,
}

impl FaceTrack {
    pub fn centroid(&self) -> Point {
        self.last_box.center()
    }

    fn observe(&mut self, bbox: BBox, frame_id: FrameId, ts: Timestamp) {
        self.last_box = bbox;
        self.last_seen_frame = frame_id;
        self.missed_count = 0;
        self.centroid_history.push_back((ts, bbox.center()));
        while self.centroid_history.len() > CENTROID_HISTORY {
            self.centroid_history.pop_front();
        }
    }
}

/// Outcome of associating one frame's detections.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(track, detection index)` pairs in acceptance order.
    pub matched: Vec<(TrackId, usize)>,
    /// Tracks spawned for unmatched detections, `(track, detection index)`.
    pub new_tracks: Vec<(TrackId, usize)>,
    pub missed: Vec<TrackId>,
}

impl Assignment {
    pub fn new_track_ids(&self) -> Vec<TrackId> {
        self.new_tracks.iter().map(|(t, _)| *t).collect()
    }

    /// Track owning each detection, indexed by detection.
    pub fn tracks_by_detection(&self, n_detections: usize) -> Vec<Option<TrackId>> {
        let mut out = vec![None; n_detections];
        for &(t, d) in self.matched.iter().chain(&self.new_tracks) {
            out[d] = Some(t);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrackRegistry {
    config: TrackerConfig,
    gate_px: f64,
    window: usize,
    tracks: BTreeMap<TrackId, FaceTrack>,
    next_id: TrackId,
    last_frame: Option<FrameId>,
}

impl TrackRegistry {
    pub fn new(
        config: TrackerConfig,
        frame_width: u32,
        frame_height: u32,
        window: usize,
    ) -> Result<Self> {
        config.validate()?;
        AttributeWindows::new(window)?;
        let diagonal = (frame_width as f64).hypot(frame_height as f64);
        Ok(TrackRegistry {
            config,
            gate_px: config.max_match_distance * diagonal,
            window,
            tracks: BTreeMap::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Match gate in pixels.
    pub fn gate_px(&self) -> f64 {
        self.gate_px
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn tracks(&self) -> impl Iterator<Item = &FaceTrack> {
        self.tracks.values()
    }

    pub fn get(&self, id: TrackId) -> Option<&FaceTrack> {
        self.tracks.get(&id)
    }

    pub fn get_mut(&mut self, id: TrackId) -> Option<&mut FaceTrack> {
        self.tracks.get_mut(&id)
    }

    pub fn last_frame(&self) -> Option<FrameId> {
        self.last_frame
    }

    /// Greedy nearest-centroid matching.
    ///
    /// Every (track, detection) pair within the gate is ranked by centroid
    /// distance, ties by track id then detection index, and accepted while
    /// both sides are still free.
    pub fn match_detections(
        &mut self,
        detections: &[Detection],
        frame_id: FrameId,
        ts: Timestamp,
    ) -> Result<Assignment> {
        if let Some(last) = self.last_frame {
            if frame_id <= last {
                return Err(Error::Contract(format!(
                    "tracker saw frame {last}, cannot go back to {frame_id}"
                )));
            }
        }
        self.last_frame = Some(frame_id);

        let centers: Vec<Point> = detections.iter().map(|d| d.bbox.center()).collect();
        let mut pairs: Vec<(f64, TrackId, usize)> = Vec::new();
        for track in self.tracks.values() {
            let c = track.centroid();
            for (j, dc) in centers.iter().enumerate() {
                let d = c.distance(*dc);
                if d <= self.gate_px {
                    pairs.push((d, track.track_id, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut det_taken = vec![false; detections.len()];
        let mut assignment = Assignment::default();
        for (_, tid, j) in pairs {
            if det_taken[j] || assignment.matched.iter().any(|(t, _)| *t == tid) {
                continue;
            }
            det_taken[j] = true;
            assignment.matched.push((tid, j));
        }

        for &(tid, j) in &assignment.matched {
            self.tracks
                .get_mut(&tid)
                .expect("matched track exists")
                .observe(detections[j].bbox, frame_id, ts);
        }
        for track in self.tracks.values_mut() {
            if !assignment.matched.iter().any(|(t, _)| *t == track.track_id) {
                track.missed_count += 1;
                assignment.missed.push(track.track_id);
            }
        }
        for (j, det) in detections.iter().enumerate() {
            if det_taken[j] {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            let mut track = FaceTrack {
                track_id: id,
                last_box: det.bbox,
                centroid_history: VecDeque::new(),
                last_seen_frame: frame_id,
                missed_count: 0,
                estimates: AttributeWindows::new(self.window)?,
                recognition_cycle: 0,
            };
            track.observe(det.bbox, frame_id, ts);
            self.tracks.insert(id, track);
            assignment.new_tracks.push((id, j));
        }
        Ok(assignment)
    }

    /// Drop tracks that missed more than `expiry_misses` passes.
    pub fn prune(&mut self, _ts: Timestamp) -> Vec<TrackId> {
        let limit = self.config.expiry_misses;
        let removed: Vec<TrackId> = self
            .tracks
            .values()
            .filter(|t| t.missed_count > limit)
            .map(|t| t.track_id)
            .collect();
        for id in &removed {
            self.tracks.remove(id);
        }
        removed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det_at(cx: f64, cy: f64) -> Detection {
        Detection::new(BBox::new(cx - 10.0, cy - 10.0, 20.0, 20.0), 0.9).unwrap()
    }

    fn registry() -> TrackRegistry {
        // 240x180 frame: diagonal 300 px, default gate 30 px
        TrackRegistry::new(TrackerConfig::default(), 240, 180, 8).unwrap()
    }

    #[test]
    fn default_gate_is_thirty_pixels() {
        assert!((registry().gate_px() - 30.0).abs() < 1e-12);
    }

    #[test]
    fn nearby_detection_matches() {
        let mut r = registry();
        let a = r
            .match_detections(&[det_at(100.0, 100.0)], 1, Timestamp(0))
            .unwrap();
        let id = a.new_track_ids()[0];
        let a = r
            .match_detections(&[det_at(104.0, 103.0)], 2, Timestamp(40_000))
            .unwrap();
        assert_eq!(a.matched, vec![(id, 0)]);
        assert!(a.new_tracks.is_empty() && a.missed.is_empty());
        assert_eq!(r.get(id).unwrap().missed_count, 0);
    }

    #[test]
    fn distant_detection_spawns_new_track() {
        let mut r = registry();
        let first = r
            .match_detections(&[det_at(20.0, 20.0)], 1, Timestamp(0))
            .unwrap()
            .new_track_ids()[0];
        let a = r
            .match_detections(&[det_at(220.0, 20.0)], 2, Timestamp(40_000))
            .unwrap();
        assert!(a.matched.is_empty());
        assert_eq!(a.new_tracks.len(), 1);
        assert_eq!(a.missed, vec![first]);
        assert_eq!(r.get(first).unwrap().missed_count, 1);
    }

    /// Minimum total distance over both permutations of a 2x2 assignment.
    fn brute_force_min_sum(tracks: &[Point; 2], dets: &[Point; 2]) -> [(usize, usize); 2] {
        let straight = tracks[0].distance(dets[0]) + tracks[1].distance(dets[1]);
        let crossed = tracks[0].distance(dets[1]) + tracks[1].distance(dets[0]);
        if straight <= crossed {
            [(0, 0), (1, 1)]
        } else {
            [(0, 1), (1, 0)]
        }
    }

    #[test]
    fn greedy_takes_closest_pair_first() {
        let mut r = registry();
        let seed = r
            .match_detections(&[det_at(0.0, 0.0), det_at(10.0, 0.0)], 1, Timestamp(0))
            .unwrap();
        let (t1, t2) = (seed.new_tracks[0].0, seed.new_tracks[1].0);
        let a = r
            .match_detections(&[det_at(2.0, 0.0), det_at(9.0, 0.0)], 2, Timestamp(1))
            .unwrap();
        assert_eq!(a.matched, vec![(t2, 1), (t1, 0)]);

        let oracle = brute_force_min_sum(
            &[Point::new(0.0, 0.0), Point::new(10.0, 0.0)],
            &[Point::new(2.0, 0.0), Point::new(9.0, 0.0)],
        );
        let mut greedy: Vec<(usize, usize)> = a
            .matched
            .iter()
            .map(|&(t, d)| ((t - t1) as usize, d))
            .collect();
        greedy.sort();
        assert_eq!(greedy, oracle.to_vec());
    }

    #[test]
    fn equidistant_tie_goes_to_lowest_track_id() {
        let mut r = registry();
        let seed = r
            .match_detections(&[det_at(50.0, 50.0), det_at(70.0, 50.0)], 1, Timestamp(0))
            .unwrap();
        let a = r
            .match_detections(&[det_at(60.0, 50.0)], 2, Timestamp(1))
            .unwrap();
        assert_eq!(a.matched, vec![(seed.new_tracks[0].0, 0)]);
        assert_eq!(a.missed, vec![seed.new_tracks[1].0]);
    }

    #[test]
    fn empty_inputs_are_fine() {
        let mut r = registry();
        let a = r.match_detections(&[], 1, Timestamp(0)).unwrap();
        assert_eq!(a, Assignment::default());
        assert!(r.prune(Timestamp(0)).is_empty());
    }

    #[test]
    fn frames_must_advance() {
        let mut r = registry();
        r.match_detections(&[], 5, Timestamp(0)).unwrap();
        assert!(r.match_detections(&[], 5, Timestamp(0)).is_err());
    }

    #[test]
    fn prune_boundary() {
        let mut r = registry();
        let id = r
            .match_detections(&[det_at(50.0, 50.0)], 0, Timestamp(0))
            .unwrap()
            .new_track_ids()[0];
        for f in 1..=10 {
            r.match_detections(&[], f, Timestamp(f)).unwrap();
        }
        assert_eq!(r.get(id).unwrap().missed_count, 10);
        assert!(r.prune(Timestamp(10)).is_empty());
        r.match_detections(&[], 11, Timestamp(11)).unwrap();
        assert_eq!(r.prune(Timestamp(11)), vec![id]);
        assert!(r.is_empty());
    }

    #[test]
    fn config_validation() {
        let bad = TrackerConfig {
            max_match_distance: 0.0,
            ..TrackerConfig::default()
        };
        assert!(TrackRegistry::new(bad, 240, 180, 8).is_err());
        let bad = TrackerConfig {
            expiry_misses: 0,
            ..TrackerConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn detections_map_back_to_tracks() {
        let mut r = registry();
        r.match_detections(&[det_at(50.0, 50.0)], 1, Timestamp(0))
            .unwrap();
        let a = r
            .match_detections(&[det_at(200.0, 100.0), det_at(52.0, 50.0)], 2, Timestamp(1))
            .unwrap();
        assert_eq!(a.tracks_by_detection(2), vec![Some(2), Some(1)]);
    }
}
