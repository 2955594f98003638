//! Detection and recognition metrics, and pipeline timing statistics,
//! computed by replaying a trace against its scenario's ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{iou, BBox, Detection, Gender, Timestamp, TrackId};
use crate::runtime::{EventKind, TraceEvent};
use crate::scenario::{ActorId, GroundTruthFace, Scenario};
use crate::synthetic::{associate, ASSOCIATION_IOU};

/// How the precision/recall curve is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApInterpolation {
    /// Area under the monotone precision envelope at every recall step.
    #[default]
    AllPoint,
    /// Mean envelope precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

/// AP at `iou_threshold` with all-point interpolation.
///
/// `detections[i]` and `ground_truth[i]` belong to the same frame.
pub fn average_precision(
    detections: &[Vec<Detection>],
    ground_truth: &[Vec<BBox>],
    iou_threshold: f64,
) -> Result<f64> {
    average_precision_with(
        detections,
        ground_truth,
        iou_threshold,
        ApInterpolation::AllPoint,
    )
}

pub fn average_precision_with(
    detections: &[Vec<Detection>],
    ground_truth: &[Vec<BBox>],
    iou_threshold: f64,
    interpolation: ApInterpolation,
) -> Result<f64> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "IoU threshold {iou_threshold} outside (0, 1]"
        )));
    }
    if detections.len() != ground_truth.len() {
        return Err(Error::invalid(format!(
            "{} detection frames vs {} ground-truth frames",
            detections.len(),
            ground_truth.len()
        )));
    }
    let n_gt: usize = ground_truth.iter().map(Vec::len).sum();
    let mut ranked: Vec<(f64, usize, usize)> = detections
        .iter()
        .enumerate()
        .flat_map(|(f, dets)| {
            dets.iter()
                .enumerate()
                .map(move |(j, d)| (d.confidence, f, j))
        })
        .collect();
    if n_gt == 0 {
        return Ok(if ranked.is_empty() { 1.0 } else { 0.0 });
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut taken: Vec<Vec<bool>> = ground_truth.iter().map(|g| vec![false; g.len()]).collect();
    let mut tp = 0usize;
    let mut hits: Vec<bool> = Vec::with_capacity(ranked.len());
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(ranked.len()); // (recall, precision)
    for (rank, &(_, f, j)) in ranked.iter().enumerate() {
        let det = &detections[f][j].bbox;
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in ground_truth[f].iter().enumerate() {
            if taken[f][g] {
                continue;
            }
            let v = iou(det, gt)?;
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[f][g] = true;
            tp += 1;
        }
        hits.push(best.is_some());
        curve.push((tp as f64 / n_gt as f64, tp as f64 / (rank + 1) as f64));
    }

    // precision envelope: best precision at this recall or beyond
    let mut envelope = vec![0.0; curve.len()];
    let mut running: f64 = 0.0;
    for i in (0..curve.len()).rev() {
        running = running.max(curve[i].1);
        envelope[i] = running;
    }

    Ok(match interpolation {
        ApInterpolation::AllPoint => {
            // each true positive raises recall by exactly 1/n_gt
            let mut area = 0.0;
            for (hit, env) in hits.iter().zip(&envelope) {
                if *hit {
                    area += env;
                }
            }
            area / n_gt as f64
        }
        ApInterpolation::ElevenPoint => {
            let total: f64 = (0..=10)
                .map(|k| {
                    let r = k as f64 / 10.0;
                    curve
                        .iter()
                        .zip(&envelope)
                        .find(|((recall, _), _)| *recall >= r - 1e-12)
                        .map(|(_, p)| *p)
                        .unwrap_or(0.0)
                })
                .sum();
            total / 11.0
        }
    })
}

/// Mean absolute error.
pub fn age_mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("age MAE needs at least one sample"));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

/// Fraction of exactly equal labels.
pub fn classification_accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("accuracy needs at least one sample"));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

fn checked_truth(scenario: &Scenario, ts: Timestamp) -> Result<Vec<GroundTruthFace>> {
    scenario
        .ground_truth_at(ts)
        .map_err(|_| Error::Mismatch(format!("frame time {ts} lies outside the scenario")))
}

/// Confirm the trace was produced from this scenario and is complete.
pub fn check_trace(trace: &[TraceEvent], scenario: &Scenario) -> Result<()> {
    let Some(first) = trace.first() else {
        return Err(Error::Mismatch("trace is empty".into()));
    };
    let EventKind::Start {
        scenario: fingerprint,
        ..
    } = &first.kind
    else {
        return Err(Error::Mismatch(
            "trace does not begin with a start event".into(),
        ));
    };
    if *fingerprint != scenario.fingerprint() {
        return Err(Error::Mismatch(
            "trace was produced from a different scenario".into(),
        ));
    }
    match trace.last().map(|e| &e.kind) {
        Some(EventKind::Finish { events }) if *events as usize == trace.len() - 1 => {}
        Some(EventKind::Finish { events }) => {
            return Err(Error::Mismatch(format!(
                "trace declares {events} events but holds {}",
                trace.len() - 1
            )))
        }
        _ => {
            return Err(Error::Mismatch(
                "trace is truncated (no finish event)".into(),
            ))
        }
    }
    if trace.windows(2).any(|w| w[1].ts < w[0].ts) {
        return Err(Error::Mismatch("trace timestamps go backwards".into()));
    }
    Ok(())
}

/// Number of times the track covering an actor changes.
///
/// Each track update is matched against ground truth at its frame time; an
/// actor is covered by the updated track with the highest IoU at or above
/// the association threshold.
pub fn identity_switches(trace: &[TraceEvent], scenario: &Scenario) -> Result<u64> {
    check_trace(trace, scenario)?;
    let mut current: BTreeMap<ActorId, TrackId> = BTreeMap::new();
    let mut switches = 0;
    for ev in trace {
        let EventKind::TrackUpdate {
            frame_ts, assigned, ..
        } = &ev.kind
        else {
            continue;
        };
        for face in checked_truth(scenario, *frame_ts)? {
            let mut best: Option<(TrackId, f64)> = None;
            for a in assigned {
                let v = iou(&face.bbox, &a.bbox)?;
                if v >= ASSOCIATION_IOU && best.is_none_or(|(_, b)| v > b) {
                    best = Some((a.track_id, v));
                }
            }
            if let Some((track, _)) = best {
                if let Some(prev) = current.insert(face.actor_id, track) {
                    switches += (prev != track) as u64;
                }
            }
        }
    }
    Ok(switches)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub achieved_fps: f64,
    pub staleness_mean_ms: Option<f64>,
    pub staleness_p95_ms: Option<f64>,
    pub drop_count: u64,
}

/// Nearest-rank percentile of unsorted samples.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

pub fn timing_stats(trace: &[TraceEvent]) -> Result<TimingStats> {
    if trace.is_empty() {
        return Err(Error::invalid("timing statistics need a non-empty trace"));
    }
    let mut ticks: Vec<Timestamp> = Vec::new();
    let mut staleness: Vec<f64> = Vec::new();
    let mut drop_count = 0;
    for ev in trace {
        match &ev.kind {
            EventKind::Tick { staleness_ms, .. } => {
                ticks.push(ev.ts);
                staleness.extend(staleness_ms);
            }
            EventKind::Evict {
                unprocessed: true, ..
            } => drop_count += 1,
            _ => {}
        }
    }
    let achieved_fps = if ticks.len() >= 2 {
        let span = (ticks[ticks.len() - 1] - ticks[0]) as f64;
        1e6 / (span / (ticks.len() - 1) as f64)
    } else {
        0.0
    };
    let staleness_mean_ms =
        (!staleness.is_empty()).then(|| staleness.iter().sum::<f64>() / staleness.len() as f64);
    Ok(TimingStats {
        achieved_fps,
        staleness_mean_ms,
        staleness_p95_ms: percentile(&staleness, 0.95),
        drop_count,
    })
}

/// Per-sample recognizer outputs paired with ground truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributeSamples {
    pub age_pred: Vec<f64>,
    pub age_truth: Vec<f64>,
    pub gender_pred: Vec<Gender>,
    pub gender_truth: Vec<Gender>,
    pub expression_pred: Vec<crate::model::Expression>,
    pub expression_truth: Vec<crate::model::Expression>,
}

/// Raw recognizer outputs from the trace, each matched to the actor its box
/// covers. Outputs on boxes that cover no actor are skipped.
pub fn attribute_samples(trace: &[TraceEvent], scenario: &Scenario) -> Result<AttributeSamples> {
    let mut s = AttributeSamples::default();
    for ev in trace {
        let EventKind::RecognizeDone {
            frame_ts,
            bbox,
            measurement,
            ..
        } = &ev.kind
        else {
            continue;
        };
        let gt = checked_truth(scenario, *frame_ts)?;
        let Some(face) = associate(&gt, bbox) else {
            continue;
        };
        if let Some(age) = measurement.age {
            s.age_pred.push(age);
            s.age_truth.push(face.truth.age);
        }
        if let Some(p) = measurement.gender_p_female {
            s.gender_pred.push(Gender::from_p_female(p));
            s.gender_truth.push(face.truth.gender);
        }
        if let Some(e) = measurement.expression {
            s.expression_pred.push(e.argmax());
            s.expression_truth.push(face.truth.expression);
        }
    }
    Ok(s)
}

/// Per-frame detector outputs alongside the ground-truth boxes of the same frames.
pub type DetectionFrames = (Vec<Vec<Detection>>, Vec<Vec<BBox>>);

/// Detector outputs and ground-truth boxes for every detected frame.
pub fn detection_frames(trace: &[TraceEvent], scenario: &Scenario) -> Result<DetectionFrames> {
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for ev in trace {
        if let EventKind::DetectDone {
            frame_ts,
            detections,
            ..
        } = &ev.kind
        {
            dets.push(detections.clone());
            gts.push(
                checked_truth(scenario, *frame_ts)?
                    .into_iter()
                    .map(|f| f.bbox)
                    .collect(),
            );
        }
    }
    Ok((dets, gts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub detection_ap: f64,
    pub age_mae: Option<f64>,
    pub gender_accuracy: Option<f64>,
    pub expression_accuracy: Option<f64>,
    pub identity_switches: u64,
    pub staleness_mean_ms: Option<f64>,
    pub staleness_p95_ms: Option<f64>,
    pub achieved_fps: f64,
    pub drop_count: u64,
    pub detected_frames: usize,
    pub age_samples: usize,
    pub gender_samples: usize,
    pub expression_samples: usize,
}

/// Full report for one trace.
pub fn evaluate(trace: &[TraceEvent], scenario: &Scenario) -> Result<EvalReport> {
    check_trace(trace, scenario)?;
    let (dets, gts) = detection_frames(trace, scenario)?;
    let samples = attribute_samples(trace, scenario)?;
    let timing = timing_stats(trace)?;
    Ok(EvalReport {
        detection_ap: average_precision(&dets, &gts, 0.5)?,
        age_mae: age_mae(&samples.age_pred, &samples.age_truth).ok(),
        gender_accuracy: classification_accuracy(&samples.gender_pred, &samples.gender_truth).ok(),
        expression_accuracy: classification_accuracy(
            &samples.expression_pred,
            &samples.expression_truth,
        )
        .ok(),
        identity_switches: identity_switches(trace, scenario)?,
        staleness_mean_ms: timing.staleness_mean_ms,
        staleness_p95_ms: timing.staleness_p95_ms,
        achieved_fps: timing.achieved_fps,
        drop_count: timing.drop_count,
        detected_frames: dets.len(),
        age_samples: samples.age_pred.len(),
        gender_samples: samples.gender_pred.len(),
        expression_samples: samples.expression_pred.len(),
    })
}

impl EvalReport {
    /// Two-column `stage,metric` table, one row per recognition stage.
    pub fn to_csv(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.1}%", 100.0 * v));
        let mut out = String::from("stage,metric\n");
        let _ = writeln!(
            out,
            "Detection,{} (AP @0.5IoU)",
            pct(Some(self.detection_ap))
        );
        let _ = writeln!(
            out,
            "Age,{} (MAE)",
            self.age_mae
                .map_or("n/a".to_string(), |v| format!("{v:.2} years"))
        );
        let _ = writeln!(out, "Gender,{} (accuracy)", pct(self.gender_accuracy));
        let _ = writeln!(
            out,
            "Expression,{} (accuracy)",
            pct(self.expression_accuracy)
        );
        out
    }
}
