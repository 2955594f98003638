//! Synthetic stand-ins for the face detector, landmark detector and the
//! three attribute networks.
//!
//! Every random draw comes from a stream keyed by `(seed, frame, stage,
//! index)` so results do not depend on thread interleaving.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::alignment::{FaceTemplate, SimilarityTransform};
use crate::model::{
    iou, AttributeMeasurement, BBox, Detection, Expression, ExpressionDist, FrameId, Gender, Point,
    Timestamp,
};
use crate::scenario::{ActorTruth, DetectorModel, GroundTruthFace, LandmarkModel, RecognizerModel};
use crate::scheduler::{Task, TaskSet};

/// Minimum IoU for a box to be attributed to an actor.
pub const ASSOCIATION_IOU: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    Detection = 1,
    Landmarks = 2,
    Recognition = 3,
    Phantom = 4,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG for one `(seed, frame, stage, index)` combination.
pub fn stream_rng(seed: u64, frame_id: FrameId, kind: StreamKind, index: u64) -> ChaCha8Rng {
    let key = [frame_id, kind as u64, index]
        .into_iter()
        .fold(splitmix(seed), |acc, v| splitmix(acc ^ splitmix(v)));
    ChaCha8Rng::seed_from_u64(key)
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma)
            .expect("sigma is non-negative")
            .sample(rng)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOutput {
    pub detections: Vec<Detection>,
    pub latency_ms: f64,
}

/// Noisy detector over the ground truth of one frame.
///
/// True faces come first in ground-truth order, then false positives.
pub fn synth_detect<R: Rng + ?Sized>(
    gt: &[GroundTruthFace],
    frame_size: (f64, f64),
    frame_ts: Timestamp,
    model: &DetectorModel,
    rng: &mut R,
) -> DetectorOutput {
    let latency_ms = model.latency.sample(rng);
    if model.in_blackout(frame_ts) {
        return DetectorOutput {
            detections: Vec::new(),
            latency_ms,
        };
    }
    let (fw, fh) = frame_size;
    let conf = model.confidence;
    let mut detections = Vec::with_capacity(gt.len());
    for face in gt {
        if model.miss_prob > 0.0 && rng.random::<f64>() < model.miss_prob {
            continue;
        }
        let c = face.bbox.center();
        let cx = c.x + gaussian(rng, model.center_jitter_sigma);
        let cy = c.y + gaussian(rng, model.center_jitter_sigma);
        let w = (face.bbox.w + gaussian(rng, model.size_jitter_sigma)).max(1.0);
        let h = (face.bbox.h + gaussian(rng, model.size_jitter_sigma)).max(1.0);
        let bbox = BBox::new(cx - w / 2.0, cy - h / 2.0, w, h).clamp_to(fw, fh);
        let confidence = (conf.true_mean + gaussian(rng, conf.true_sigma)).clamp(0.0, 1.0);
        detections.push(Detection { bbox, confidence });
    }
    if model.false_positive_rate > 0.0 {
        let n = Poisson::new(model.false_positive_rate)
            .expect("rate is positive")
            .sample(rng) as usize;
        for _ in 0..n {
            let side_hi = 64f64.min(fw.min(fh));
            let side_lo = 16f64.min(side_hi);
            let w = if side_hi > side_lo {
                rng.random_range(side_lo..side_hi)
            } else {
                side_hi
            };
            let h = if side_hi > side_lo {
                rng.random_range(side_lo..side_hi)
            } else {
                side_hi
            };
            let x = if fw > w {
                rng.random_range(0.0..fw - w)
            } else {
                0.0
            };
            let y = if fh > h {
                rng.random_range(0.0..fh - h)
            } else {
                0.0
            };
            let confidence = (conf.false_mean + gaussian(rng, conf.false_sigma)).clamp(0.0, 1.0);
            detections.push(Detection {
                bbox: BBox::new(x, y, w, h),
                confidence,
            });
        }
    }
    DetectorOutput {
        detections,
        latency_ms,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognizerOutput {
    /// `measured_at` is left at zero; the controller stamps it on arrival.
    pub measurement: AttributeMeasurement,
    pub latency_ms: f64,
}

/// Noisy attribute estimates for the requested tasks.
pub fn synth_recognize<R: Rng + ?Sized>(
    truth: &ActorTruth,
    tasks: TaskSet,
    model: &RecognizerModel,
    rng: &mut R,
) -> RecognizerOutput {
    let mut latency_ms = 0.0;
    let mut m = AttributeMeasurement {
        age: None,
        gender_p_female: None,
        expression: None,
        measured_at: Timestamp::ZERO,
    };
    for task in tasks.iter() {
        match task {
            Task::Age => {
                latency_ms += model.age_latency.sample(rng);
                m.age = Some(truth.age + gaussian(rng, model.age_noise_sigma));
            }
            Task::Gender => {
                latency_ms += model.gender_latency.sample(rng);
                let flipped =
                    model.gender_flip_prob > 0.0 && rng.random::<f64>() < model.gender_flip_prob;
                let g = match (truth.gender, flipped) {
                    (g, false) => g,
                    (Gender::Female, true) => Gender::Male,
                    (Gender::Male, true) => Gender::Female,
                };
                m.gender_p_female = Some(g.p_female());
            }
            Task::Expression => {
                latency_ms += model.expression_latency.sample(rng);
                let class = match &model.expression_confusion {
                    None => truth.expression,
                    Some(confusion) => sample_row(&confusion[truth.expression.index()], rng),
                };
                m.expression = Some(ExpressionDist::smoothed_one_hot(
                    class,
                    model.expression_peak,
                ));
            }
        }
    }
    RecognizerOutput {
        measurement: m,
        latency_ms,
    }
}

fn sample_row<R: Rng + ?Sized>(row: &[f64; 7], rng: &mut R) -> Expression {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return Expression::ALL[i];
        }
    }
    // rounding slack: last class with non-zero mass
    let last = row.iter().rposition(|p| *p > 0.0).unwrap_or(0);
    Expression::ALL[last]
}

/// Random attributes for a box that matches no actor (a false positive).
pub fn phantom_truth<R: Rng + ?Sized>(rng: &mut R) -> ActorTruth {
    ActorTruth {
        age: rng.random_range(18.0..70.0),
        gender: if rng.random::<bool>() {
            Gender::Female
        } else {
            Gender::Male
        },
        expression: Expression::ALL[rng.random_range(0..Expression::ALL.len())],
    }
}

/// The actor whose box overlaps `bbox` most, if any reaches [`ASSOCIATION_IOU`].
pub fn associate<'a>(gt: &'a [GroundTruthFace], bbox: &BBox) -> Option<&'a GroundTruthFace> {
    let mut best: Option<(&GroundTruthFace, f64)> = None;
    for face in gt {
        let v = iou(&face.bbox, bbox).unwrap_or(0.0);
        if v >= ASSOCIATION_IOU && best.is_none_or(|(_, b)| v > b) {
            best = Some((face, v));
        }
    }
    best.map(|(f, _)| f)
}

/// Transform placing the unit-square template over `bbox` with the given
/// in-plane rotation about the box center.
pub fn box_transform(bbox: &BBox, rotation: f64) -> SimilarityTransform {
    let scale = (bbox.w * bbox.h).sqrt();
    let center = bbox.center();
    let spin = SimilarityTransform {
        scale,
        rotation,
        translation: Point::new(0.0, 0.0),
    };
    let mid = spin.apply_point(Point::new(0.5, 0.5));
    SimilarityTransform {
        scale,
        rotation,
        translation: Point::new(center.x - mid.x, center.y - mid.y),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkOutput {
    pub points: Vec<Point>,
    /// Template-to-image transform the points were generated from.
    pub generating: SimilarityTransform,
}

pub fn synth_landmarks<R: Rng + ?Sized>(
    bbox: &BBox,
    template: &FaceTemplate,
    model: &LandmarkModel,
    rng: &mut R,
) -> LandmarkOutput {
    let rotation = gaussian(rng, model.rotation_sigma);
    let generating = box_transform(bbox, rotation);
    let points = template
        .points()
        .iter()
        .map(|p| {
            let q = generating.apply_point(*p);
            Point::new(
                q.x + gaussian(rng, model.noise_sigma),
                q.y + gaussian(rng, model.noise_sigma),
            )
        })
        .collect();
    LandmarkOutput { points, generating }
}
