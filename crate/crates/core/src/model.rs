//! Domain types shared by every pipeline stage: timestamps, boxes,
//! frames and attribute measurements.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type FrameId = u64;
pub type TrackId = u64;

/// Default capture size, 4:3.
pub const DEFAULT_FRAME_WIDTH: u32 = 240;
pub const DEFAULT_FRAME_HEIGHT: u32 = 180;

/// Microseconds since the start of a run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_millis(ms: f64) -> Self {
        Timestamp(ms_to_us(ms))
    }

    pub fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: Timestamp) -> u64 {
        self.0.saturating_sub(other.0)
    }
}

impl Add<u64> for Timestamp {
    type Output = Timestamp;

    fn add(self, us: u64) -> Timestamp {
        Timestamp(self.0 + us)
    }
}

impl Sub for Timestamp {
    type Output = u64;

    fn sub(self, other: Timestamp) -> u64 {
        self.0 - other.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// Milliseconds (non-negative) to whole microseconds, rounded to nearest.
pub fn ms_to_us(ms: f64) -> u64 {
    if ms.is_finite() && ms > 0.0 {
        (ms * 1000.0).round() as u64
    } else {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned box in continuous pixel coordinates, `(x, y)` top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.w, self.h]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::invalid(format!("degenerate box {self:?}")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn centroid(&self) -> Result<Point> {
        self.validate()?;
        Ok(self.center())
    }

    pub(crate) fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Box of the same size shifted to lie inside a `width`×`height` frame.
    /// Sizes larger than the frame are cut down to the frame.
    pub fn clamp_to(&self, width: f64, height: f64) -> BBox {
        let w = self.w.min(width);
        let h = self.h.min(height);
        BBox {
            x: self.x.clamp(0.0, width - w),
            y: self.y.clamp(0.0, height - h),
            w,
            h,
        }
    }
}

/// Intersection over union of two valid boxes.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return Ok(0.0);
    }
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Box center.
pub fn centroid(b: &BBox) -> Result<Point> {
    b.centroid()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BBox, confidence: f64) -> Result<Self> {
        bbox.validate()?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::invalid(format!(
                "confidence {confidence} outside [0,1]"
            )));
        }
        Ok(Detection { bbox, confidence })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Detection,
    Recognition,
}

impl Stage {
    pub const ALL: [Stage; 2] = [Stage::Detection, Stage::Recognition];

    pub(crate) fn index(self) -> usize {
        match self {
            Stage::Detection => 0,
            Stage::Recognition => 1,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Detection => f.write_str("detection"),
            Stage::Recognition => f.write_str("recognition"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMeta {
    pub detection_done: bool,
    pub recognition_done: bool,
    pub detections: Vec<Detection>,
    pub in_flight: Option<Stage>,
}

/// A grabbed frame plus its processing state.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: FrameId,
    pub timestamp: Timestamp,
    pub width: u32,
    pub height: u32,
    /// Raw image bytes; absent in simulation.
    pub pixels: Option<Vec<u8>>,
    pub meta: FrameMeta,
}

impl Frame {
    pub fn new(id: FrameId, timestamp: Timestamp) -> Self {
        Frame::with_size(id, timestamp, DEFAULT_FRAME_WIDTH, DEFAULT_FRAME_HEIGHT)
    }

    pub fn with_size(id: FrameId, timestamp: Timestamp, width: u32, height: u32) -> Self {
        Frame {
            id,
            timestamp,
            width,
            height,
            pixels: None,
            meta: FrameMeta::default(),
        }
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }
}

/// Expression classes in output-neuron order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expression {
    Neutral,
    Happiness,
    Sadness,
    Surprise,
    Fear,
    Disgust,
    Anger,
}

pub const NUM_EXPRESSIONS: usize = 7;

impl Expression {
    pub const ALL: [Expression; NUM_EXPRESSIONS] = [
        Expression::Neutral,
        Expression::Happiness,
        Expression::Sadness,
        Expression::Surprise,
        Expression::Fear,
        Expression::Disgust,
        Expression::Anger,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Expression> {
        Expression::ALL.get(i).copied()
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Expression::Neutral => "NEU",
            Expression::Happiness => "HAP",
            Expression::Sadness => "SAD",
            Expression::Surprise => "SUR",
            Expression::Fear => "FEA",
            Expression::Disgust => "DIS",
            Expression::Anger => "ANG",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    /// Label for a female probability; ties at 0.5 go to female.
    pub fn from_p_female(p: f64) -> Gender {
        if p >= 0.5 {
            Gender::Female
        } else {
            Gender::Male
        }
    }

    pub fn p_female(self) -> f64 {
        match self {
            Gender::Female => 1.0,
            Gender::Male => 0.0,
        }
    }
}

const DIST_TOLERANCE: f64 = 1e-9;

/// Probability distribution over the seven expression classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ExpressionDist([f64; NUM_EXPRESSIONS]);

impl ExpressionDist {
    pub fn new(probabilities: [f64; NUM_EXPRESSIONS]) -> Result<Self> {
        if probabilities
            .iter()
            .any(|p| !p.is_finite() || *p < -DIST_TOLERANCE || *p > 1.0 + DIST_TOLERANCE)
        {
            return Err(Error::invalid(format!(
                "probabilities out of range: {probabilities:?}"
            )));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > DIST_TOLERANCE {
            return Err(Error::invalid(format!(
                "expression distribution sums to {sum}"
            )));
        }
        Ok(ExpressionDist(probabilities.map(|p| p.clamp(0.0, 1.0))))
    }

    pub fn one_hot(class: Expression) -> Self {
        let mut p = [0.0; NUM_EXPRESSIONS];
        p[class.index()] = 1.0;
        ExpressionDist(p)
    }

    /// `peak` on `class`, the remainder spread evenly over the other six.
    pub fn smoothed_one_hot(class: Expression, peak: f64) -> Self {
        let peak = peak.clamp(0.0, 1.0);
        let rest = (1.0 - peak) / (NUM_EXPRESSIONS - 1) as f64;
        let mut p = [rest; NUM_EXPRESSIONS];
        p[class.index()] = peak;
        ExpressionDist(p)
    }

    /// Rescale non-negative weights to sum to one.
    pub fn normalized(weights: [f64; NUM_EXPRESSIONS]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if sum.is_nan() || sum <= 0.0 || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::invalid("cannot normalize expression weights"));
        }
        ExpressionDist::new(weights.map(|w| w / sum))
    }

    pub fn probabilities(&self) -> &[f64; NUM_EXPRESSIONS] {
        &self.0
    }

    /// Most probable class, ties to the lowest index.
    pub fn argmax(&self) -> Expression {
        let mut best = 0;
        for i in 1..NUM_EXPRESSIONS {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Expression::ALL[best]
    }
}

impl<'de> Deserialize<'de> for ExpressionDist {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = <[f64; NUM_EXPRESSIONS]>::deserialize(d)?;
        ExpressionDist::new(raw).map_err(serde::de::Error::custom)
    }
}

/// One recognizer pass over one face. Only the tasks that ran are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMeasurement {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender_p_female: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<ExpressionDist>,
    pub measured_at: Timestamp,
}

impl AttributeMeasurement {
    pub fn is_empty(&self) -> bool {
        self.age.is_none() && self.gender_p_female.is_none() && self.expression.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("measurement carries no attribute"));
        }
        if let Some(p) = self.gender_p_female {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!(
                    "gender probability {p} outside [0,1]"
                )));
            }
        }
        if let Some(age) = self.age {
            if !age.is_finite() {
                return Err(Error::invalid("non-finite age"));
            }
        }
        Ok(())
    }
}
