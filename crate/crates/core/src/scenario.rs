//! Scripted ground truth for simulated runs: actor trajectories, true
//! attributes and the noise/latency models of every synthetic stage.
//!
//! A scenario is read from JSON that mirrors these types field for field.
//! Unknown keys are rejected.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    BBox, Expression, Gender, Timestamp, DEFAULT_FRAME_HEIGHT, DEFAULT_FRAME_WIDTH, NUM_EXPRESSIONS,
};
use crate::scheduler::CadencePolicy;
use crate::tracker::TrackerConfig;

pub type ActorId = u32;

/// Stage latency in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatencyModel {
    Constant {
        ms: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Normal, clamped at zero.
    Normal {
        mean: f64,
        sigma: f64,
    },
}

impl LatencyModel {
    pub fn constant(ms: f64) -> Self {
        LatencyModel::Constant { ms }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LatencyModel::Constant { ms } => ms.is_finite() && ms >= 0.0,
            LatencyModel::Uniform { lo, hi } => {
                lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi
            }
            LatencyModel::Normal { mean, sigma } => {
                mean.is_finite() && sigma.is_finite() && sigma >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid latency model {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LatencyModel::Constant { ms } => ms.max(0.0),
            LatencyModel::Uniform { lo, hi } => {
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            }
            LatencyModel::Normal { mean, sigma } => {
                let v = if sigma > 0.0 {
                    Normal::new(mean, sigma)
                        .expect("sigma validated")
                        .sample(rng)
                } else {
                    mean
                };
                v.max(0.0)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LatencyModel::Constant { ms } => ms,
            LatencyModel::Uniform { lo, hi } => (lo + hi) / 2.0,
            LatencyModel::Normal { mean, .. } => mean.max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActorPath {
    /// `start` is the box's top-left corner at `enter_ms`; velocity in px/s.
    Linear { start: [f64; 2], velocity: [f64; 2] },
    /// Linear drift plus `amplitude · sin(2π t / period)` per axis.
    Sinusoidal {
        start: [f64; 2],
        velocity: [f64; 2],
        amplitude: [f64; 2],
        period_ms: f64,
    },
}

impl ActorPath {
    /// Top-left corner `elapsed_s` seconds after the actor enters.
    pub fn position(&self, elapsed_s: f64) -> [f64; 2] {
        match *self {
            ActorPath::Linear { start, velocity } => [
                start[0] + velocity[0] * elapsed_s,
                start[1] + velocity[1] * elapsed_s,
            ],
            ActorPath::Sinusoidal {
                start,
                velocity,
                amplitude,
                period_ms,
            } => {
                let phase = (2.0 * PI * elapsed_s * 1000.0 / period_ms).sin();
                [
                    start[0] + velocity[0] * elapsed_s + amplitude[0] * phase,
                    start[1] + velocity[1] * elapsed_s + amplitude[1] * phase,
                ]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub actor_id: ActorId,
    pub path: ActorPath,
    pub box_size: [f64; 2],
    #[serde(default)]
    pub enter_ms: u64,
    /// Defaults to the scenario duration.
    #[serde(default)]
    pub exit_ms: Option<u64>,
    pub true_age: f64,
    pub true_gender: Gender,
    /// `(ms, class)` change points; neutral before the first one.
    #[serde(default)]
    pub expression_timeline: Vec<(u64, Expression)>,
}

impl ActorSpec {
    pub fn expression_at(&self, ms: f64) -> Expression {
        self.expression_timeline
            .iter()
            .take_while(|(t, _)| (*t as f64) <= ms)
            .last()
            .map(|(_, e)| *e)
            .unwrap_or(Expression::Neutral)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfidenceModel {
    pub true_mean: f64,
    pub true_sigma: f64,
    pub false_mean: f64,
    pub false_sigma: f64,
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        ConfidenceModel {
            true_mean: 0.9,
            true_sigma: 0.0,
            false_mean: 0.3,
            false_sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorModel {
    pub latency: LatencyModel,
    pub center_jitter_sigma: f64,
    pub size_jitter_sigma: f64,
    pub miss_prob: f64,
    /// Expected false positives per frame.
    pub false_positive_rate: f64,
    pub confidence: ConfidenceModel,
    /// `[start_ms, end_ms)` windows of frame time in which nothing is detected.
    pub blackouts: Vec<[u64; 2]>,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            latency: LatencyModel::constant(20.0),
            center_jitter_sigma: 0.0,
            size_jitter_sigma: 0.0,
            miss_prob: 0.0,
            false_positive_rate: 0.0,
            confidence: ConfidenceModel::default(),
            blackouts: Vec::new(),
        }
    }
}

impl DetectorModel {
    pub fn in_blackout(&self, ts: Timestamp) -> bool {
        let ms = ts.as_millis_f64();
        self.blackouts
            .iter()
            .any(|[a, b]| (*a as f64) <= ms && ms < *b as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecognizerModel {
    pub age_latency: LatencyModel,
    pub gender_latency: LatencyModel,
    pub expression_latency: LatencyModel,
    pub age_noise_sigma: f64,
    pub gender_flip_prob: f64,
    /// Row-stochastic, rows indexed by the true class. Identity when absent.
    pub expression_confusion: Option<[[f64; NUM_EXPRESSIONS]; NUM_EXPRESSIONS]>,
    /// Probability mass placed on the sampled expression class.
    pub expression_peak: f64,
}

impl Default for RecognizerModel {
    fn default() -> Self {
        RecognizerModel {
            age_latency: LatencyModel::constant(200.0),
            gender_latency: LatencyModel::constant(200.0),
            expression_latency: LatencyModel::constant(200.0),
            age_noise_sigma: 0.0,
            gender_flip_prob: 0.0,
            expression_confusion: None,
            expression_peak: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandmarkModel {
    /// Std of in-plane head rotation, radians.
    pub rotation_sigma: f64,
    /// Per-axis landmark noise, pixels.
    pub noise_sigma: f64,
}

/// Optional pipeline settings carried by a scenario file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSettings {
    pub cadence: Option<CadencePolicy>,
    pub buffer_capacity: Option<usize>,
    pub window: Option<usize>,
    pub tracker: Option<TrackerConfig>,
    pub visualization_rate: Option<f64>,
}

fn default_frame_rate() -> f64 {
    25.0
}

fn default_frame_size() -> [u32; 2] {
    [DEFAULT_FRAME_WIDTH, DEFAULT_FRAME_HEIGHT]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub duration_ms: u64,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    #[serde(default = "default_frame_size")]
    pub frame_size: [u32; 2],
    #[serde(default)]
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub detector_model: DetectorModel,
    #[serde(default)]
    pub recognizer_model: RecognizerModel,
    #[serde(default)]
    pub landmark_model: LandmarkModel,
    #[serde(default)]
    pub pipeline: PipelineSettings,
    #[serde(default)]
    pub seed: u64,
}

/// True state of one visible actor at an instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFace {
    pub actor_id: ActorId,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub truth: ActorTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorTruth {
    pub age: f64,
    pub gender: Gender,
    pub expression: Expression,
}

fn prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0,1], got {p}")))
    }
}

fn sigma(name: &str, s: f64) -> Result<()> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be a non-negative number, got {s}"
        )))
    }
}

impl Scenario {
    /// A scenario with no actors and noiseless default models.
    pub fn empty(duration_ms: u64, seed: u64) -> Self {
        Scenario {
            duration_ms,
            frame_rate: default_frame_rate(),
            frame_size: default_frame_size(),
            actors: Vec::new(),
            detector_model: DetectorModel::default(),
            recognizer_model: RecognizerModel::default(),
            landmark_model: LandmarkModel::default(),
            pipeline: PipelineSettings::default(),
            seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn duration(&self) -> Timestamp {
        Timestamp(self.duration_ms * 1000)
    }

    pub fn width(&self) -> f64 {
        self.frame_size[0] as f64
    }

    pub fn height(&self) -> f64 {
        self.frame_size[1] as f64
    }

    /// Hex SHA-256 of the scenario with its seed zeroed. Traces carry it so
    /// evaluation can tell whether a trace came from this scenario.
    pub fn fingerprint(&self) -> String {
        let unseeded = Scenario {
            seed: 0,
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&unseeded).expect("scenario serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration_ms == 0 {
            return Err(Error::Config("duration_ms must be positive".into()));
        }
        if !self.frame_rate.is_finite() || self.frame_rate <= 0.0 {
            return Err(Error::Config(format!(
                "frame_rate must be positive, got {}",
                self.frame_rate
            )));
        }
        if self.frame_size[0] == 0 || self.frame_size[1] == 0 {
            return Err(Error::Config("frame_size must be positive".into()));
        }
        let mut ids: Vec<ActorId> = self.actors.iter().map(|a| a.actor_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate actor_id".into()));
        }
        for a in &self.actors {
            let exit = a.exit_ms.unwrap_or(self.duration_ms);
            if a.enter_ms >= exit || exit > self.duration_ms {
                return Err(Error::Config(format!(
                    "actor {}: need enter_ms < exit_ms <= duration_ms ({} / {} / {})",
                    a.actor_id, a.enter_ms, exit, self.duration_ms
                )));
            }
            if !(a.box_size[0] > 0.0 && a.box_size[1] > 0.0) {
                return Err(Error::Config(format!(
                    "actor {}: box_size must be positive",
                    a.actor_id
                )));
            }
            if !a.true_age.is_finite() {
                return Err(Error::Config(format!(
                    "actor {}: true_age must be finite",
                    a.actor_id
                )));
            }
            if let ActorPath::Sinusoidal { period_ms, .. } = a.path {
                if period_ms.is_nan() || period_ms <= 0.0 {
                    return Err(Error::Config(format!(
                        "actor {}: period_ms must be positive",
                        a.actor_id
                    )));
                }
            }
        }
        let d = &self.detector_model;
        d.latency.validate()?;
        sigma("center_jitter_sigma", d.center_jitter_sigma)?;
        sigma("size_jitter_sigma", d.size_jitter_sigma)?;
        prob("miss_prob", d.miss_prob)?;
        sigma("false_positive_rate", d.false_positive_rate)?;
        sigma("confidence.true_sigma", d.confidence.true_sigma)?;
        sigma("confidence.false_sigma", d.confidence.false_sigma)?;
        for [a, b] in &d.blackouts {
            if a >= b {
                return Err(Error::Config(format!("empty blackout window [{a}, {b})")));
            }
        }
        let r = &self.recognizer_model;
        r.age_latency.validate()?;
        r.gender_latency.validate()?;
        r.expression_latency.validate()?;
        sigma("age_noise_sigma", r.age_noise_sigma)?;
        prob("gender_flip_prob", r.gender_flip_prob)?;
        prob("expression_peak", r.expression_peak)?;
        if let Some(m) = &r.expression_confusion {
            for (i, row) in m.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "expression_confusion row {i} is not a distribution"
                    )));
                }
            }
        }
        sigma("rotation_sigma", self.landmark_model.rotation_sigma)?;
        sigma("noise_sigma", self.landmark_model.noise_sigma)?;
        Ok(())
    }

    /// Visible actors at `ts`, in actor-id order, boxes clamped to the frame.
    pub fn ground_truth_at(&self, ts: Timestamp) -> Result<Vec<GroundTruthFace>> {
        if ts > self.duration() {
            return Err(Error::invalid(format!(
                "{ts} is past the scenario end {}",
                self.duration()
            )));
        }
        let ms = ts.as_millis_f64();
        let mut faces: Vec<GroundTruthFace> = self
            .actors
            .iter()
            .filter(|a| {
                let exit = a.exit_ms.unwrap_or(self.duration_ms) as f64;
                (a.enter_ms as f64) <= ms && ms < exit
            })
            .map(|a| {
                let elapsed_s = (ms - a.enter_ms as f64) / 1000.0;
                let [x, y] = a.path.position(elapsed_s);
                let bbox = BBox::new(x, y, a.box_size[0], a.box_size[1])
                    .clamp_to(self.width(), self.height());
                GroundTruthFace {
                    actor_id: a.actor_id,
                    bbox,
                    truth: ActorTruth {
                        age: a.true_age,
                        gender: a.true_gender,
                        expression: a.expression_at(ms),
                    },
                }
            })
            .collect();
        faces.sort_by_key(|f| f.actor_id);
        Ok(faces)
    }
}
