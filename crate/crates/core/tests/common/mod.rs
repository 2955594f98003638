#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use facepipe_core::model::{iou, BBox, Detection, Expression, FrameId, Gender, Stage, Timestamp};
use facepipe_core::runtime::{EventKind, TraceEvent};
use facepipe_core::scenario::{ActorPath, ActorSpec, LatencyModel, Scenario};
use facepipe_core::scheduler::CadencePolicy;

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn bundled(name: &str) -> Scenario {
    Scenario::load(scenarios_dir().join(format!("{name}.json"))).expect("bundled scenario loads")
}

pub fn bundled_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(scenarios_dir())
        .expect("scenarios dir")
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "json")
                .then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names
}

pub fn static_actor(id: u32, x: f64, y: f64, age: f64, gender: Gender) -> ActorSpec {
    ActorSpec {
        actor_id: id,
        path: ActorPath::Linear {
            start: [x, y],
            velocity: [0.0, 0.0],
        },
        box_size: [40.0, 40.0],
        enter_ms: 0,
        exit_ms: None,
        true_age: age,
        true_gender: gender,
        expression_timeline: vec![(0, Expression::Happiness)],
    }
}

/// `n` (at most 4) stationary noiseless actors, 200 ms per task.
pub fn grid_scenario(n: usize, duration_ms: u64, cadence: CadencePolicy) -> Scenario {
    let corners = [(10.0, 10.0), (130.0, 10.0), (10.0, 110.0), (130.0, 110.0)];
    let mut s = Scenario::empty(duration_ms, 17);
    s.actors = (0..n)
        .map(|i| {
            let (x, y) = corners[i];
            let g = if i % 2 == 0 {
                Gender::Female
            } else {
                Gender::Male
            };
            static_actor(i as u32 + 1, x, y, 20.0 + 15.0 * i as f64, g)
        })
        .collect();
    s.pipeline.cadence = Some(cadence);
    s
}

pub fn with_detector_latency(mut s: Scenario, ms: f64) -> Scenario {
    s.detector_model.latency = LatencyModel::constant(ms);
    s
}

pub fn kinds<'a>(
    trace: &'a [TraceEvent],
    name: &'a str,
) -> impl Iterator<Item = &'a TraceEvent> + 'a {
    trace.iter().filter(move |e| e.kind.name() == name)
}

/// Per-face recognition wall time in ms, after `warmup`: the gap from the
/// job's checkout (or the previous face of the same job) to each result.
pub fn per_face_times(trace: &[TraceEvent], warmup: Timestamp) -> Vec<f64> {
    let mut out = Vec::new();
    let mut last: Option<Timestamp> = None;
    for e in trace {
        match &e.kind {
            EventKind::Checkout {
                stage: Stage::Recognition,
                ..
            } => last = Some(e.ts),
            EventKind::RecognizeDone { .. } => {
                let start = last.expect("result follows a checkout");
                if start >= warmup {
                    out.push((e.ts - start) as f64 / 1000.0);
                }
                last = Some(e.ts);
            }
            _ => {}
        }
    }
    out
}

/// `(faces, ms from checkout to the last face's result)` per frame whose
/// recognition was checked out within `[from, until)`.
pub fn per_frame_recognition(
    trace: &[TraceEvent],
    from: Timestamp,
    until: Timestamp,
) -> Vec<(usize, f64)> {
    let mut checkout: BTreeMap<FrameId, Timestamp> = BTreeMap::new();
    let mut done: BTreeMap<FrameId, (usize, Timestamp)> = BTreeMap::new();
    for e in trace {
        match &e.kind {
            EventKind::Checkout {
                stage: Stage::Recognition,
                frame_id,
            } => {
                checkout.insert(*frame_id, e.ts);
            }
            EventKind::RecognizeDone { frame_id, .. } => {
                let entry = done.entry(*frame_id).or_insert((0, e.ts));
                entry.0 += 1;
                entry.1 = e.ts;
            }
            _ => {}
        }
    }
    done.into_iter()
        .filter_map(|(id, (n, end))| {
            let start = checkout[&id];
            (start >= from && start < until).then(|| (n, (end - start) as f64 / 1000.0))
        })
        .collect()
}

/// Least-squares line `y = a + b x`; returns `(b, a, r2)`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    (b, a, r2)
}

/// Independent AP reference: for every rank cut-off the matching is redone
/// from scratch, precision and recall are kept as exact integer ratios, and
/// the envelope is the maximum over all later cut-offs.
pub fn ap_bruteforce(dets: &[Vec<Detection>], gts: &[Vec<BBox>], thr: f64) -> f64 {
    let n_gt: usize = gts.iter().map(Vec::len).sum();
    let mut order: Vec<(usize, usize)> = dets
        .iter()
        .enumerate()
        .flat_map(|(f, d)| (0..d.len()).map(move |j| (f, j)))
        .collect();
    if n_gt == 0 {
        return if order.is_empty() { 1.0 } else { 0.0 };
    }
    order.sort_by(|a, b| {
        dets[b.0][b.1]
            .confidence
            .partial_cmp(&dets[a.0][a.1].confidence)
            .unwrap()
            .then(a.cmp(b))
    });
    let tp_at = |k: usize| -> usize {
        let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
        let mut tp = 0;
        for &(f, j) in &order[..k] {
            let candidates: Vec<(usize, f64)> = gts[f]
                .iter()
                .enumerate()
                .filter(|(g, _)| !used[f][*g])
                .map(|(g, b)| (g, iou(&dets[f][j].bbox, b).unwrap()))
                .filter(|(_, v)| *v >= thr)
                .collect();
            let best = candidates
                .iter()
                .fold(None::<(usize, f64)>, |acc, &(g, v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((g, v)),
                });
            if let Some((g, _)) = best {
                used[f][g] = true;
                tp += 1;
            }
        }
        tp
    };
    let m = order.len();
    let tps: Vec<usize> = (0..=m).map(tp_at).collect();
    let mut ap = 0.0;
    for k in 1..=m {
        if tps[k] > tps[k - 1] {
            // recall step of exactly 1/n_gt; envelope over cut-offs >= k
            let env = (k..=m)
                .map(|j| tps[j] as f64 / j as f64)
                .fold(0.0, f64::max);
            ap += env;
        }
    }
    ap / n_gt as f64
}

/// Straightforward model of the frame store used as a test oracle.
#[derive(Debug, Clone)]
pub struct OracleFrame {
    pub id: FrameId,
    pub detected: bool,
    pub recognized: bool,
    pub has_faces: bool,
    pub held_by: Option<Stage>,
}

#[derive(Debug, Default)]
pub struct BufferOracle {
    pub capacity: usize,
    pub frames: Vec<OracleFrame>,
    pub drops: u64,
}

impl BufferOracle {
    pub fn new(capacity: usize) -> Self {
        BufferOracle {
            capacity,
            ..Default::default()
        }
    }

    pub fn eligible(f: &OracleFrame, stage: Stage) -> bool {
        f.held_by.is_none()
            && match stage {
                Stage::Detection => !f.detected,
                Stage::Recognition => f.detected && !f.recognized && f.has_faces,
            }
    }

    pub fn push(&mut self, id: FrameId) -> Option<FrameId> {
        self.frames.push(OracleFrame {
            id,
            detected: false,
            recognized: false,
            has_faces: false,
            held_by: None,
        });
        if self.frames.len() <= self.capacity {
            return None;
        }
        let older = &self.frames[..self.frames.len() - 1];
        let victim = older
            .iter()
            .filter(|f| f.held_by.is_none())
            .map(|f| f.id)
            .min()
            .unwrap_or_else(|| older.iter().map(|f| f.id).min().unwrap());
        let pos = self.frames.iter().position(|f| f.id == victim).unwrap();
        let gone = self.frames.remove(pos);
        if !gone.detected {
            self.drops += 1;
        }
        Some(victim)
    }

    pub fn newest_eligible(&self, stage: Stage) -> Option<FrameId> {
        self.frames
            .iter()
            .filter(|f| Self::eligible(f, stage))
            .map(|f| f.id)
            .max()
    }

    pub fn hold(&mut self, id: FrameId, stage: Stage) {
        self.frames.iter_mut().find(|f| f.id == id).unwrap().held_by = Some(stage);
    }

    pub fn complete(&mut self, id: FrameId, stage: Stage, has_faces: bool) {
        if let Some(f) = self.frames.iter_mut().find(|f| f.id == id) {
            f.held_by = None;
            match stage {
                Stage::Detection => {
                    f.detected = true;
                    f.has_faces = has_faces;
                }
                Stage::Recognition => f.recognized = true,
            }
        }
    }
}

/// Drive a [`FrameStore`] through `ops` random operations, checking every
/// step against [`BufferOracle`]. Returns the number of checkouts served.
pub fn buffer_random_ops(ops: usize, seed: u64) -> Result<u64, String> {
    use facepipe_core::frame_buffer::{Completion, FrameStore, StageOutput};
    use facepipe_core::model::Frame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let capacity = rng.random_range(1..=6);
    let mut store = FrameStore::new(capacity).map_err(|e| e.to_string())?;
    let mut oracle = BufferOracle::new(capacity);
    let mut next_id: FrameId = 0;
    let mut served = 0;
    let face = Detection::new(BBox::new(0.0, 0.0, 10.0, 10.0), 0.9).unwrap();
    for step in 0..ops {
        let stage = if rng.random_bool(0.5) {
            Stage::Detection
        } else {
            Stage::Recognition
        };
        match rng.random_range(0..3) {
            0 => {
                let evicted = store
                    .push(Frame::new(next_id, Timestamp(next_id * 40_000)))
                    .map_err(|e| e.to_string())?
                    .map(|f| f.id);
                let expected = oracle.push(next_id);
                if evicted != expected {
                    return Err(format!(
                        "step {step}: evicted {evicted:?}, oracle {expected:?}"
                    ));
                }
                next_id += 1;
            }
            1 => {
                if let Some(held) = store.in_flight(stage) {
                    if store.checkout(stage).is_ok() {
                        return Err(format!(
                            "step {step}: second {stage} checkout allowed while {held} held"
                        ));
                    }
                    continue;
                }
                let got = store
                    .checkout(stage)
                    .map_err(|e| e.to_string())?
                    .map(|f| f.id);
                let expected = oracle.newest_eligible(stage);
                if got != expected {
                    return Err(format!(
                        "step {step}: {stage} checkout {got:?}, oracle {expected:?}"
                    ));
                }
                if let Some(id) = got {
                    oracle.hold(id, stage);
                    served += 1;
                }
            }
            _ => {
                let Some(id) = store.in_flight(stage) else {
                    continue;
                };
                let has_faces = rng.random_bool(0.6);
                let output = match stage {
                    Stage::Detection => {
                        StageOutput::Detected(if has_faces { vec![face] } else { vec![] })
                    }
                    Stage::Recognition => StageOutput::Recognized,
                };
                let present = oracle.frames.iter().any(|f| f.id == id);
                let c = store.complete(id, output).map_err(|e| e.to_string())?;
                if (c == Completion::Applied) != present {
                    return Err(format!(
                        "step {step}: completion {c:?} but present={present}"
                    ));
                }
                oracle.complete(id, stage, has_faces);
            }
        }
        if store.len() > capacity {
            return Err(format!(
                "step {step}: {} frames exceed capacity {capacity}",
                store.len()
            ));
        }
        if let (Some(a), Some(b)) = (
            store.in_flight(Stage::Detection),
            store.in_flight(Stage::Recognition),
        ) {
            if a == b {
                return Err(format!("step {step}: frame {a} held by both stages"));
            }
        }
        let ids: Vec<FrameId> = store.frames().map(|f| f.id).collect();
        let oracle_ids: Vec<FrameId> = oracle.frames.iter().map(|f| f.id).collect();
        if ids != oracle_ids || store.drop_count() != oracle.drops {
            return Err(format!(
                "step {step}: contents {ids:?} vs oracle {oracle_ids:?}"
            ));
        }
    }
    Ok(served)
}
