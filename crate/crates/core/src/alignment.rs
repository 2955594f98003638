//! Least-squares 2-D similarity alignment of landmark sets.
//!
//! Points are treated as complex numbers, so the best `s·R·p + t` is the
//! complex linear regression `w = a·z + b` on centered coordinates, with
//! `|a|` the scale and `arg a` the rotation.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Point;

pub const DEFAULT_LANDMARKS: usize = 68;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    /// Radians, counter-clockwise in a y-up frame.
    pub rotation: f64,
    pub translation: Point,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        SimilarityTransform::IDENTITY
    }
}

impl SimilarityTransform {
    pub const IDENTITY: SimilarityTransform = SimilarityTransform {
        scale: 1.0,
        rotation: 0.0,
        translation: Point::new(0.0, 0.0),
    };

    pub fn new(scale: f64, rotation: f64, translation: Point) -> Result<Self> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::invalid(format!(
                "similarity scale must be positive, got {scale}"
            )));
        }
        Ok(SimilarityTransform {
            scale,
            rotation: wrap_angle(rotation),
            translation,
        })
    }

    /// `(a, b)` of the linear part `[[a, -b], [b, a]]`.
    fn linear(&self) -> (f64, f64) {
        let (sin, cos) = self.rotation.sin_cos();
        (self.scale * cos, self.scale * sin)
    }

    pub fn apply_point(&self, p: Point) -> Point {
        let (a, b) = self.linear();
        Point::new(
            a * p.x - b * p.y + self.translation.x,
            b * p.x + a * p.y + self.translation.y,
        )
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv = SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation: wrap_angle(-self.rotation),
            translation: Point::new(0.0, 0.0),
        };
        let t = inv.apply_point(self.translation);
        SimilarityTransform {
            translation: Point::new(-t.x, -t.y),
            ..inv
        }
    }

    /// `other ∘ self`: apply `self` first, then `other`.
    pub fn then(&self, other: &SimilarityTransform) -> SimilarityTransform {
        SimilarityTransform {
            scale: self.scale * other.scale,
            rotation: wrap_angle(self.rotation + other.rotation),
            translation: other.apply_point(self.translation),
        }
    }
}

/// Map an angle into (-π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

pub fn apply_transform(t: &SimilarityTransform, pts: &[Point]) -> Vec<Point> {
    pts.iter().map(|p| t.apply_point(*p)).collect()
}

fn mean_point(pts: &[Point]) -> Point {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
    Point::new(sx / n, sy / n)
}

/// Similarity transform minimizing `Σ ‖s·R·source_i + t − target_i‖²`.
pub fn estimate_similarity(source: &[Point], target: &[Point]) -> Result<SimilarityTransform> {
    if source.len() != target.len() {
        return Err(Error::invalid(format!(
            "{} source points vs {} target points",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 2 {
        return Err(Error::invalid("need at least two point pairs"));
    }
    let zc = mean_point(source);
    let wc = mean_point(target);

    // a = Σ conj(z') w' / Σ |z'|²
    let (mut re, mut im, mut norm) = (0.0, 0.0, 0.0);
    for (p, q) in source.iter().zip(target) {
        let (zx, zy) = (p.x - zc.x, p.y - zc.y);
        let (wx, wy) = (q.x - wc.x, q.y - wc.y);
        re += zx * wx + zy * wy;
        im += zx * wy - zy * wx;
        norm += zx * zx + zy * zy;
    }
    let spread = source
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(0.0, f64::max)
        .max(1.0);
    if norm <= (spread * 1e-12).powi(2) * source.len() as f64 {
        return Err(Error::Degenerate("source points are coincident".into()));
    }
    let (a, b) = (re / norm, im / norm);
    let scale = a.hypot(b);
    if scale.is_nan() || scale <= 0.0 {
        return Err(Error::Degenerate("target points are coincident".into()));
    }
    let rotation = b.atan2(a);
    let translation = Point::new(wc.x - (a * zc.x - b * zc.y), wc.y - (b * zc.x + a * zc.y));
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

/// Root-mean-square distance between `t(source)` and `target`.
pub fn alignment_residual(
    source: &[Point],
    target: &[Point],
    t: &SimilarityTransform,
) -> Result<f64> {
    if source.len() != target.len() {
        return Err(Error::invalid(format!(
            "{} source points vs {} target points",
            source.len(),
            target.len()
        )));
    }
    if source.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = source
        .iter()
        .zip(target)
        .map(|(p, q)| {
            let m = t.apply_point(*p);
            (m.x - q.x).powi(2) + (m.y - q.y).powi(2)
        })
        .sum();
    Ok((sum / source.len() as f64).sqrt())
}

/// Canonical landmark layout in the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceTemplate {
    points: Vec<Point>,
}

impl Default for FaceTemplate {
    fn default() -> Self {
        FaceTemplate::canonical68()
    }
}

impl FaceTemplate {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("face template needs at least two points"));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::invalid("face template has non-finite coordinates"));
        }
        if points.iter().all(|p| *p == points[0]) {
            return Err(Error::Degenerate(
                "face template points are coincident".into(),
            ));
        }
        Ok(FaceTemplate { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Synthetic 68-point layout following the usual jaw / brows / nose /
    /// eyes / mouth grouping. Not measured from any real face set.
    pub fn canonical68() -> Self {
        let mut pts = Vec::with_capacity(DEFAULT_LANDMARKS);
        // jaw, 17 points along a lower half-ellipse
        for i in 0..17 {
            let a = PI * (i as f64 / 16.0);
            pts.push(Point::new(0.5 - 0.45 * a.cos(), 0.35 + 0.6 * a.sin()));
        }
        // brows, 5 each
        for side in [0.2, 0.6] {
            for i in 0..5 {
                let u = i as f64 / 4.0;
                pts.push(Point::new(side + 0.2 * u, 0.28 - 0.05 * (PI * u).sin()));
            }
        }
        // nose bridge 4, base 5
        for i in 0..4 {
            pts.push(Point::new(0.5, 0.38 + 0.06 * i as f64));
        }
        for i in 0..5 {
            pts.push(Point::new(
                0.42 + 0.04 * i as f64,
                0.6 + 0.02 * (1.0 - ((i as f64 - 2.0).abs() / 2.0)),
            ));
        }
        // eyes, 6 each
        for cx in [0.3, 0.7] {
            for i in 0..6 {
                let a = 2.0 * PI * i as f64 / 6.0;
                pts.push(Point::new(cx - 0.08 * a.cos(), 0.4 - 0.03 * a.sin()));
            }
        }
        // outer lip 12, inner lip 8
        for i in 0..12 {
            let a = 2.0 * PI * i as f64 / 12.0;
            pts.push(Point::new(0.5 - 0.16 * a.cos(), 0.76 - 0.06 * a.sin()));
        }
        for i in 0..8 {
            let a = 2.0 * PI * i as f64 / 8.0;
            pts.push(Point::new(0.5 - 0.1 * a.cos(), 0.76 - 0.025 * a.sin()));
        }
        debug_assert_eq!(pts.len(), DEFAULT_LANDMARKS);
        FaceTemplate { points: pts }
    }

    /// Parse the plain-text format: one `x y` pair per line. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let coord = |f: Option<&str>| -> Result<f64> {
                f.ok_or_else(|| Error::invalid(format!("line {}: expected two numbers", n + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("line {}: {e}", n + 1)))
            };
            let (x, y) = (coord(fields.next())?, coord(fields.next())?);
            if fields.next().is_some() {
                return Err(Error::invalid(format!("line {}: trailing fields", n + 1)));
            }
            points.push(Point::new(x, y));
        }
        FaceTemplate::new(points)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let _ = writeln!(out, "{} {}", p.x, p.y);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn tri() -> Vec<Point> {
        vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ]
    }

    #[test]
    fn identity_recovered() {
        let t = estimate_similarity(&tri(), &tri()).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12 && t.rotation.abs() < 1e-12);
        assert!(t.translation.x.abs() < 1e-12 && t.translation.y.abs() < 1e-12);
    }

    #[test]
    fn pure_translation_recovered() {
        let target: Vec<Point> = tri()
            .iter()
            .map(|p| Point::new(p.x + 3.0, p.y - 2.0))
            .collect();
        let t = estimate_similarity(&tri(), &target).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12 && t.rotation.abs() < 1e-12);
        assert!((t.translation.x - 3.0).abs() < 1e-12 && (t.translation.y + 2.0).abs() < 1e-12);
    }

    #[test]
    fn known_transform_round_trip() {
        let forward = SimilarityTransform::new(2.0, PI / 2.0, Point::new(1.0, 1.0)).unwrap();
        let target = apply_transform(&forward, &tri());
        // hand-computed images of the triangle
        let expected = [
            Point::new(1.0, 1.0),
            Point::new(1.0, 3.0),
            Point::new(-1.0, 1.0),
        ];
        for (a, b) in target.iter().zip(expected) {
            assert!(a.distance(b) < 1e-12);
        }
        let t = estimate_similarity(&tri(), &target).unwrap();
        assert!((t.scale - 2.0).abs() < 1e-9);
        assert!((t.rotation - PI / 2.0).abs() < 1e-9);
        assert!((t.translation.x - 1.0).abs() < 1e-9 && (t.translation.y - 1.0).abs() < 1e-9);
        assert!(alignment_residual(&tri(), &target, &t).unwrap() < 1e-9);
    }

    #[test]
    fn apply_examples() {
        let p = [Point::new(1.0, 0.0)];
        assert_eq!(
            apply_transform(&SimilarityTransform::IDENTITY, &p),
            p.to_vec()
        );
        let s2 = SimilarityTransform::new(2.0, 0.0, Point::default()).unwrap();
        assert_eq!(apply_transform(&s2, &p), vec![Point::new(2.0, 0.0)]);
        let rot = SimilarityTransform::new(1.0, PI, Point::default()).unwrap();
        let r = rot.apply_point(Point::new(1.0, 1.0));
        assert!((r.x + 1.0).abs() < 1e-12 && (r.y + 1.0).abs() < 1e-12);
    }

    #[test]
    fn residual_examples() {
        let shifted: Vec<Point> = tri().iter().map(|p| Point::new(p.x + 1.0, p.y)).collect();
        let r = alignment_residual(&tri(), &shifted, &SimilarityTransform::IDENTITY).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert!(alignment_residual(&tri(), &shifted[..2], &SimilarityTransform::IDENTITY).is_err());
    }

    /// Landmarks with isotropic noise sigma per axis sit sigma*sqrt(2) from
    /// their generating positions in RMS.
    #[test]
    fn residual_under_noise_is_sigma_sqrt2() {
        let template = FaceTemplate::canonical68();
        let truth = SimilarityTransform::new(60.0, 0.1, Point::new(120.0, 90.0)).unwrap();
        let clean = apply_transform(&truth, template.points());
        let sigma = 0.5;
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut total = 0.0;
        let trials = 1000;
        for _ in 0..trials {
            let noisy: Vec<Point> = clean
                .iter()
                .map(|p| Point::new(p.x + noise.sample(&mut rng), p.y + noise.sample(&mut rng)))
                .collect();
            total += alignment_residual(template.points(), &noisy, &truth).unwrap();
        }
        let mean = total / trials as f64;
        let expected = sigma * 2f64.sqrt();
        assert!((mean / expected - 1.0).abs() < 0.2, "{mean} vs {expected}");
    }

    #[test]
    fn degenerate_inputs() {
        let same = vec![Point::new(1.0, 1.0); 3];
        assert!(matches!(
            estimate_similarity(&same, &tri()),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            estimate_similarity(&tri(), &tri()[..2]),
            Err(Error::InvalidInput(_))
        ));
        assert!(estimate_similarity(&tri()[..1], &tri()[..1]).is_err());
    }

    #[test]
    fn template_text_round_trip() {
        let t = FaceTemplate::canonical68();
        assert_eq!(t.len(), 68);
        let parsed = FaceTemplate::parse(&t.to_text()).unwrap();
        assert_eq!(parsed, t);
        assert!(FaceTemplate::parse("0 0\n0 0\n").is_err());
        assert!(FaceTemplate::parse("0 0\n1\n").is_err());
        assert!(FaceTemplate::parse("# header\n0 0\n1 1\n").is_ok());
    }

    #[test]
    fn template_points_stay_in_unit_square() {
        for p in FaceTemplate::canonical68().points() {
            assert!(
                (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y),
                "{p:?}"
            );
        }
    }

    #[test]
    fn inverse_and_composition() {
        let t = SimilarityTransform::new(1.7, 0.4, Point::new(3.0, -2.0)).unwrap();
        let p = Point::new(0.3, 5.0);
        let back = t.inverse().apply_point(t.apply_point(p));
        assert!(back.distance(p) < 1e-12);
        let u = SimilarityTransform::new(0.5, -2.0, Point::new(1.0, 1.0)).unwrap();
        let direct = u.apply_point(t.apply_point(p));
        assert!(t.then(&u).apply_point(p).distance(direct) < 1e-12);
    }

    fn arb_transform() -> impl Strategy<Value = SimilarityTransform> {
        (0.5..3.0f64, -PI..PI, -100.0..100.0f64, -100.0..100.0f64)
            .prop_map(|(s, r, x, y)| SimilarityTransform::new(s, r, Point::new(x, y)).unwrap())
    }

    proptest! {
        #[test]
        fn exact_on_similarity_images(t in arb_transform()) {
            let src = FaceTemplate::canonical68();
            let dst = apply_transform(&t, src.points());
            let est = estimate_similarity(src.points(), &dst).unwrap();
            prop_assert!(alignment_residual(src.points(), &dst, &est).unwrap() < 1e-9);
        }

        #[test]
        fn never_worse_than_identity(t in arb_transform(), jitter in proptest::collection::vec(-1.0..1.0f64, 136)) {
            let src = FaceTemplate::canonical68();
            let dst: Vec<Point> = apply_transform(&t, src.points())
                .into_iter()
                .enumerate()
                .map(|(i, p)| Point::new(p.x + jitter[2 * i], p.y + jitter[2 * i + 1]))
                .collect();
            let est = estimate_similarity(src.points(), &dst).unwrap();
            let fitted = alignment_residual(src.points(), &dst, &est).unwrap();
            let ident = alignment_residual(src.points(), &dst, &SimilarityTransform::IDENTITY).unwrap();
            prop_assert!(fitted <= ident + 1e-9);
        }

        #[test]
        fn estimates_compose(t in arb_transform(), u in arb_transform()) {
            let pts = FaceTemplate::canonical68().points().to_vec();
            let tp = apply_transform(&t, &pts);
            let utp = apply_transform(&u, &tp);
            let first = estimate_similarity(&pts, &tp).unwrap();
            let second = estimate_similarity(&tp, &utp).unwrap();
            let direct = estimate_similarity(&pts, &utp).unwrap();
            let composed = first.then(&second);
            for p in &pts {
                prop_assert!(composed.apply_point(*p).distance(direct.apply_point(*p)) < 1e-6);
            }
        }
    }
}
