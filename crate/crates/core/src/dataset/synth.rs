//! Deterministic synthetic faces with exact landmark ground truth.
//!
//! Each sample starts from a fixed 68-point template, gets the label's expression
//! deformation, per-point Gaussian jitter and a random similarity pose, and is then
//! rendered. The rendered image depends on the final landmarks only.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{write_dataset, EmotionLabel7, Sample, IMAGE_SIZE};
use crate::config::KeyValues;
use crate::geometry::{GrayImage, Point, Shape, SimilarityTransform, N_LANDMARKS};
use crate::{Error, Result};

/// Generator settings. Every field has a default; see [`GenParams::KEYS`].
#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub seed: u64,
    pub count: usize,
    /// Mouth-corner lift (happy) or drop (sad), `[0, 1]`.
    pub mouth_curvature: f64,
    /// Brow lift for surprise and fear, `[0, 1]`.
    pub brow_raise: f64,
    /// Brow lowering and knitting for anger and disgust, `[0, 1]`.
    pub brow_furrow: f64,
    pub eye_openness: f64,
    pub mouth_openness: f64,
    /// Nose and upper-lip raise for disgust, `[0, 1]`.
    pub lip_raise: f64,
    /// Per-coordinate landmark jitter in pixels.
    pub jitter_sigma: f64,
    /// Rotation drawn from `[-rotation_deg, rotation_deg]`.
    pub rotation_deg: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Translation drawn per axis from `[-translation, translation]` pixels.
    pub translation: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            seed: 0,
            count: 1000,
            mouth_curvature: 1.0,
            brow_raise: 1.0,
            brow_furrow: 1.0,
            eye_openness: 1.0,
            mouth_openness: 1.0,
            lip_raise: 1.0,
            jitter_sigma: 0.3,
            rotation_deg: 10.0,
            scale_min: 0.9,
            scale_max: 1.1,
            translation: 3.0,
        }
    }
}

const MAX_RETRIES: usize = 8;

impl GenParams {
    pub const KEYS: [&'static str; 13] = [
        "seed",
        "count",
        "mouth_curvature",
        "brow_raise",
        "brow_furrow",
        "eye_openness",
        "mouth_openness",
        "lip_raise",
        "jitter_sigma",
        "rotation_deg",
        "scale_min",
        "scale_max",
        "translation",
    ];

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.ensure_known(&Self::KEYS)?;
        let mut p = GenParams::default();
        kv.get_into("seed", &mut p.seed)?;
        kv.get_into("count", &mut p.count)?;
        kv.get_into("mouth_curvature", &mut p.mouth_curvature)?;
        kv.get_into("brow_raise", &mut p.brow_raise)?;
        kv.get_into("brow_furrow", &mut p.brow_furrow)?;
        kv.get_into("eye_openness", &mut p.eye_openness)?;
        kv.get_into("mouth_openness", &mut p.mouth_openness)?;
        kv.get_into("lip_raise", &mut p.lip_raise)?;
        kv.get_into("jitter_sigma", &mut p.jitter_sigma)?;
        kv.get_into("rotation_deg", &mut p.rotation_deg)?;
        kv.get_into("scale_min", &mut p.scale_min)?;
        kv.get_into("scale_max", &mut p.scale_max)?;
        kv.get_into("translation", &mut p.translation)?;
        p.validate().map_err(|e| kv.err(e.to_string()))?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("count must be positive"));
        }
        for (name, v) in [
            ("mouth_curvature", self.mouth_curvature),
            ("brow_raise", self.brow_raise),
            ("brow_furrow", self.brow_furrow),
            ("eye_openness", self.eye_openness),
            ("mouth_openness", self.mouth_openness),
            ("lip_raise", self.lip_raise),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        // Limits chosen so the template stays inside the 64x64 frame at the extremes.
        if !(0.0..=1.0).contains(&self.jitter_sigma) {
            return Err(Error::invalid("jitter_sigma must lie in [0, 1]"));
        }
        if !(0.0..=20.0).contains(&self.rotation_deg) {
            return Err(Error::invalid("rotation_deg must lie in [0, 20]"));
        }
        if !(self.scale_min > 0.5 && self.scale_min <= self.scale_max && self.scale_max <= 1.15) {
            return Err(Error::invalid(
                "scale range must satisfy 0.5 < scale_min <= scale_max <= 1.15",
            ));
        }
        if !(0.0..=5.0).contains(&self.translation) {
            return Err(Error::invalid("translation must lie in [0, 5]"));
        }
        Ok(())
    }
}

/// Neutral 68-point face centred in the 64x64 frame.
pub fn template() -> Shape {
    let mut pts = Vec::with_capacity(N_LANDMARKS);
    // 0-16 jaw: lower half-ellipse from the right temple (image left) to the left.
    for i in 0..17 {
        let phi = std::f64::consts::PI * (1.0 - i as f64 / 16.0);
        pts.push(Point::new(32.0 + 19.0 * phi.cos(), 28.0 + 24.0 * phi.sin()));
    }
    let raw: [(f64, f64); 51] = [
        // 17-21 right brow, 22-26 left brow
        (17.0, 22.5),
        (20.0, 20.5),
        (23.0, 20.0),
        (26.0, 20.5),
        (29.0, 21.5),
        (35.0, 21.5),
        (38.0, 20.5),
        (41.0, 20.0),
        (44.0, 20.5),
        (47.0, 22.5),
        // 27-30 nose bridge, 31-35 nostrils
        (32.0, 25.0),
        (32.0, 28.0),
        (32.0, 31.0),
        (32.0, 34.0),
        (28.5, 36.5),
        (30.2, 37.2),
        (32.0, 37.5),
        (33.8, 37.2),
        (35.5, 36.5),
        // 36-41 right eye, 42-47 left eye
        (19.5, 27.0),
        (22.0, 25.5),
        (25.5, 25.5),
        (28.0, 27.0),
        (25.5, 28.5),
        (22.0, 28.5),
        (36.0, 27.0),
        (38.5, 25.5),
        (42.0, 25.5),
        (44.5, 27.0),
        (42.0, 28.5),
        (38.5, 28.5),
        // 48-59 outer lips
        (25.0, 44.0),
        (27.3, 42.5),
        (29.8, 41.7),
        (32.0, 42.0),
        (34.2, 41.7),
        (36.7, 42.5),
        (39.0, 44.0),
        (36.7, 46.0),
        (34.2, 47.0),
        (32.0, 47.3),
        (29.8, 47.0),
        (27.3, 46.0),
        // 60-67 inner lips
        (26.5, 44.0),
        (29.5, 43.9),
        (32.0, 43.8),
        (34.5, 43.9),
        (37.5, 44.0),
        (34.5, 44.1),
        (32.0, 44.2),
        (29.5, 44.1),
    ];
    pts.extend(raw.iter().map(|&(x, y)| Point::new(x, y)));
    Shape::new(pts).expect("template has 68 points")
}

/// Per-point displacement accumulator, in template pixels.
struct Deform([Point; N_LANDMARKS]);

impl Deform {
    fn shift(&mut self, idx: &[usize], dx: f64, dy: f64) {
        for &i in idx {
            self.0[i].x += dx;
            self.0[i].y += dy;
        }
    }

    /// Shifts points on the image-left half by `-dx` and the right half by `+dx`
    /// (mirror-symmetric horizontal motion), and both by `dy`.
    fn mirrored(&mut self, left: &[usize], right: &[usize], dx: f64, dy: f64) {
        self.shift(left, -dx, dy);
        self.shift(right, dx, dy);
    }
}

const BROW_OUTER: ([usize; 2], [usize; 2]) = ([17, 18], [25, 26]);
const BROW_MID: ([usize; 1], [usize; 1]) = ([19], [24]);
const BROW_INNER: ([usize; 2], [usize; 2]) = ([20, 21], [22, 23]);
const UPPER_LIDS: [usize; 4] = [37, 38, 43, 44];
const LOWER_LIDS: [usize; 4] = [40, 41, 46, 47];

fn brows(d: &mut Deform, outer_dy: f64, mid_dy: f64, inner_dy: f64, inner_dx: f64) {
    d.mirrored(&BROW_OUTER.0, &BROW_OUTER.1, 0.0, outer_dy);
    d.mirrored(&BROW_MID.0, &BROW_MID.1, 0.0, mid_dy);
    // inner_dx > 0 pulls the inner ends toward the midline.
    d.mirrored(&BROW_INNER.0, &BROW_INNER.1, -inner_dx, inner_dy);
}

fn mouth_curve(d: &mut Deform, c: f64) {
    // c > 0 lifts the corners (smile), c < 0 drops them.
    d.mirrored(&[48, 60], &[54, 64], 1.0 * c.max(0.0), -2.5 * c);
    d.mirrored(
        &[49, 59, 61, 67],
        &[53, 55, 63, 65],
        0.3 * c.max(0.0),
        -1.2 * c,
    );
}

fn mouth_open(d: &mut Deform, o: f64) {
    d.shift(&[56, 57, 58], 0.0, 4.0 * o);
    d.shift(&[55, 59], 0.0, 3.0 * o);
    d.shift(&[65, 66, 67], 0.0, 3.5 * o);
    d.shift(&[61, 62, 63], 0.0, -0.5 * o);
    d.mirrored(&[48, 60], &[54, 64], -o, o);
}

fn eyes(d: &mut Deform, e: f64) {
    d.shift(&UPPER_LIDS, 0.0, -1.5 * e);
    d.shift(&LOWER_LIDS, 0.0, 1.0 * e);
}

/// Label-specific landmark displacements at the given magnitudes.
pub fn expression_offsets(label: EmotionLabel7, p: &GenParams) -> Vec<Point> {
    let mut d = Deform([Point::default(); N_LANDMARKS]);
    match label {
        EmotionLabel7::Happy => mouth_curve(&mut d, p.mouth_curvature),
        EmotionLabel7::Sad => {
            mouth_curve(&mut d, -p.mouth_curvature);
            brows(&mut d, 0.5 * p.brow_raise, 0.0, -1.2 * p.brow_raise, 0.0);
        }
        EmotionLabel7::Angry => {
            brows(
                &mut d,
                0.5 * p.brow_furrow,
                1.5 * p.brow_furrow,
                2.5 * p.brow_furrow,
                1.5 * p.brow_furrow,
            );
            eyes(&mut d, -0.4 * p.eye_openness);
        }
        EmotionLabel7::Surprised => {
            brows(
                &mut d,
                -2.5 * p.brow_raise,
                -3.0 * p.brow_raise,
                -2.5 * p.brow_raise,
                0.0,
            );
            eyes(&mut d, p.eye_openness);
            mouth_open(&mut d, p.mouth_openness);
        }
        EmotionLabel7::Disgust => {
            d.shift(&[31, 32, 33, 34, 35], 0.0, -1.5 * p.lip_raise);
            d.shift(&[30], 0.0, -p.lip_raise);
            d.shift(&[49, 50, 51, 52, 53, 61, 62, 63], 0.0, -2.0 * p.lip_raise);
            d.mirrored(&[48, 60], &[54, 64], 0.0, 0.8 * p.lip_raise);
            brows(
                &mut d,
                0.5 * p.brow_furrow,
                1.0 * p.brow_furrow,
                1.5 * p.brow_furrow,
                0.8 * p.brow_furrow,
            );
        }
        EmotionLabel7::Fear => {
            brows(
                &mut d,
                -p.brow_raise,
                -2.0 * p.brow_raise,
                -2.5 * p.brow_raise,
                p.brow_furrow,
            );
            eyes(&mut d, 1.2 * p.eye_openness);
            mouth_open(&mut d, 0.4 * p.mouth_openness);
            d.mirrored(&[48, 60], &[54, 64], 1.2 * p.mouth_openness, 0.0);
        }
        EmotionLabel7::Neutral => {}
    }
    d.0.to_vec()
}

/// Random similarity pose about the frame centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub scale: f64,
    pub angle_deg: f64,
    pub shift: Point,
}

impl Pose {
    pub fn transform(&self) -> SimilarityTransform {
        let c = IMAGE_SIZE as f64 / 2.0;
        SimilarityTransform::about(
            Point::new(c, c),
            self.scale,
            self.angle_deg.to_radians(),
            self.shift,
        )
    }
}

/// Template + expression + jitter, then pose.
pub fn posed_shape(label: EmotionLabel7, jitter: &[Point], pose: &Pose, p: &GenParams) -> Shape {
    let t = template();
    let offs = expression_offsets(label, p);
    let tr = pose.transform();
    let pts = t
        .points()
        .iter()
        .zip(&offs)
        .zip(jitter)
        .map(|((q, o), j)| tr.apply(Point::new(q.x + o.x + j.x, q.y + o.y + j.y)))
        .collect();
    Shape::new(pts).expect("68 finite points")
}

/// Draws `params.count` samples in memory.
pub fn synthesize(params: &GenParams) -> Result<Vec<Sample>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let jitter_dist = Normal::new(0.0, 1.0).expect("unit normal");
    let limit = IMAGE_SIZE as f64;
    (0..params.count)
        .map(|i| {
            let label = EmotionLabel7::from_index(rng.random_range(0..EmotionLabel7::COUNT))?;
            let mut reduction = 1.0;
            for _ in 0..MAX_RETRIES {
                let jitter: Vec<Point> = (0..N_LANDMARKS)
                    .map(|_| {
                        let (jx, jy): (f64, f64) =
                            (jitter_dist.sample(&mut rng), jitter_dist.sample(&mut rng));
                        Point::new(jx * params.jitter_sigma, jy * params.jitter_sigma)
                    })
                    .collect();
                let s_lo = 1.0 + (params.scale_min - 1.0) * reduction;
                let s_hi = 1.0 + (params.scale_max - 1.0) * reduction;
                let rot = params.rotation_deg * reduction;
                let tr = params.translation * reduction;
                let pose = Pose {
                    scale: uniform(&mut rng, s_lo, s_hi),
                    angle_deg: uniform(&mut rng, -rot, rot),
                    shift: Point::new(uniform(&mut rng, -tr, tr), uniform(&mut rng, -tr, tr)),
                };
                let shape = posed_shape(label, &jitter, &pose, params);
                if shape.inside(limit, limit) {
                    let pixels = render_face(&shape).to_u8();
                    return Ok(Sample {
                        id: format!("s{i:06}"),
                        pixels,
                        shape,
                        label,
                    });
                }
                reduction *= 0.5;
            }
            Err(Error::invalid(format!(
                "sample {i}: landmarks left the frame after {MAX_RETRIES} pose re-draws"
            )))
        })
        .collect()
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    // Always consume one draw so the stream does not depend on the range.
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// Synthesises a dataset and writes it to `out_dir`.
pub fn generate_synthetic(params: &GenParams, out_dir: &Path) -> Result<Vec<Sample>> {
    let samples = synthesize(params)?;
    write_dataset(out_dir, &samples)?;
    Ok(samples)
}

// Rendering ---------------------------------------------------------------

const SKIN: f64 = 0.55;
const EYE_WHITE: f64 = 0.95;
const IRIS: f64 = 0.15;
const LIPS: f64 = 0.35;
const MOUTH_INSIDE: f64 = 0.1;
const SUPERSAMPLE: usize = 4;

/// Renders a face whose pixels are a deterministic function of `shape`.
pub fn render_face(shape: &Shape) -> GrayImage {
    let p = shape.points();
    let mut img = GrayImage::new(IMAGE_SIZE, IMAGE_SIZE);

    // Head: jaw plus its point reflection through the temples' midpoint.
    let mid = Point::new((p[0].x + p[16].x) / 2.0, (p[0].y + p[16].y) / 2.0);
    let mut head: Vec<Point> = p[0..17].to_vec();
    head.extend(
        p[1..16]
            .iter()
            .map(|q| Point::new(2.0 * mid.x - q.x, 2.0 * mid.y - q.y)),
    );
    fill(&mut img, SKIN, |q| in_polygon(&head, q), &head);

    for eye in [&p[36..42], &p[42..48]] {
        fill(&mut img, EYE_WHITE, |q| in_polygon(eye, q), eye);
        let centre = centroid(eye);
        let r = 1.4;
        fill(
            &mut img,
            IRIS,
            |q| q.dist2(centre) <= r * r && in_polygon(eye, q),
            eye,
        );
    }

    fill(&mut img, LIPS, |q| in_polygon(&p[48..60], q), &p[48..60]);
    fill(
        &mut img,
        MOUTH_INSIDE,
        |q| in_polygon(&p[60..68], q),
        &p[60..68],
    );

    stroke(&mut img, &p[17..22], false, 1.4, 0.18);
    stroke(&mut img, &p[22..27], false, 1.4, 0.18);
    stroke(&mut img, &p[27..31], false, 1.0, 0.4);
    stroke(&mut img, &p[31..36], false, 1.0, 0.3);
    stroke(&mut img, &p[36..42], true, 0.8, 0.2);
    stroke(&mut img, &p[42..48], true, 0.8, 0.2);
    img
}

fn centroid(points: &[Point]) -> Point {
    let n = points.len() as f64;
    Point::new(
        points.iter().map(|q| q.x).sum::<f64>() / n,
        points.iter().map(|q| q.y).sum::<f64>() / n,
    )
}

/// Pixel index range covering `points` plus `pad`, clipped to the image.
fn pixel_box(points: &[Point], pad: f64) -> (usize, usize, usize, usize) {
    let max = IMAGE_SIZE as f64 - 1.0;
    let lo_x = points.iter().map(|q| q.x).fold(f64::INFINITY, f64::min) - pad;
    let hi_x = points.iter().map(|q| q.x).fold(f64::NEG_INFINITY, f64::max) + pad;
    let lo_y = points.iter().map(|q| q.y).fold(f64::INFINITY, f64::min) - pad;
    let hi_y = points.iter().map(|q| q.y).fold(f64::NEG_INFINITY, f64::max) + pad;
    (
        lo_x.floor().clamp(0.0, max) as usize,
        hi_x.ceil().clamp(0.0, max) as usize,
        lo_y.floor().clamp(0.0, max) as usize,
        hi_y.ceil().clamp(0.0, max) as usize,
    )
}

/// Blends `value` over the region selected by `inside`, anti-aliased by
/// supersampling each pixel on a regular grid.
fn fill(img: &mut GrayImage, value: f64, inside: impl Fn(Point) -> bool, bounds: &[Point]) {
    let (x0, x1, y0, y1) = pixel_box(bounds, 1.0);
    let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let q = Point::new(
                        x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5,
                        y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5,
                    );
                    if inside(q) {
                        hits += 1;
                    }
                }
            }
            if hits > 0 {
                let cov = hits as f64 / n;
                let old = img.get(x, y);
                img.set(x, y, old * (1.0 - cov) + value * cov);
            }
        }
    }
}

/// Even-odd rule.
fn in_polygon(poly: &[Point], q: Point) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > q.y) != (b.y > q.y) && q.x < (b.x - a.x) * (q.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn segment_dist(q: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((q.x - a.x) * dx + (q.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    q.dist(Point::new(a.x + t * dx, a.y + t * dy))
}

/// Anti-aliased polyline of the given width.
fn stroke(img: &mut GrayImage, pts: &[Point], closed: bool, width: f64, value: f64) {
    let (x0, x1, y0, y1) = pixel_box(pts, width + 1.0);
    let mut segs: Vec<(Point, Point)> = pts.windows(2).map(|w| (w[0], w[1])).collect();
    if closed {
        segs.push((pts[pts.len() - 1], pts[0]));
    }
    for y in y0..=y1 {
        for x in x0..=x1 {
            let q = Point::new(x as f64, y as f64);
            let d = segs
                .iter()
                .map(|&(a, b)| segment_dist(q, a, b))
                .fold(f64::INFINITY, f64::min);
            let cov = (width / 2.0 + 0.5 - d).clamp(0.0, 1.0);
            if cov > 0.0 {
                let old = img.get(x, y);
                img.set(x, y, old * (1.0 - cov) + value * cov);
            }
        }
    }
}
