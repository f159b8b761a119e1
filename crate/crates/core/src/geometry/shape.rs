use std::ops::Range;

use crate::{Error, Result};

pub const N_LANDMARKS: usize = 68;
/// Subject's right eye in the 68-point markup (appears on the image's left).
pub const RIGHT_EYE: Range<usize> = 36..42;
pub const LEFT_EYE: Range<usize> = 42..48;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist2(self, other: Point) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }
}

/// 68 ordered landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    points: Vec<Point>,
}

impl Shape {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() != N_LANDMARKS {
            return Err(Error::invalid(format!(
                "shape needs {N_LANDMARKS} points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::NonFinite("shape coordinate".into()));
        }
        Ok(Shape { points })
    }

    /// From interleaved `[x0, y0, x1, y1, ...]`.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != 2 * N_LANDMARKS {
            return Err(Error::invalid(format!(
                "flat shape needs {} values, got {}",
                2 * N_LANDMARKS,
                flat.len()
            )));
        }
        Self::new(
            flat.chunks_exact(2)
                .map(|c| Point::new(c[0], c[1]))
                .collect(),
        )
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn centroid_of(&self, range: Range<usize>) -> Point {
        centroid(&self.points[range])
    }

    pub fn map(&self, mut f: impl FnMut(Point) -> Point) -> Shape {
        Shape {
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Point, Point) {
        self.points.iter().fold(
            (
                Point::new(f64::INFINITY, f64::INFINITY),
                Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
            ),
            |(lo, hi), p| {
                (
                    Point::new(lo.x.min(p.x), lo.y.min(p.y)),
                    Point::new(hi.x.max(p.x), hi.y.max(p.y)),
                )
            },
        )
    }

    /// True if every point lies in `[0, width) x [0, height)`.
    pub fn inside(&self, width: f64, height: f64) -> bool {
        self.points
            .iter()
            .all(|p| p.x >= 0.0 && p.y >= 0.0 && p.x < width && p.y < height)
    }
}

pub(crate) fn centroid(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point::new(sx / n, sy / n)
}

/// Distance between the two eye-landmark centroids, standing in for the pupils.
pub fn interpupil_distance(s: &Shape) -> Result<f64> {
    let d = s.centroid_of(RIGHT_EYE).dist(s.centroid_of(LEFT_EYE));
    if !(d >= 1e-6) {
        return Err(Error::Degenerate(format!("inter-pupil distance {d}")));
    }
    Ok(d)
}

/// Mean per-landmark Euclidean error divided by the ground-truth inter-pupil distance.
pub fn normalized_landmark_error(pred: &Shape, gt: &Shape) -> Result<f64> {
    let d = interpupil_distance(gt)?;
    let total: f64 = pred
        .points
        .iter()
        .zip(&gt.points)
        .map(|(p, g)| p.dist(*g))
        .sum();
    Ok(total / (N_LANDMARKS as f64 * d))
}
