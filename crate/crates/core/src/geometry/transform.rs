use super::shape::centroid;
use super::{Point, Shape};
use crate::{Error, Result};

/// `p -> (a*x - b*y + tx, b*x + a*y + ty)`: uniform scale and rotation, then translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl SimilarityTransform {
    pub const IDENTITY: Self = SimilarityTransform {
        a: 1.0,
        b: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn new(a: f64, b: f64, tx: f64, ty: f64) -> Self {
        SimilarityTransform { a, b, tx, ty }
    }

    /// Rotation by `angle` radians and uniform `scale` about `center`, then `shift`.
    pub fn about(center: Point, scale: f64, angle: f64, shift: Point) -> Self {
        let (a, b) = (scale * angle.cos(), scale * angle.sin());
        let rc = Point::new(a * center.x - b * center.y, b * center.x + a * center.y);
        SimilarityTransform::new(a, b, center.x - rc.x + shift.x, center.y - rc.y + shift.y)
    }

    pub fn scale(&self) -> f64 {
        self.a.hypot(self.b)
    }

    pub fn apply(&self, p: Point) -> Point {
        Point::new(
            self.a * p.x - self.b * p.y + self.tx,
            self.b * p.x + self.a * p.y + self.ty,
        )
    }

    pub fn apply_shape(&self, s: &Shape) -> Shape {
        s.map(|p| self.apply(p))
    }

    pub fn invert(&self) -> Result<Self> {
        let det = self.a * self.a + self.b * self.b;
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::Degenerate(format!(
                "similarity transform with a={}, b={} is not invertible",
                self.a, self.b
            )));
        }
        let (ia, ib) = (self.a / det, -self.b / det);
        Ok(SimilarityTransform {
            a: ia,
            b: ib,
            tx: -(ia * self.tx - ib * self.ty),
            ty: -(ib * self.tx + ia * self.ty),
        })
    }

    /// `self` after `first`: `x -> self(first(x))`.
    pub fn compose(&self, first: &Self) -> Self {
        let t = self.apply(Point::new(first.tx, first.ty));
        SimilarityTransform {
            a: self.a * first.a - self.b * first.b,
            b: self.b * first.a + self.a * first.b,
            tx: t.x,
            ty: t.y,
        }
    }

    /// Row-major `[m00, m01, m10, m11, tx, ty]` as consumed by `Graph::affine_rows`.
    pub fn to_affine(&self) -> [f64; 6] {
        [self.a, -self.b, self.b, self.a, self.tx, self.ty]
    }
}

/// Least-squares similarity `T` minimising `sum |T(src_i) - dst_i|^2`, in closed form.
pub fn estimate_similarity(src: &[Point], dst: &[Point]) -> Result<SimilarityTransform> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(Error::invalid(format!(
            "estimate_similarity needs equal non-empty point sets, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    let (sc, dc) = (centroid(src), centroid(dst));
    let (mut norm, mut dot, mut cross) = (0.0, 0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (sx, sy) = (s.x - sc.x, s.y - sc.y);
        let (dx, dy) = (d.x - dc.x, d.y - dc.y);
        norm += sx * sx + sy * sy;
        dot += sx * dx + sy * dy;
        cross += sx * dy - sy * dx;
    }
    if !(norm > 1e-12 * src.len() as f64) {
        return Err(Error::Degenerate(
            "source points have zero spread; similarity is undetermined".into(),
        ));
    }
    let (a, b) = (dot / norm, cross / norm);
    Ok(SimilarityTransform {
        a,
        b,
        tx: dc.x - (a * sc.x - b * sc.y),
        ty: dc.y - (b * sc.x + a * sc.y),
    })
}
