use super::{GrayImage, Point};
use crate::{Error, Result};

/// Landmark proximity map with values in `[0, 1]`.
pub type Heatmap = GrayImage;

/// `out(p) = max_i exp(-|p - s_i|^2 / (2 sigma^2))`.
///
/// The max over landmarks equals `exp` of the smallest squared distance, so only one
/// exponential is evaluated per pixel.
pub fn rasterize_heatmap(
    points: &[Point],
    width: usize,
    height: usize,
    sigma: f64,
) -> Result<Heatmap> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!(
            "heatmap sigma must be positive, got {sigma}"
        )));
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut out = GrayImage::new(width, height);
    if points.is_empty() {
        return Ok(out);
    }
    for y in 0..height {
        for x in 0..width {
            let p = Point::new(x as f64, y as f64);
            let d2 = points
                .iter()
                .map(|s| p.dist2(*s))
                .fold(f64::INFINITY, f64::min);
            out.set(x, y, (-d2 * inv).exp());
        }
    }
    Ok(out)
}
