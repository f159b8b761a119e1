use super::{Point, SimilarityTransform};
use crate::{Error, Result};

/// Single-channel image with `f64` intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    /// 8-bit pixels scaled to `[0, 1]`.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::from_vec(
            width,
            height,
            bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        )
    }

    /// Quantises `[0, 1]` intensities to bytes, clamping out-of-range values.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel value, or 0 outside the image.
    fn get_or_zero(&self, x: i64, y: i64) -> f64 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            0.0
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    /// Bilinear interpolation; samples outside the image read as 0.
    pub fn sample(&self, p: Point) -> f64 {
        let (x0, y0) = (p.x.floor(), p.y.floor());
        let (fx, fy) = (p.x - x0, p.y - y0);
        let (xi, yi) = (x0 as i64, y0 as i64);
        let top = (1.0 - fx) * self.get_or_zero(xi, yi) + fx * self.get_or_zero(xi + 1, yi);
        let bottom =
            (1.0 - fx) * self.get_or_zero(xi, yi + 1) + fx * self.get_or_zero(xi + 1, yi + 1);
        (1.0 - fy) * top + fy * bottom
    }
}

/// Inverse-mapping warp: `out(p) = img(t^-1(p))` with bilinear interpolation.
pub fn warp_image(
    img: &GrayImage,
    t: &SimilarityTransform,
    out_width: usize,
    out_height: usize,
) -> Result<GrayImage> {
    let inv = t.invert()?;
    let mut out = GrayImage::new(out_width, out_height);
    for y in 0..out_height {
        for x in 0..out_width {
            let src = inv.apply(Point::new(x as f64, y as f64));
            out.data[y * out_width + x] = img.sample(src);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(size: usize, c: Point, sigma: f64) -> GrayImage {
        let mut img = GrayImage::new(size, size);
        for y in 0..size {
            for x in 0..size {
                let d2 = Point::new(x as f64, y as f64).dist2(c);
                img.set(x, y, (-d2 / (2.0 * sigma * sigma)).exp());
            }
        }
        img
    }

    #[test]
    fn identity_warp_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = (0..64 * 64).map(|_| rng.random_range(0.0..1.0)).collect();
        let img = GrayImage::from_vec(64, 64, data).unwrap();
        let out = warp_image(&img, &SimilarityTransform::IDENTITY, 64, 64).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn translation_moves_pixel_one_column() {
        let mut img = GrayImage::new(8, 8);
        img.set(3, 4, 1.0);
        let t = SimilarityTransform::new(1.0, 0.0, 1.0, 0.0);
        let out = warp_image(&img, &t, 8, 8).unwrap();
        assert_eq!(out.get(4, 4), 1.0);
        assert_eq!(out.data().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn out_of_bounds_reads_zero() {
        let img = GrayImage::from_vec(4, 4, vec![1.0; 16]).unwrap();
        let t = SimilarityTransform::new(1.0, 0.0, 10.0, 0.0);
        let out = warp_image(&img, &t, 4, 4).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn round_trip_on_smooth_image() {
        let img = blob(64, Point::new(31.0, 33.0), 6.0);
        let t = SimilarityTransform::about(Point::new(32.0, 32.0), 1.1, 0.3, Point::new(1.5, -2.0));
        let there = warp_image(&img, &t, 64, 64).unwrap();
        let back = warp_image(&there, &t.invert().unwrap(), 64, 64).unwrap();
        let mae: f64 = back
            .data()
            .iter()
            .zip(img.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / (64.0 * 64.0);
        assert!(mae < 2.0 / 255.0, "mae {mae}");
    }

    #[test]
    fn rotation_preserves_blob_mass() {
        let c = Point::new(32.0, 32.0);
        let img = blob(64, c, 4.0);
        let mass: f64 = img.data().iter().sum();
        for angle in [0.1, 0.5, 1.0, 2.0] {
            let t = SimilarityTransform::about(c, 1.0, angle, Point::default());
            let out = warp_image(&img, &t, 64, 64).unwrap();
            let m: f64 = out.data().iter().sum();
            assert!(
                ((m - mass) / mass).abs() < 0.01,
                "angle {angle}: {m} vs {mass}"
            );
        }
    }

    #[test]
    fn u8_round_trip() {
        let bytes: Vec<u8> = (0..=255).collect();
        let img = GrayImage::from_u8(16, 16, &bytes).unwrap();
        assert_eq!(img.to_u8(), bytes);
    }
}
