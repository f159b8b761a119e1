//! Samples, emotion label scales, the on-disk dataset format and the synthetic
//! face generator.
//!
//! A dataset directory holds `annotations.csv` (header `id,label,x0,y0,...,x67,y67`)
//! and one 64x64 binary PGM per sample under `images/<id>.pgm`. Faces are expected to
//! be pre-cropped; no detection happens on load.

mod io;
mod labels;
pub mod pgm;
mod split;
pub mod synth;

pub use io::{load_annotations, write_dataset, ANNOTATIONS_FILE, IMAGES_DIR};
pub use labels::{remap_7_to_3, EmotionLabel3, EmotionLabel7, LabelMap3};
pub use split::split;
pub use synth::{generate_synthetic, synthesize, GenParams};

use crate::geometry::{GrayImage, Shape};

/// Side length of every face crop.
pub const IMAGE_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// Row-major 8-bit pixels, `IMAGE_SIZE * IMAGE_SIZE` of them.
    pub pixels: Vec<u8>,
    /// Ground truth in image coordinates.
    pub shape: Shape,
    pub label: EmotionLabel7,
}

impl Sample {
    /// Pixels scaled to `[0, 1]`.
    pub fn image(&self) -> GrayImage {
        GrayImage::from_u8(IMAGE_SIZE, IMAGE_SIZE, &self.pixels).expect("sample image size")
    }
}
