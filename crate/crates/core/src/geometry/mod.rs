//! Shapes, similarity transforms, image warping and landmark heatmaps.
//!
//! Coordinates are in pixels with `(x, y) = (column, row)`; pixel `(r, c)` has its
//! centre at `(c, r)`.

mod heatmap;
mod image;
pub(crate) mod shape;
mod transform;

pub use heatmap::{rasterize_heatmap, Heatmap};
pub use image::{warp_image, GrayImage};
pub use shape::{
    interpupil_distance, normalized_landmark_error, Point, Shape, LEFT_EYE, N_LANDMARKS, RIGHT_EYE,
};
pub use transform::{estimate_similarity, SimilarityTransform};
