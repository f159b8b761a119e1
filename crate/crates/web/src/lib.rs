//! Browser bindings for the synthetic face renderer, landmark heatmaps and
//! similarity alignment. Images cross the boundary as 64x64 RGBA bytes, ready for
//! `ImageData`; shapes as flat `[x0, y0, x1, y1, ...]` arrays.

use emodan::dataset::synth::{posed_shape, render_face as render, template, GenParams, Pose};
use emodan::dataset::{remap_7_to_3, EmotionLabel7, IMAGE_SIZE};
use emodan::geometry::{
    estimate_similarity, normalized_landmark_error, rasterize_heatmap, warp_image, GrayImage,
    Point, Shape, N_LANDMARKS,
};
use emodan::{Error, Result};
use wasm_bindgen::prelude::*;

/// Rendered face with its ground-truth landmarks.
#[wasm_bindgen]
pub struct Face {
    rgba: Vec<u8>,
    gray: Vec<u8>,
    landmarks: Vec<f64>,
}

#[wasm_bindgen]
impl Face {
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// One byte per pixel, the form [`align_face`] takes back.
    pub fn gray(&self) -> Vec<u8> {
        self.gray.clone()
    }

    pub fn landmarks(&self) -> Vec<f64> {
        self.landmarks.clone()
    }
}

/// The face warped back onto the neutral template.
#[wasm_bindgen]
pub struct Aligned {
    rgba: Vec<u8>,
    landmarks: Vec<f64>,
    scale: f64,
    angle_deg: f64,
    residual: f64,
}

#[wasm_bindgen]
impl Aligned {
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    pub fn landmarks(&self) -> Vec<f64> {
        self.landmarks.clone()
    }

    /// Estimated pose scale relative to the template.
    #[wasm_bindgen(getter)]
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Estimated pose rotation, undone by the alignment.
    #[wasm_bindgen(getter)]
    pub fn angle_deg(&self) -> f64 {
        self.angle_deg
    }

    /// Inter-pupil normalised distance between the aligned landmarks and the template:
    /// what remains once pose is removed is the expression.
    #[wasm_bindgen(getter)]
    pub fn residual(&self) -> f64 {
        self.residual
    }
}

#[wasm_bindgen]
pub fn emotion_names() -> Vec<String> {
    EmotionLabel7::ALL
        .iter()
        .map(|l| l.name().to_string())
        .collect()
}

/// Positive, negative or neutral, with `surprised` counted as positive.
#[wasm_bindgen]
pub fn coarse_emotion(emotion: u32) -> std::result::Result<String, JsError> {
    let label = EmotionLabel7::from_index(emotion as usize).map_err(js)?;
    Ok(remap_7_to_3(label).name().to_string())
}

#[wasm_bindgen]
pub fn render_face(
    emotion: u32,
    strength: f64,
    angle_deg: f64,
    scale: f64,
    shift_x: f64,
    shift_y: f64,
) -> std::result::Result<Face, JsError> {
    face(
        emotion,
        strength,
        angle_deg,
        scale,
        Point::new(shift_x, shift_y),
    )
    .map_err(js)
}

/// Heatmap of `landmarks` as RGBA, brightest on the points.
#[wasm_bindgen]
pub fn landmark_heatmap(landmarks: &[f64], sigma: f64) -> std::result::Result<Vec<u8>, JsError> {
    let shape = Shape::from_flat(landmarks).map_err(js)?;
    let h = rasterize_heatmap(shape.points(), IMAGE_SIZE, IMAGE_SIZE, sigma).map_err(js)?;
    Ok(to_rgba(&h.to_u8()))
}

#[wasm_bindgen]
pub fn align_face(gray: &[u8], landmarks: &[f64]) -> std::result::Result<Aligned, JsError> {
    align(gray, landmarks).map_err(js)
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn to_rgba(gray: &[u8]) -> Vec<u8> {
    gray.iter().flat_map(|&g| [g, g, g, 255]).collect()
}

fn face(emotion: u32, strength: f64, angle_deg: f64, scale: f64, shift: Point) -> Result<Face> {
    let label = EmotionLabel7::from_index(emotion as usize)?;
    let params = GenParams {
        mouth_curvature: strength,
        brow_raise: strength,
        brow_furrow: strength,
        eye_openness: strength,
        mouth_openness: strength,
        lip_raise: strength,
        rotation_deg: angle_deg.abs(),
        scale_min: scale,
        scale_max: scale,
        translation: shift.x.abs().max(shift.y.abs()),
        ..GenParams::default()
    };
    // Same limits as the dataset generator, so every face stays inside the frame.
    params.validate()?;
    let pose = Pose {
        scale,
        angle_deg,
        shift,
    };
    let shape = posed_shape(label, &[Point::new(0.0, 0.0); N_LANDMARKS], &pose, &params);
    let gray = render(&shape).to_u8();
    Ok(Face {
        rgba: to_rgba(&gray),
        gray,
        landmarks: shape.to_flat(),
    })
}

fn align(gray: &[u8], landmarks: &[f64]) -> Result<Aligned> {
    let img = GrayImage::from_u8(IMAGE_SIZE, IMAGE_SIZE, gray)?;
    let shape = Shape::from_flat(landmarks)?;
    let target = template();
    let t = estimate_similarity(shape.points(), target.points())?;
    let warped = warp_image(&img, &t, IMAGE_SIZE, IMAGE_SIZE)?;
    let moved = t.apply_shape(&shape);
    // `t` undoes the pose, so the pose is its inverse.
    Ok(Aligned {
        rgba: to_rgba(&warped.to_u8()),
        landmarks: moved.to_flat(),
        scale: 1.0 / t.scale(),
        angle_deg: -t.b.atan2(t.a).to_degrees(),
        residual: normalized_landmark_error(&moved, &target)?,
    })
}
