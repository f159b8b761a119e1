use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::geometry::{Point, Shape, N_LANDMARKS};
use crate::numgrad::Tensor;
use crate::{Error, Result};

pub const PARAMS_VERSION: u32 = 1;

/// Fraction of the frame left free on each side of the canonical shape.
const CANONICAL_MARGIN: f64 = 0.1;

/// Named learnable tensors plus the fixed canonical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    tensors: Vec<(String, Tensor)>,
    /// Mean training shape in the canonical frame; not learned.
    pub canonical: Shape,
    pub version: u32,
}

impl ModelParams {
    /// Builds params from explicit tensors, checking names and shapes against `config`.
    pub fn from_parts(
        config: ModelConfig,
        tensors: Vec<(String, Tensor)>,
        canonical: Shape,
    ) -> Result<Self> {
        config.validate()?;
        let expected = layout(&config);
        if tensors.len() != expected.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((name, t), (want_name, want_shape, _)) in tensors.iter().zip(&expected) {
            if name != want_name || t.shape() != want_shape.as_slice() {
                return Err(Error::invalid(format!(
                    "parameter `{name}` {:?} does not match expected `{want_name}` {want_shape:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("parameter `{name}`")));
            }
        }
        Ok(ModelParams {
            config,
            tensors,
            canonical,
            version: PARAMS_VERSION,
        })
    }

    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.tensors
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(|i| &mut self.tensors[i].1)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Init {
    /// Uniform in `+/- sqrt(6 / fan_in)`.
    HeUniform(usize),
    Zero,
}

/// Parameter names, shapes and initialisers, in storage order.
fn layout(c: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let pooled = c.pooled_size();
    let flat = c.conv2_channels * pooled * pooled;
    let mut out = Vec::new();
    for stage in 1..=c.n_stages {
        let in_ch = if stage == 1 { 1 } else { 2 };
        let p = |s: &str| format!("stage{stage}.{s}");
        out.push((
            p("conv1.w"),
            vec![c.conv1_channels, in_ch, 3, 3],
            Init::HeUniform(in_ch * 9),
        ));
        out.push((p("conv1.b"), vec![c.conv1_channels], Init::Zero));
        out.push((
            p("conv2.w"),
            vec![c.conv2_channels, c.conv1_channels, 3, 3],
            Init::HeUniform(c.conv1_channels * 9),
        ));
        out.push((p("conv2.b"), vec![c.conv2_channels], Init::Zero));
        out.push((p("fc.w"), vec![flat, c.fc_width], Init::HeUniform(flat)));
        out.push((p("fc.b"), vec![c.fc_width], Init::Zero));
        out.push((
            p("delta.w"),
            vec![c.fc_width, 2 * c.n_landmarks],
            Init::HeUniform(c.fc_width),
        ));
        out.push((p("delta.b"), vec![2 * c.n_landmarks], Init::Zero));
    }
    out.push((
        "emotion.w".into(),
        vec![c.fc_width, c.n_classes],
        Init::HeUniform(c.fc_width),
    ));
    out.push(("emotion.b".into(), vec![c.n_classes], Init::Zero));
    out
}

/// He-uniform weights, zero biases, and the canonical shape from `train_shapes`.
pub fn init_params(config: &ModelConfig, seed: u64, train_shapes: &[Shape]) -> Result<ModelParams> {
    config.validate()?;
    let canonical = canonical_shape(train_shapes, config.input_size as f64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = layout(config)
        .into_iter()
        .map(|(name, shape, init)| {
            let n: usize = shape.iter().product();
            let values = match init {
                Init::Zero => vec![0.0; n],
                Init::HeUniform(fan_in) => {
                    let limit = (6.0 / fan_in as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
                }
            };
            let t = Tensor::new(shape, values)
                .expect("layout shape")
                .with_grad();
            (name, t)
        })
        .collect();
    ModelParams::from_parts(config.clone(), tensors, canonical)
}

/// Mean of `shapes`, uniformly scaled and translated so its bounding box spans the
/// frame minus a 10% margin along its longer side, centred.
pub fn canonical_shape(shapes: &[Shape], frame: f64) -> Result<Shape> {
    if shapes.is_empty() {
        return Err(Error::invalid(
            "canonical shape needs at least one training shape",
        ));
    }
    let n = shapes.len() as f64;
    let mean: Vec<Point> = (0..N_LANDMARKS)
        .map(|i| {
            let (sx, sy) = shapes.iter().fold((0.0, 0.0), |(sx, sy), s| {
                (sx + s.points()[i].x, sy + s.points()[i].y)
            });
            Point::new(sx / n, sy / n)
        })
        .collect();
    let mean = Shape::new(mean)?;
    let (lo, hi) = mean.bounds();
    let extent = (hi.x - lo.x).max(hi.y - lo.y);
    if !(extent > 1e-9) {
        return Err(Error::Degenerate(
            "mean training shape has zero extent".into(),
        ));
    }
    let scale = frame * (1.0 - 2.0 * CANONICAL_MARGIN) / extent;
    let centre = Point::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0);
    let half = frame / 2.0;
    Ok(mean.map(|p| {
        Point::new(
            half + scale * (p.x - centre.x),
            half + scale * (p.y - centre.y),
        )
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize, GenParams};
    use crate::geometry::{estimate_similarity, SimilarityTransform};

    fn shapes(n: usize, seed: u64) -> Vec<Shape> {
        synthesize(&GenParams {
            count: n,
            seed,
            ..GenParams::default()
        })
        .unwrap()
        .into_iter()
        .map(|s| s.shape)
        .collect()
    }

    #[test]
    fn same_seed_same_params() {
        let s = shapes(5, 0);
        let a = init_params(&ModelConfig::default(), 3, &s).unwrap();
        let b = init_params(&ModelConfig::default(), 3, &s).unwrap();
        assert_eq!(a, b);
        let c = init_params(&ModelConfig::default(), 4, &s).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn biases_zero_and_weights_bounded() {
        let p = init_params(&ModelConfig::default(), 1, &shapes(3, 1)).unwrap();
        for (name, t) in p.tensors() {
            if name.ends_with(".b") {
                assert!(t.values().iter().all(|&v| v == 0.0), "{name}");
            } else {
                let fan_in: usize = t.shape()[1..].iter().product::<usize>().max(1);
                let fan_in = if t.shape().len() == 2 {
                    t.shape()[0]
                } else {
                    fan_in
                };
                let limit = (6.0 / fan_in as f64).sqrt();
                assert!(t.values().iter().all(|v| v.abs() <= limit), "{name}");
            }
        }
        assert_eq!(p.tensors().len(), 2 * 8 + 2);
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(init_params(&ModelConfig::default(), 0, &[]).is_err());
    }

    #[test]
    fn single_shape_canonical_is_similar() {
        let s = shapes(1, 2).remove(0);
        let canon = canonical_shape(std::slice::from_ref(&s), 64.0).unwrap();
        let t = estimate_similarity(s.points(), canon.points()).unwrap();
        assert!(t.b.abs() < 1e-12);
        for (p, q) in s.points().iter().zip(canon.points()) {
            assert!(t.apply(*p).dist(*q) < 1e-9);
        }
        let _ = SimilarityTransform::IDENTITY;
    }

    #[test]
    fn canonical_respects_margin() {
        for seed in 0..20 {
            let canon = canonical_shape(&shapes(1 + seed as usize * 3, seed), 64.0).unwrap();
            let (lo, hi) = canon.bounds();
            let eps = 1e-9;
            assert!(lo.x >= 6.4 - eps && lo.y >= 6.4 - eps, "{lo:?}");
            assert!(hi.x <= 57.6 + eps && hi.y <= 57.6 + eps, "{hi:?}");
        }
    }
}
