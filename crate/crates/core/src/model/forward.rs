use super::ModelParams;
use crate::dataset::EmotionLabel7;
use crate::geometry::{
    estimate_similarity, rasterize_heatmap, warp_image, GrayImage, Shape, SimilarityTransform,
};
use crate::numgrad::{Graph, Tensor, Var};
use crate::{Error, Result};

/// Inputs handed from one stage to the next. Computed from forward values and
/// treated as constants by differentiation.
#[derive(Debug, Clone, PartialEq)]
pub struct StageBridge {
    /// Per sample: image frame to canonical frame.
    pub to_canonical: Vec<SimilarityTransform>,
    /// `[B, 2, H, W]`: warped image and heatmap of the aligned estimate.
    pub input: Tensor,
}

/// A recorded batch forward pass.
#[derive(Debug)]
pub struct BatchForward {
    pub graph: Graph,
    /// Leaf per parameter tensor, in `ModelParams::tensors` order; `None` if unused.
    pub param_vars: Vec<Option<Var>>,
    /// `[B, 2N]` landmark estimate in the image frame after each active stage.
    pub stage_shapes: Vec<Var>,
    /// `[B, K]`, present when every stage of the model ran.
    pub logits: Option<Var>,
    /// One entry per stage after the first.
    pub bridges: Vec<StageBridge>,
    pub batch: usize,
}

impl BatchForward {
    pub fn final_shape(&self) -> Var {
        *self.stage_shapes.last().expect("at least one stage")
    }

    /// Landmark estimate of row `b` after `stage` (0-based).
    pub fn shape_of(&self, stage: usize, b: usize) -> Shape {
        let v = self.graph.values(self.stage_shapes[stage]);
        let cols = v.len() / self.batch;
        Shape::from_flat(&v[b * cols..(b + 1) * cols]).expect("finite forward output")
    }

    pub fn logits_of(&self, b: usize) -> Option<&[f64]> {
        self.logits.map(|l| {
            let v = self.graph.values(l);
            let k = v.len() / self.batch;
            &v[b * k..(b + 1) * k]
        })
    }
}

/// Runs the first `stages` stages on `images` (each 64x64 in `[0, 1]`).
///
/// With `frozen`, stage bridges are taken from a previous pass instead of being
/// recomputed; gradient checks use this to hold the stop-gradient inputs fixed.
pub fn forward_batch(
    params: &ModelParams,
    images: &[&GrayImage],
    stages: usize,
    frozen: Option<&[StageBridge]>,
) -> Result<BatchForward> {
    let cfg = &params.config;
    if images.is_empty() {
        return Err(Error::invalid("forward needs at least one image"));
    }
    if !(1..=cfg.n_stages).contains(&stages) {
        return Err(Error::invalid(format!(
            "cannot run {stages} stages of a {}-stage model",
            cfg.n_stages
        )));
    }
    let size = cfg.input_size;
    for img in images {
        if img.width() != size || img.height() != size {
            return Err(Error::invalid(format!(
                "expected {size}x{size} input, got {}x{}",
                img.width(),
                img.height()
            )));
        }
    }
    let batch = images.len();
    let mut graph = Graph::new();
    let mut param_vars: Vec<Option<Var>> = vec![None; params.tensors().len()];

    let mut raw = Vec::with_capacity(batch * size * size);
    for img in images {
        raw.extend_from_slice(img.data());
    }
    let raw = Tensor::new(vec![batch, 1, size, size], raw)?;

    let canonical_flat = params.canonical.to_flat();
    let mut tiled = Vec::with_capacity(batch * canonical_flat.len());
    for _ in 0..batch {
        tiled.extend_from_slice(&canonical_flat);
    }
    let s0 = graph.constant(Tensor::new(vec![batch, canonical_flat.len()], tiled)?);

    // Stage 1 works directly in the image frame.
    let input = graph.constant(raw);
    let mut features = stage_features(&mut graph, params, &mut param_vars, 1, input, batch)?;
    let delta = stage_head(&mut graph, params, &mut param_vars, 1, features)?;
    let mut current = graph.add(s0, delta)?;
    let mut stage_shapes = vec![current];
    let mut bridges = Vec::new();

    for stage in 2..=stages {
        let bridge = match frozen.and_then(|f| f.get(stage - 2)) {
            Some(b) => b.clone(),
            None => build_bridge(params, images, graph.values(current), batch).map_err(|e| {
                Error::Stage {
                    stage,
                    source: Box::new(e),
                }
            })?,
        };
        let mut to_maps = Vec::with_capacity(batch);
        let mut back_maps = Vec::with_capacity(batch);
        for t in &bridge.to_canonical {
            to_maps.push(t.to_affine());
            back_maps.push(
                t.invert()
                    .map_err(|e| Error::Stage {
                        stage,
                        source: Box::new(e),
                    })?
                    .to_affine(),
            );
        }
        let input = graph.constant(bridge.input.clone());
        features = stage_features(&mut graph, params, &mut param_vars, stage, input, batch)?;
        let delta = stage_head(&mut graph, params, &mut param_vars, stage, features)?;
        let aligned = graph.affine_rows(current, to_maps)?;
        let refined = graph.add(aligned, delta)?;
        current = graph.affine_rows(refined, back_maps)?;
        stage_shapes.push(current);
        bridges.push(bridge);
    }

    let logits = if stages == cfg.n_stages {
        let w = param_var(&mut graph, params, &mut param_vars, "emotion.w");
        let b = param_var(&mut graph, params, &mut param_vars, "emotion.b");
        Some(graph.dense(features, w, b)?)
    } else {
        None
    };

    Ok(BatchForward {
        graph,
        param_vars,
        stage_shapes,
        logits,
        bridges,
        batch,
    })
}

fn build_bridge(
    params: &ModelParams,
    images: &[&GrayImage],
    previous: &[f64],
    batch: usize,
) -> Result<StageBridge> {
    let size = params.config.input_size;
    let cols = previous.len() / batch;
    let mut to_canonical = Vec::with_capacity(batch);
    let mut input = Vec::with_capacity(batch * 2 * size * size);
    for (b, img) in images.iter().enumerate() {
        let estimate = Shape::from_flat(&previous[b * cols..(b + 1) * cols])?;
        let t = estimate_similarity(estimate.points(), params.canonical.points())?;
        let warped = warp_image(img, &t, size, size)?;
        let aligned = t.apply_shape(&estimate);
        let heat = rasterize_heatmap(aligned.points(), size, size, params.config.heatmap_sigma)?;
        input.extend_from_slice(warped.data());
        input.extend_from_slice(heat.data());
        to_canonical.push(t);
    }
    Ok(StageBridge {
        to_canonical,
        input: Tensor::new(vec![batch, 2, size, size], input)?,
    })
}

fn param_var(graph: &mut Graph, params: &ModelParams, vars: &mut [Option<Var>], name: &str) -> Var {
    let idx = params
        .index_of(name)
        .unwrap_or_else(|| panic!("parameter layout has no `{name}`"));
    *vars[idx].get_or_insert_with(|| graph.param(&params.tensors()[idx].1))
}

/// conv-relu-pool, conv-relu-pool, flatten, dense-relu.
fn stage_features(
    g: &mut Graph,
    params: &ModelParams,
    vars: &mut [Option<Var>],
    stage: usize,
    input: Var,
    batch: usize,
) -> Result<Var> {
    let mut p = |g: &mut Graph, s: &str| param_var(g, params, vars, &format!("stage{stage}.{s}"));
    let (k1, b1) = (p(g, "conv1.w"), p(g, "conv1.b"));
    let h = g.conv2d(input, k1, b1)?;
    let h = g.relu(h);
    let h = g.maxpool2(h)?;
    let (k2, b2) = (p(g, "conv2.w"), p(g, "conv2.b"));
    let h = g.conv2d(h, k2, b2)?;
    let h = g.relu(h);
    let h = g.maxpool2(h)?;
    let flat: usize = g.shape(h)[1..].iter().product();
    let h = g.reshape(h, vec![batch, flat])?;
    let (w, b) = (p(g, "fc.w"), p(g, "fc.b"));
    let h = g.dense(h, w, b)?;
    Ok(g.relu(h))
}

fn stage_head(
    g: &mut Graph,
    params: &ModelParams,
    vars: &mut [Option<Var>],
    stage: usize,
    features: Var,
) -> Result<Var> {
    let w = param_var(g, params, vars, &format!("stage{stage}.delta.w"));
    let b = param_var(g, params, vars, &format!("stage{stage}.delta.b"));
    g.dense(features, w, b)
}

/// Result of running the full model on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Final landmark estimate in the original image frame.
    pub shape: Shape,
    /// Estimate after each stage, image frame.
    pub stage_shapes: Vec<Shape>,
    /// Softmax over the emotion classes.
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
}

pub fn forward(params: &ModelParams, image: &GrayImage) -> Result<ForwardOutput> {
    let pass = forward_batch(params, &[image], params.config.n_stages, None)?;
    Ok(output_of(&pass, 0))
}

pub(crate) fn output_of(pass: &BatchForward, b: usize) -> ForwardOutput {
    let stage_shapes: Vec<Shape> = (0..pass.stage_shapes.len())
        .map(|s| pass.shape_of(s, b))
        .collect();
    let logits = pass.logits_of(b).map(<[f64]>::to_vec).unwrap_or_default();
    let probs = if logits.is_empty() {
        Vec::new()
    } else {
        crate::numgrad::softmax(&logits)
    };
    ForwardOutput {
        shape: stage_shapes.last().expect("one stage").clone(),
        stage_shapes,
        probs,
        logits,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub shape: Shape,
    pub label: EmotionLabel7,
    pub probs: Vec<f64>,
}

/// Index of the largest value; the lowest index wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Prediction {
    pub(crate) fn from_output(out: ForwardOutput) -> Result<Self> {
        let label = EmotionLabel7::from_index(argmax(&out.probs))?;
        Ok(Prediction {
            shape: out.shape,
            label,
            probs: out.probs,
        })
    }
}

pub fn predict(params: &ModelParams, image: &GrayImage) -> Result<Prediction> {
    Prediction::from_output(forward(params, image)?)
}

/// Predictions for many images, run in batches of `batch_size`.
pub(crate) fn predict_many(
    params: &ModelParams,
    images: &[GrayImage],
    batch_size: usize,
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch_size.max(1)) {
        let refs: Vec<&GrayImage> = chunk.iter().collect();
        let pass = forward_batch(params, &refs, params.config.n_stages, None)?;
        for b in 0..chunk.len() {
            out.push(Prediction::from_output(output_of(&pass, b))?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize, GenParams, Sample};
    use crate::model::{init_params, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize) -> (ModelParams, Vec<Sample>) {
        let samples = synthesize(&GenParams {
            count: n,
            seed: 3,
            ..GenParams::default()
        })
        .unwrap();
        let shapes: Vec<Shape> = samples.iter().map(|s| s.shape.clone()).collect();
        (
            init_params(&ModelConfig::default(), 7, &shapes).unwrap(),
            samples,
        )
    }

    #[test]
    fn zero_delta_network_predicts_canonical_shape() {
        let (mut params, samples) = setup(4);
        for (name, t) in params.tensors_mut() {
            if name.contains(".delta.") {
                t.values_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let out = forward(&params, &samples[0].image()).unwrap();
        for (p, q) in out.shape.points().iter().zip(params.canonical.points()) {
            assert!(p.dist(*q) < 1e-9);
        }
        assert_eq!(out.stage_shapes.len(), 2);
    }

    #[test]
    fn probabilities_form_a_distribution() {
        let (params, samples) = setup(3);
        for s in &samples {
            let out = forward(&params, &s.image()).unwrap();
            assert_eq!(out.probs.len(), 7);
            assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(out.probs.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn repeat_runs_are_bit_identical() {
        let (params, samples) = setup(2);
        let img = samples[1].image();
        assert_eq!(
            forward(&params, &img).unwrap(),
            forward(&params, &img).unwrap()
        );
    }

    #[test]
    fn batch_and_single_agree() {
        let (params, samples) = setup(3);
        let images: Vec<GrayImage> = samples.iter().map(Sample::image).collect();
        let batched = predict_many(&params, &images, 3).unwrap();
        for (img, b) in images.iter().zip(&batched) {
            let single = predict(&params, img).unwrap();
            assert_eq!(single.label, b.label);
            for (p, q) in single.probs.iter().zip(&b.probs) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wrong_input_size_rejected() {
        let (params, _) = setup(1);
        assert!(forward(&params, &GrayImage::new(32, 32)).is_err());
    }

    #[test]
    fn argmax_ties_and_shift_invariance() {
        assert_eq!(argmax(&[1.0 / 7.0; 7]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let l: Vec<f64> = (0..7).map(|_| rng.random_range(-5.0..5.0)).collect();
            let shifted: Vec<f64> = l.iter().map(|v| v + 123.0).collect();
            assert_eq!(argmax(&l), argmax(&shifted));
        }
    }

    #[test]
    fn predict_matches_forward_argmax() {
        let (params, _) = setup(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let data = (0..64 * 64).map(|_| rng.random_range(0.0..1.0)).collect();
            let img = GrayImage::from_vec(64, 64, data).unwrap();
            let out = forward(&params, &img).unwrap();
            let pred = predict(&params, &img).unwrap();
            let best = out
                .probs
                .iter()
                .enumerate()
                .fold(0, |b, (i, &p)| if p > out.probs[b] { i } else { b });
            assert_eq!(pred.label.index(), best);
        }
    }
}
