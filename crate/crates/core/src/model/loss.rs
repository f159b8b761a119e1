use super::forward::BatchForward;
use super::{ForwardOutput, ModelConfig};
use crate::dataset::EmotionLabel7;
use crate::geometry::{interpupil_distance, normalized_landmark_error, Shape};
use crate::numgrad::{log_softmax_ce, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl LossWeights {
    pub fn of(config: &ModelConfig) -> Self {
        LossWeights {
            alpha: config.alpha,
            beta: config.beta,
        }
    }
}

/// `total = alpha * landmark_term + beta * emotion_term`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Normalised landmark error, before weighting.
    pub landmark_term: f64,
    /// Emotion cross-entropy, before weighting.
    pub emotion_term: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl LossBreakdown {
    fn combine(landmark_term: f64, emotion_term: f64, w: LossWeights) -> Self {
        LossBreakdown {
            total: w.alpha * landmark_term + w.beta * emotion_term,
            landmark_term,
            emotion_term,
            alpha: w.alpha,
            beta: w.beta,
        }
    }
}

/// Joint loss of a single forward output against its ground truth.
pub fn joint_loss(
    out: &ForwardOutput,
    gt_shape: &Shape,
    gt_label: EmotionLabel7,
    weights: LossWeights,
) -> Result<LossBreakdown> {
    let landmark = normalized_landmark_error(&out.shape, gt_shape)?;
    if out.logits.len() <= gt_label.index() {
        return Err(Error::invalid(format!(
            "forward output has {} logits; label {} needs more",
            out.logits.len(),
            gt_label.index()
        )));
    }
    let emotion = log_softmax_ce(&out.logits, gt_label.index());
    Ok(LossBreakdown::combine(landmark, emotion, weights))
}

/// Differentiable batch loss recorded on the forward pass's graph.
#[derive(Debug, Clone, Copy)]
pub struct BatchLoss {
    pub total: Var,
    /// Batch means of each term.
    pub breakdown: LossBreakdown,
}

/// Adds the joint loss for a batch to `pass.graph`.
///
/// The landmark term is measured on the final image-frame estimate. The emotion term
/// is included only when `pass` produced logits; otherwise the total is the weighted
/// landmark term alone and `emotion_term` is reported as 0. The inter-pupil
/// normaliser depends on ground truth only and is a constant.
pub fn batch_loss(
    pass: &mut BatchForward,
    gt_shapes: &[&Shape],
    gt_labels: &[EmotionLabel7],
    weights: LossWeights,
) -> Result<BatchLoss> {
    if gt_shapes.len() != pass.batch || gt_labels.len() != pass.batch {
        return Err(Error::invalid(format!(
            "batch of {} needs matching targets, got {} shapes and {} labels",
            pass.batch,
            gt_shapes.len(),
            gt_labels.len()
        )));
    }
    let norms = gt_shapes
        .iter()
        .map(|s| interpupil_distance(s))
        .collect::<Result<Vec<_>>>()?;
    let target: Vec<f64> = gt_shapes.iter().flat_map(|s| s.to_flat()).collect();
    let g = &mut pass.graph;
    let landmark = g.landmark_error(
        pass.stage_shapes[pass.stage_shapes.len() - 1],
        &target,
        &norms,
    )?;
    let landmark_value = g.value(landmark).item();
    let weighted_landmark = g.scale(landmark, weights.alpha);
    let (total, emotion_value) = match pass.logits {
        Some(logits) => {
            let labels: Vec<usize> = gt_labels.iter().map(|l| l.index()).collect();
            let ce = g.softmax_ce(logits, &labels)?;
            let ce_value = g.value(ce).item();
            let weighted_ce = g.scale(ce, weights.beta);
            (g.add(weighted_landmark, weighted_ce)?, ce_value)
        }
        None => (weighted_landmark, 0.0),
    };
    let mut breakdown = LossBreakdown::combine(landmark_value, emotion_value, weights);
    breakdown.total = g.value(total).item();
    if pass.logits.is_none() {
        breakdown.beta = 0.0;
    }
    Ok(BatchLoss { total, breakdown })
}
