use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RngState};
use super::log::{LogRow, MetricLog, Split};
use super::{Phase, TrainConfig};
use crate::dataset::{load_annotations, EmotionLabel7, LabelMap3, Sample};
use crate::geometry::{interpupil_distance, normalized_landmark_error, GrayImage, Shape};
use crate::model::argmax;
use crate::model::{batch_loss, forward_batch, init_params, LossWeights, ModelParams};
use crate::numgrad::{log_softmax_ce, AdamMoments};
use crate::{Error, Result};

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// Forward-only batch size for validation passes.
const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// State after the last completed epoch.
    pub last: Checkpoint,
    /// Lowest phase-B validation total, or `last` when phase B never ran.
    pub best: Checkpoint,
    /// Rows written by this invocation.
    pub log: Vec<LogRow>,
    pub stopped_early: bool,
}

/// Loads `config.dataset` and trains. See [`train_samples`].
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(config, &mut |_| {})
}

/// As [`train`], calling `observer` with each log row as it is written.
pub fn train_observed(
    config: &TrainConfig,
    observer: &mut dyn FnMut(&LogRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    let samples = load_annotations(&config.dataset)?;
    train_samples(config, samples, observer)
}

/// Trains on in-memory samples, writing checkpoints to `config.checkpoint_dir` and
/// the metric log to `config.log_file`.
///
/// Every input is validated before the first update. With `config.resume` the saved
/// state must carry the same config digest; training then continues exactly where
/// it stopped and appends to the log.
pub fn train_samples(
    config: &TrainConfig,
    samples: Vec<Sample>,
    observer: &mut dyn FnMut(&LogRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    for s in &samples {
        interpupil_distance(&s.shape)
            .map_err(|e| Error::invalid(format!("sample `{}`: {e}", s.id)))?;
    }
    let (train_set, val_set) = holdout(samples, config.val_fraction, config.seed)?;
    let digest = config.digest();

    let (mut state, resumed) = match &config.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.config_digest != digest || ckpt.params.config != config.model {
                return Err(Error::Config {
                    path: Some(path.clone()),
                    msg: "checkpoint was trained with a different configuration".into(),
                });
            }
            (ckpt, true)
        }
        None => {
            let shapes: Vec<Shape> = train_set.iter().map(|s| s.shape.clone()).collect();
            let params = init_params(&config.model, config.seed, &shapes)?;
            let moments = params
                .tensors()
                .iter()
                .map(|(_, t)| AdamMoments::new(t.len()))
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(1);
            let ckpt = Checkpoint {
                params,
                moments,
                epoch: 0,
                rng: RngState::capture(&rng),
                best_val: None,
                bad_epochs: 0,
                stopped: false,
                config_digest: digest.clone(),
            };
            (ckpt, false)
        }
    };

    let dir = &config.checkpoint_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut log = MetricLog::open(&config.log_file, resumed)?;
    let mut rng = state.rng.restore();
    let mut written = Vec::new();
    let mut best = None;
    let last_epoch = config
        .stop_after_epoch
        .map_or(config.total_epochs(), |s| s.min(config.total_epochs()));

    while !state.stopped && state.epoch < last_epoch {
        let epoch = state.epoch + 1;
        let phase = config.phase_of(epoch);
        let stages = match phase {
            Phase::A => 1,
            Phase::B => config.model.n_stages,
        };
        let weights = config.weights(phase);

        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);
        let train_row = run_epoch(
            config, &mut state, &train_set, &order, epoch, stages, weights,
        )?;
        let val = split_metrics(&state.params, &val_set, stages, weights, config.label_map_3)?;
        let rows = [
            train_row.into_row(epoch, phase),
            val.into_row(epoch, phase, Split::Val),
        ];

        state.epoch = epoch;
        state.rng = RngState::capture(&rng);
        if phase == Phase::B {
            if state.best_val.is_none_or(|b| val.total < b) {
                state.best_val = Some(val.total);
                state.bad_epochs = 0;
                save_checkpoint(&state, &dir.join(BEST_CHECKPOINT))?;
                best = Some(state.clone());
            } else {
                state.bad_epochs += 1;
                state.stopped = state.bad_epochs >= config.patience;
            }
        }
        save_checkpoint(&state, &dir.join(LAST_CHECKPOINT))?;
        log.write_epoch(&rows)?;
        for r in &rows {
            observer(r);
        }
        written.extend(rows);
    }

    let best = match best {
        Some(b) => b,
        None => match load_checkpoint(&dir.join(BEST_CHECKPOINT)) {
            Ok(b) if resumed && b.config_digest == digest => b,
            _ => {
                save_checkpoint(&state, &dir.join(BEST_CHECKPOINT))?;
                state.clone()
            }
        },
    };
    save_checkpoint(&state, &dir.join(LAST_CHECKPOINT))?;
    Ok(TrainOutcome {
        stopped_early: state.stopped,
        last: state,
        best,
        log: written,
    })
}

/// Seeded shuffle, then the first `round(fraction * n)` samples (at least one) are
/// held out. A zero fraction validates on the training set itself.
fn holdout(samples: Vec<Sample>, fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if samples.is_empty() {
        return Err(Error::invalid("training needs at least one sample"));
    }
    if fraction == 0.0 {
        return Ok((samples.clone(), samples));
    }
    let n = samples.len();
    let n_val = ((fraction * n as f64).round() as usize).max(1);
    if n_val >= n {
        return Err(Error::invalid(format!(
            "val_fraction {fraction} leaves no training samples out of {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<Sample>> = samples.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| -> Vec<Sample> {
        idx.iter()
            .map(|&i| slots[i].take().expect("once"))
            .collect()
    };
    let val = take(&order[..n_val]);
    let train = take(&order[n_val..]);
    Ok((train, val))
}

/// Running sums over an epoch, weighted by batch size.
#[derive(Default)]
struct Running {
    n: usize,
    landmark: f64,
    emotion: f64,
    total: f64,
    correct7: usize,
    correct3: usize,
    has_logits: bool,
}

impl Running {
    fn into_row(self, epoch: usize, phase: Phase) -> LogRow {
        let n = self.n as f64;
        let emo = |v: f64| self.has_logits.then_some(v);
        LogRow {
            epoch,
            phase,
            split: Split::Train,
            landmark_term: self.landmark / n,
            emotion_term: emo(self.emotion / n),
            total: self.total / n,
            acc7: emo(self.correct7 as f64 / n),
            acc3: emo(self.correct3 as f64 / n),
            nme: self.landmark / n,
        }
    }
}

fn run_epoch(
    config: &TrainConfig,
    state: &mut Checkpoint,
    samples: &[Sample],
    order: &[usize],
    epoch: usize,
    stages: usize,
    weights: LossWeights,
) -> Result<Running> {
    let mut run = Running::default();
    for (batch_no, idx) in order.chunks(config.batch_size).enumerate() {
        let abort = |msg: String| Error::Training {
            epoch,
            batch: batch_no + 1,
            msg,
        };
        let images: Vec<GrayImage> = idx.iter().map(|&i| samples[i].image()).collect();
        let refs: Vec<&GrayImage> = images.iter().collect();
        let shapes: Vec<&Shape> = idx.iter().map(|&i| &samples[i].shape).collect();
        let labels: Vec<EmotionLabel7> = idx.iter().map(|&i| samples[i].label).collect();

        let mut pass = forward_batch(&state.params, &refs, stages, None)?;
        let loss = batch_loss(&mut pass, &shapes, &labels, weights)?;
        let b = loss.breakdown;
        if !b.total.is_finite() {
            return Err(abort(format!("loss is {}", b.total)));
        }
        pass.graph.backward(loss.total)?;

        let tensors = state.params.tensors_mut();
        for (i, var) in pass.param_vars.iter().enumerate() {
            let Some(grad) = var.and_then(|v| pass.graph.grad(v)) else {
                continue;
            };
            let (name, t) = &mut tensors[i];
            config
                .adam
                .step(name, t.values_mut(), grad, &mut state.moments[i])
                .map_err(|e| abort(e.to_string()))?;
        }

        let n = idx.len();
        run.n += n;
        run.landmark += b.landmark_term * n as f64;
        run.emotion += b.emotion_term * n as f64;
        run.total += b.total * n as f64;
        if pass.logits.is_some() {
            run.has_logits = true;
            for (row, label) in labels.iter().enumerate() {
                let logits = pass.logits_of(row).expect("logits present");
                let pred = EmotionLabel7::from_index(argmax(logits))?;
                run.correct7 += usize::from(pred == *label);
                run.correct3 +=
                    usize::from(config.label_map_3.remap(pred) == config.label_map_3.remap(*label));
            }
        }
    }
    Ok(run)
}

/// Metrics of the first `stages` stages over a sample set, without updating anything.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitMetrics {
    pub landmark: f64,
    pub emotion: Option<f64>,
    pub total: f64,
    pub acc7: Option<f64>,
    pub acc3: Option<f64>,
}

impl SplitMetrics {
    fn into_row(self, epoch: usize, phase: Phase, split: Split) -> LogRow {
        LogRow {
            epoch,
            phase,
            split,
            landmark_term: self.landmark,
            emotion_term: self.emotion,
            total: self.total,
            acc7: self.acc7,
            acc3: self.acc3,
            nme: self.landmark,
        }
    }
}

pub(crate) fn split_metrics(
    params: &ModelParams,
    samples: &[Sample],
    stages: usize,
    weights: LossWeights,
    map: LabelMap3,
) -> Result<SplitMetrics> {
    let mut nme = 0.0;
    let mut ce = 0.0;
    let (mut c7, mut c3) = (0usize, 0usize);
    let mut has_logits = false;
    for chunk in samples.chunks(EVAL_BATCH) {
        let images: Vec<GrayImage> = chunk.iter().map(Sample::image).collect();
        let refs: Vec<&GrayImage> = images.iter().collect();
        let pass = forward_batch(params, &refs, stages, None)?;
        let last = pass.stage_shapes.len() - 1;
        for (b, s) in chunk.iter().enumerate() {
            nme += normalized_landmark_error(&pass.shape_of(last, b), &s.shape)?;
            if let Some(logits) = pass.logits_of(b) {
                has_logits = true;
                ce += log_softmax_ce(logits, s.label.index());
                let pred = EmotionLabel7::from_index(argmax(logits))?;
                c7 += usize::from(pred == s.label);
                c3 += usize::from(map.remap(pred) == map.remap(s.label));
            }
        }
    }
    let n = samples.len() as f64;
    let landmark = nme / n;
    let emotion = has_logits.then_some(ce / n);
    Ok(SplitMetrics {
        landmark,
        emotion,
        total: weights.alpha * landmark + weights.beta * emotion.unwrap_or(0.0),
        acc7: has_logits.then_some(c7 as f64 / n),
        acc3: has_logits.then_some(c3 as f64 / n),
    })
}
