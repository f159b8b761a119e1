use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::config::KeyValues;
use crate::dataset::LabelMap3;
use crate::model::{LossWeights, ModelConfig};
use crate::numgrad::Adam;
use crate::{Error, Result};

/// Which loss terms drive training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Landmark warm-up on stage 1, then the full weighted loss.
    Joint,
    /// Cross-entropy only for the whole budget; landmark heads stay at initialisation.
    EmotionOnly,
    /// Landmark warm-up, then the cascade with the emotion weight forced to 0.
    LandmarkOnly,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Joint => "joint",
            Mode::EmotionOnly => "emotion_only",
            Mode::LandmarkOnly => "landmark_only",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Mode::Joint),
            "emotion_only" => Ok(Mode::EmotionOnly),
            "landmark_only" => Ok(Mode::LandmarkOnly),
            other => Err(Error::invalid(format!(
                "mode must be joint, emotion_only or landmark_only, got `{other}`"
            ))),
        }
    }
}

/// Training phase of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Stage 1 only, landmark term only.
    A,
    /// Every stage and the emotion head.
    B,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::A => "A",
            Phase::B => "B",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub mode: Mode,
    pub epochs_a: usize,
    pub epochs_b: usize,
    pub batch_size: usize,
    pub adam: Adam,
    pub seed: u64,
    /// Phase-B epochs without a new best validation total before stopping.
    pub patience: usize,
    /// Share of the dataset held out for validation; 0 validates on the training set.
    pub val_fraction: f64,
    pub label_map_3: LabelMap3,
    pub dataset: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub log_file: PathBuf,
    /// Checkpoint to continue from.
    pub resume: Option<PathBuf>,
    /// Stop (with a checkpoint) once this many epochs are complete.
    pub stop_after_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            mode: Mode::Joint,
            epochs_a: 50,
            epochs_b: 150,
            batch_size: 32,
            adam: Adam::default(),
            seed: 0,
            patience: 20,
            val_fraction: 0.1,
            label_map_3: LabelMap3::default(),
            dataset: PathBuf::from("data"),
            checkpoint_dir: PathBuf::from("checkpoints"),
            log_file: PathBuf::from("checkpoints/log.csv"),
            resume: None,
            stop_after_epoch: None,
        }
    }
}

const OWN_KEYS: [&str; 16] = [
    "mode",
    "epochs_a",
    "epochs_b",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "seed",
    "patience",
    "val_fraction",
    "label_map_3",
    "dataset",
    "checkpoint_dir",
    "log_file",
    "resume",
];

impl TrainConfig {
    /// Every key accepted in a config file.
    pub fn keys() -> Vec<&'static str> {
        let mut keys: Vec<&str> = OWN_KEYS.to_vec();
        keys.push("stop_after_epoch");
        keys.extend(ModelConfig::KEYS);
        keys
    }

    /// Builds a config from defaults overlaid with `kv`. A `log_file` that is not
    /// given lands in the checkpoint directory.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.ensure_known(&Self::keys())?;
        let mut c = TrainConfig::default();
        c.model.update_from(kv)?;
        if let Some(m) = kv.raw("mode") {
            c.mode = m.parse().map_err(|e: Error| kv.err(e.to_string()))?;
        }
        kv.get_into("epochs_a", &mut c.epochs_a)?;
        kv.get_into("epochs_b", &mut c.epochs_b)?;
        kv.get_into("batch_size", &mut c.batch_size)?;
        kv.get_into("lr", &mut c.adam.lr)?;
        kv.get_into("beta1", &mut c.adam.beta1)?;
        kv.get_into("beta2", &mut c.adam.beta2)?;
        kv.get_into("eps", &mut c.adam.eps)?;
        kv.get_into("seed", &mut c.seed)?;
        kv.get_into("patience", &mut c.patience)?;
        kv.get_into("val_fraction", &mut c.val_fraction)?;
        kv.get_into("label_map_3", &mut c.label_map_3)?;
        kv.get_into("dataset", &mut c.dataset)?;
        kv.get_into("checkpoint_dir", &mut c.checkpoint_dir)?;
        c.log_file = c.checkpoint_dir.join("log.csv");
        kv.get_into("log_file", &mut c.log_file)?;
        if let Some(r) = kv.raw("resume") {
            c.resume = Some(PathBuf::from(r));
        }
        if kv.raw("stop_after_epoch").is_some() {
            let mut e = 0usize;
            kv.get_into("stop_after_epoch", &mut e)?;
            c.stop_after_epoch = Some(e);
        }
        c.validate().map_err(|e| kv.err(e.to_string()))?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::load(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::invalid(format!(
                "lr must be positive, got {}",
                self.adam.lr
            )));
        }
        if !((0.0..1.0).contains(&self.adam.beta1) && (0.0..1.0).contains(&self.adam.beta2)) {
            return Err(Error::invalid("beta1 and beta2 must lie in [0, 1)"));
        }
        if !(self.adam.eps > 0.0) {
            return Err(Error::invalid("eps must be positive"));
        }
        if self.epochs_a + self.epochs_b == 0 {
            return Err(Error::invalid("at least one epoch is required"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid(format!(
                "val_fraction must lie in [0, 1), got {}",
                self.val_fraction
            )));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if self.mode == Mode::Joint && (self.model.alpha == 0.0 || self.model.beta == 0.0) {
            return Err(Error::invalid(
                "joint mode needs both alpha and beta positive; use emotion_only or landmark_only",
            ));
        }
        if self.mode == Mode::EmotionOnly && self.model.beta == 0.0 {
            return Err(Error::invalid("emotion_only mode needs beta > 0"));
        }
        if self.mode == Mode::LandmarkOnly && self.model.alpha == 0.0 {
            return Err(Error::invalid("landmark_only mode needs alpha > 0"));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_a + self.epochs_b
    }

    /// Phase of 1-based `epoch`. emotion_only has no landmark warm-up.
    pub fn phase_of(&self, epoch: usize) -> Phase {
        if self.mode != Mode::EmotionOnly && epoch <= self.epochs_a {
            Phase::A
        } else {
            Phase::B
        }
    }

    /// Loss weights applied while training `phase`.
    pub fn weights(&self, phase: Phase) -> LossWeights {
        let (alpha, beta) = (self.model.alpha, self.model.beta);
        match (self.mode, phase) {
            (Mode::EmotionOnly, _) => LossWeights { alpha: 0.0, beta },
            (_, Phase::A) | (Mode::LandmarkOnly, Phase::B) => LossWeights { alpha, beta: 0.0 },
            (Mode::Joint, Phase::B) => LossWeights { alpha, beta },
        }
    }

    /// Everything that influences the trained weights, as `key=value` text. Paths and
    /// the resume controls are excluded so runs in different directories, or split
    /// across a resume, share a digest.
    pub fn canonical_text(&self) -> String {
        let mut s = self.model.to_kv_text();
        s.push_str(&format!(
            "mode={}\nepochs_a={}\nepochs_b={}\nbatch_size={}\nlr={:?}\nbeta1={:?}\nbeta2={:?}\n\
             eps={:?}\nseed={}\npatience={}\nval_fraction={:?}\nlabel_map_3={}\n",
            self.mode,
            self.epochs_a,
            self.epochs_b,
            self.batch_size,
            self.adam.lr,
            self.adam.beta1,
            self.adam.beta2,
            self.adam.eps,
            self.seed,
            self.patience,
            self.val_fraction,
            self.label_map_3,
        ));
        s
    }

    /// Hex SHA-256 of [`TrainConfig::canonical_text`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}
