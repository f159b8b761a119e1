use crate::config::KeyValues;
use crate::{Error, Result};

/// Network layout and loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_size: usize,
    pub n_landmarks: usize,
    pub n_stages: usize,
    pub n_classes: usize,
    /// Gaussian width of the inter-stage landmark heatmap, in pixels.
    pub heatmap_sigma: f64,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub fc_width: usize,
    /// Weight of the normalised landmark error.
    pub alpha: f64,
    /// Weight of the emotion cross-entropy.
    pub beta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_size: 64,
            n_landmarks: 68,
            n_stages: 2,
            n_classes: 7,
            heatmap_sigma: 2.0,
            conv1_channels: 8,
            conv2_channels: 16,
            fc_width: 128,
            alpha: 0.4,
            beta: 0.6,
        }
    }
}

impl ModelConfig {
    pub const KEYS: [&'static str; 10] = [
        "input_size",
        "n_landmarks",
        "n_stages",
        "n_classes",
        "heatmap_sigma",
        "conv1_channels",
        "conv2_channels",
        "fc_width",
        "alpha",
        "beta",
    ];

    pub fn validate(&self) -> Result<()> {
        if self.input_size != 64 || self.n_landmarks != 68 || self.n_classes != 7 {
            return Err(Error::invalid(
                "input_size, n_landmarks and n_classes are fixed at 64, 68 and 7",
            ));
        }
        if !(1..=2).contains(&self.n_stages) {
            return Err(Error::invalid(format!(
                "n_stages must be 1 or 2, got {}",
                self.n_stages
            )));
        }
        if self.conv1_channels == 0 || self.conv2_channels == 0 || self.fc_width == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if !(self.heatmap_sigma > 0.0) {
            return Err(Error::invalid("heatmap_sigma must be positive"));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(Error::invalid(format!(
                "loss weights need alpha >= 0, beta >= 0 and alpha + beta > 0, got {} and {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Reads any of [`ModelConfig::KEYS`] present in `kv` over `self`.
    pub fn update_from(&mut self, kv: &KeyValues) -> Result<()> {
        kv.get_into("input_size", &mut self.input_size)?;
        kv.get_into("n_landmarks", &mut self.n_landmarks)?;
        kv.get_into("n_stages", &mut self.n_stages)?;
        kv.get_into("n_classes", &mut self.n_classes)?;
        kv.get_into("heatmap_sigma", &mut self.heatmap_sigma)?;
        kv.get_into("conv1_channels", &mut self.conv1_channels)?;
        kv.get_into("conv2_channels", &mut self.conv2_channels)?;
        kv.get_into("fc_width", &mut self.fc_width)?;
        kv.get_into("alpha", &mut self.alpha)?;
        kv.get_into("beta", &mut self.beta)?;
        Ok(())
    }

    /// `key=value` lines; floats use Rust's shortest round-trip formatting.
    pub fn to_kv_text(&self) -> String {
        format!(
            "input_size={}\nn_landmarks={}\nn_stages={}\nn_classes={}\nheatmap_sigma={:?}\n\
             conv1_channels={}\nconv2_channels={}\nfc_width={}\nalpha={:?}\nbeta={:?}\n",
            self.input_size,
            self.n_landmarks,
            self.n_stages,
            self.n_classes,
            self.heatmap_sigma,
            self.conv1_channels,
            self.conv2_channels,
            self.fc_width,
            self.alpha,
            self.beta
        )
    }

    /// Spatial size after the two 2x2 pools.
    pub(crate) fn pooled_size(&self) -> usize {
        self.input_size / 4
    }
}
