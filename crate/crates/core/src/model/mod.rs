//! Convolutional-recurrent quad predictor.
//!
//! Three strided convolutions and a residual block encode the 4-channel plan
//! raster; two dense layers produce an embedding that drives an LSTM for
//! `quad_size` steps. Each step emits one column: coordinates squashed into
//! (-1, 1) and a distribution over the three column types.

mod checkpoint;
mod layers;
mod loss;
mod network;
mod real;
mod train;

pub use checkpoint::{fingerprint, CheckpointError};
pub use loss::{quad_loss, LossBreakdown, QuadTarget};
pub use network::{ForwardCache, QuadNet};
pub use real::Real;
pub use train::{evaluate_loss, render_batch, train, EpochStats, TrainError, TrainOutcome};

use crate::render::RasterInput;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_TYPES: usize = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("expected input of shape (B, 4, {expected}, {expected}), got size {got}")]
    BadInputShape { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub coord: f64,
    pub types: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            coord: 1.0,
            types: 0.2,
        }
    }
}

/// Stochastic gradient descent with classical momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Rescale the gradient when its global L2 norm exceeds this value.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            clip_norm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_size: usize,
    pub conv_filters: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    pub conv_strides: Vec<usize>,
    pub resnet_width: usize,
    pub fc_widths: Vec<usize>,
    pub recurrent_width: usize,
    pub quad_size: usize,
    pub leaky_slope: f64,
    pub loss_weights: LossWeights,
    pub optimizer: SgdConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub run_seed: u64,
    /// Max per-coordinate jitter applied to rendered input columns.
    pub noise_px: u32,
    /// Share of training records held out for validation.
    pub val_fraction: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: crate::geometry::CANVAS_SIZE,
            conv_filters: vec![32, 64, 128],
            conv_kernels: vec![7, 3, 3],
            conv_strides: vec![2, 2, 2],
            resnet_width: 128,
            fc_widths: vec![256, 128],
            recurrent_width: 128,
            quad_size: 4,
            leaky_slope: 0.01,
            loss_weights: LossWeights::default(),
            optimizer: SgdConfig::default(),
            epochs: 900,
            batch_size: 64,
            run_seed: 0,
            noise_px: 2,
            val_fraction: 0.1,
        }
    }
}

impl ModelConfig {
    /// Width-reduced network used for gradient checks and quick tests.
    pub fn tiny() -> Self {
        Self {
            conv_filters: vec![2, 2, 2],
            resnet_width: 2,
            fc_widths: vec![8, 8],
            recurrent_width: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        let n = self.conv_filters.len();
        if n == 0 || self.conv_kernels.len() != n || self.conv_strides.len() != n {
            return bad("conv_filters, conv_kernels and conv_strides must be non-empty and equal length".into());
        }
        if self.fc_widths.is_empty() {
            return bad("at least one fully connected layer is required".into());
        }
        let widths = self
            .conv_filters
            .iter()
            .chain(&self.fc_widths)
            .chain([&self.recurrent_width, &self.quad_size, &self.resnet_width]);
        if widths.clone().any(|&w| w == 0) {
            return bad("all widths must be >= 1".into());
        }
        if self.conv_kernels.iter().any(|&k| k % 2 == 0) || self.conv_strides.contains(&0) {
            return bad("kernels must be odd and strides positive".into());
        }
        if self.resnet_width != self.conv_filters[n - 1] {
            return bad(format!(
                "resnet_width {} must equal the last conv width {}",
                self.resnet_width,
                self.conv_filters[n - 1]
            ));
        }
        if self.feature_size() == 0 {
            return bad("input too small for the conv stack".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)".into());
        }
        Ok(())
    }

    /// Spatial side after each convolution ("same" padding of k/2).
    pub fn spatial_sizes(&self) -> Vec<usize> {
        let mut s = self.input_size;
        self.conv_kernels
            .iter()
            .zip(&self.conv_strides)
            .map(|(&k, &st)| {
                let pad = k / 2;
                s = (s + 2 * pad).saturating_sub(k) / st + 1;
                s
            })
            .collect()
    }

    /// Length of the flattened conv feature map.
    pub fn feature_size(&self) -> usize {
        let s = *self.spatial_sizes().last().unwrap_or(&0);
        s * s * self.conv_filters.last().copied().unwrap_or(0)
    }
}

/// One model output: `quad_size` coordinate pairs in (-1, 1) and type
/// distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadPrediction {
    pub coords: Vec<[f64; 2]>,
    pub type_probs: Vec<[f64; NUM_TYPES]>,
}

/// Anything that maps plan rasters to quads: the trained network or a test stub.
pub trait QuadPredictor: Sync {
    fn quad_size(&self) -> usize;

    fn predict(&self, batch: &[RasterInput]) -> Result<Vec<QuadPrediction>, ModelError>;
}
