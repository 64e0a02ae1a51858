use serde::{Deserialize, Serialize};

use crate::error::{Result, VgaError};
use crate::fusion::{check_alpha, FusionConfig, FusionMode, SimMode};
use crate::graphnet::GraphConfig;
use crate::vision::{EncoderKind, VisionConfig};

/// The α values searched by [`crate::harness::grid_search_alpha`] by default.
pub const ALPHA_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Every hyperparameter of a model and its training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Node embedding width `D`.
    pub input_dim: usize,
    /// Hidden width `d`.
    pub dim: usize,
    pub heads: usize,
    /// Tokens `t` for visual self-attention.
    pub vis_tokens: usize,
    /// Tokens `t_f` for fusion attention.
    pub fusion_tokens: usize,
    pub gcn_layers: usize,
    /// Probability of zeroing a node row during training.
    pub p_aug: f64,
    /// Weight of the classification loss in the joint objective.
    pub alpha: f64,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub folds: usize,
    /// Claims per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    pub encoder: EncoderKind,
    pub patch_size: usize,
    /// Encoder output width, or the stored embedding width for the precomputed encoder.
    pub enc_dim: usize,
    pub sim_mode: SimMode,
    pub fusion_mode: FusionMode,
    pub no_sim: bool,
    pub no_re: bool,
    pub no_da: bool,
    pub no_noise: bool,
    pub no_ocr: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 768,
            dim: 64,
            heads: 8,
            vis_tokens: 1,
            fusion_tokens: 1,
            gcn_layers: 1,
            p_aug: 0.2,
            alpha: 0.5,
            lr: 1e-3,
            max_epochs: 100,
            patience: 10,
            folds: 5,
            batch_size: 8,
            seed: 0,
            encoder: EncoderKind::TinyPatch,
            patch_size: 8,
            enc_dim: 32,
            sim_mode: SimMode::Cosine,
            fusion_mode: FusionMode::Coattention,
            no_sim: false,
            no_re: false,
            no_da: false,
            no_noise: false,
            no_ocr: false,
        }
    }
}

impl ModelConfig {
    /// Similarity mode after applying `no_sim`.
    pub fn effective_sim_mode(&self) -> SimMode {
        if self.no_sim {
            SimMode::Off
        } else {
            self.sim_mode
        }
    }

    pub fn effective_p_aug(&self) -> f64 {
        if self.no_da {
            0.0
        } else {
            self.p_aug
        }
    }

    /// Width of the projection-head outputs.
    pub fn projection_dim(&self) -> usize {
        self.dim / 2
    }

    pub fn vision_config(&self) -> VisionConfig {
        VisionConfig {
            dim: self.dim,
            heads: self.heads,
            tokens: self.vis_tokens,
            encoder: self.encoder,
            patch: self.patch_size,
            enc_dim: self.enc_dim,
            noise: !self.no_noise,
        }
    }

    pub fn graph_config(&self) -> GraphConfig {
        GraphConfig {
            input_dim: self.input_dim,
            dim: self.dim,
            heads: self.heads,
            layers: self.gcn_layers,
            root_enhancement: !self.no_re,
        }
    }

    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            dim: self.dim,
            heads: self.heads,
            tokens: self.fusion_tokens,
            mode: self.fusion_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(0.0..=1.0).contains(&self.p_aug) {
            return Err(VgaError::config(format!(
                "p_aug must lie in [0, 1], got {}",
                self.p_aug
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(VgaError::config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.patience == 0 {
            return Err(VgaError::config("patience must be at least 1"));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(VgaError::config("epochs and batch size must be positive"));
        }
        if self.folds < 2 {
            return Err(VgaError::config(format!(
                "need at least 2 folds, got {}",
                self.folds
            )));
        }
        if !self.dim.is_multiple_of(self.heads.max(1)) {
            return Err(VgaError::config(format!(
                "hidden width {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        self.vision_config().validate()?;
        self.graph_config().validate()?;
        self.fusion_config().validate()?;
        if self.patch_size == 0 || self.enc_dim == 0 {
            return Err(VgaError::config(
                "patch size and encoder width must be positive",
            ));
        }
        Ok(())
    }
}
