//! Inter-modal similarity, multimodal fusion, classification and the joint objective.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VgaError};
use crate::tensorcore::{
    check_heads, AttentionParams, ParamId, ParamStore, Tape, Tensor, Var, LEAKY_SLOPE,
};

/// Clamp for every logarithm in the cross-entropy terms.
pub const LOG_EPS: f64 = 1e-7;

/// Margin of the contrastive MSE variant, in units of per-dimension distance.
pub const MSE_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Cosine,
    Euclidean,
    Mse,
    Off,
}

impl std::str::FromStr for SimMode {
    type Err = VgaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(SimMode::Cosine),
            "euclidean" => Ok(SimMode::Euclidean),
            "mse" => Ok(SimMode::Mse),
            "off" => Ok(SimMode::Off),
            _ => Err(VgaError::config(format!(
                "unknown similarity mode '{s}' (expected cosine, euclidean, mse or off)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Coattention,
    Concat,
    Weighted,
    SelfAttention,
}

impl std::str::FromStr for FusionMode {
    type Err = VgaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coattention" => Ok(FusionMode::Coattention),
            "concat" => Ok(FusionMode::Concat),
            "weighted" => Ok(FusionMode::Weighted),
            "self_attention" | "self-attention" => Ok(FusionMode::SelfAttention),
            _ => Err(VgaError::config(format!(
                "unknown fusion mode '{s}' (expected coattention, concat, weighted or self_attention)"
            ))),
        }
    }
}

/// Affine → LeakyReLU → affine, mapping one modality into the shared comparison space.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionHead {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl ProjectionHead {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        out: usize,
        seed: u64,
    ) -> Result<Self> {
        Ok(ProjectionHead {
            w1: store.add_glorot(format!("{prefix}.w1"), dim, dim, seed)?,
            b1: store.add_zeros(format!("{prefix}.b1"), &[dim])?,
            w2: store.add_glorot(format!("{prefix}.w2"), dim, out, seed)?,
            b2: store.add_zeros(format!("{prefix}.b2"), &[out])?,
        })
    }

    pub fn project(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let (w1, b1) = (tape.param(store, self.w1), tape.param(store, self.b1));
        let (w2, b2) = (tape.param(store, self.w2), tape.param(store, self.b2));
        let h = tape.affine(x, w1, b1)?;
        let h = tape.leaky_relu(h, LEAKY_SLOPE);
        tape.affine(h, w2, b2)
    }
}

pub fn cosine_similarity(tape: &mut Tape, z_g: Var, z_v: Var) -> Result<Var> {
    tape.cosine(z_g, z_v)
}

/// `−(y·ln(1−s) + (1−y)·ln s)`: agreement `s` is pushed down for rumors and up otherwise.
pub fn agreement_loss(tape: &mut Tape, s: Var, y: u8) -> Var {
    let arg = if y == 1 {
        tape.affine_scalar(s, -1.0, 1.0)
    } else {
        s
    };
    let log = tape.clamp_log(arg, LOG_EPS);
    tape.scale(log, -1.0)
}

/// Similarity loss between the two projected representations for label `y`.
pub fn similarity_loss(tape: &mut Tape, z_g: Var, z_v: Var, y: u8, mode: SimMode) -> Result<Var> {
    match mode {
        SimMode::Cosine => {
            let c = cosine_similarity(tape, z_g, z_v)?;
            let s = tape.sigmoid(c);
            Ok(agreement_loss(tape, s, y))
        }
        SimMode::Euclidean => {
            let dist = tape.distance(z_g, z_v)?;
            let neg = tape.scale(dist, -1.0);
            let s = tape.sigmoid(neg);
            Ok(agreement_loss(tape, s, y))
        }
        SimMode::Mse => {
            let dp = tape.value(z_g).numel() as f64;
            if y == 0 {
                let diff = tape.sub(z_g, z_v)?;
                let sq = tape.mul(diff, diff)?;
                let s = tape.sum(sq);
                Ok(tape.scale(s, 1.0 / dp))
            } else {
                let dist = tape.distance(z_g, z_v)?;
                let short = tape.affine_scalar(dist, -1.0 / dp.sqrt(), MSE_MARGIN);
                let hinge = tape.relu(short);
                tape.mul(hinge, hinge)
            }
        }
        SimMode::Off => Ok(tape.constant(Tensor::scalar(0.0))),
    }
}

/// `−(y·ln ŷ + (1−y)·ln(1−ŷ))`.
pub fn classification_loss(tape: &mut Tape, y_hat: Var, y: u8) -> Var {
    let arg = if y == 1 {
        y_hat
    } else {
        tape.affine_scalar(y_hat, -1.0, 1.0)
    };
    let log = tape.clamp_log(arg, LOG_EPS);
    tape.scale(log, -1.0)
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(VgaError::config(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// `α·l_cls + (1−α)·l_sim`.
pub fn joint_loss(tape: &mut Tape, l_cls: Var, l_sim: Var, alpha: f64) -> Result<Var> {
    check_alpha(alpha)?;
    let a = tape.scale(l_cls, alpha);
    let b = tape.scale(l_sim, 1.0 - alpha);
    tape.add(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionConfig {
    pub dim: usize,
    pub heads: usize,
    /// Tokens `t_f` each modality vector is split into.
    pub tokens: usize,
    pub mode: FusionMode,
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tokens == 0 || !self.dim.is_multiple_of(self.tokens) {
            return Err(VgaError::config(format!(
                "model width {} is not divisible by {} fusion tokens",
                self.dim, self.tokens
            )));
        }
        match self.mode {
            FusionMode::Coattention | FusionMode::SelfAttention => {
                check_heads(self.dim / self.tokens, self.heads)
            }
            _ => Ok(()),
        }
    }
}

/// Fusion weights plus the 2-way classifier.
#[derive(Debug, Clone, Copy)]
pub struct FusionLayer {
    pub cfg: FusionConfig,
    /// Queries from the graph, keys/values from the image.
    pub coattn_a: Option<AttentionParams>,
    /// Queries from the image, keys/values from the graph.
    pub coattn_b: Option<AttentionParams>,
    pub self_attn: Option<AttentionParams>,
    pub w_graph: Option<ParamId>,
    pub w_vis: Option<ParamId>,
    pub classifier_w: ParamId,
    pub classifier_b: ParamId,
}

impl FusionLayer {
    pub fn new(store: &mut ParamStore, cfg: FusionConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let width = cfg.dim / cfg.tokens;
        let mut layer = FusionLayer {
            cfg,
            coattn_a: None,
            coattn_b: None,
            self_attn: None,
            w_graph: None,
            w_vis: None,
            classifier_w: ParamId(0),
            classifier_b: ParamId(0),
        };
        match cfg.mode {
            FusionMode::Coattention => {
                layer.coattn_a = Some(AttentionParams::new(
                    store,
                    "fusion.coattn_a",
                    width,
                    cfg.heads,
                    seed,
                )?);
                layer.coattn_b = Some(AttentionParams::new(
                    store,
                    "fusion.coattn_b",
                    width,
                    cfg.heads,
                    seed,
                )?);
            }
            FusionMode::SelfAttention => {
                layer.self_attn = Some(AttentionParams::new(
                    store,
                    "fusion.self_attn",
                    width,
                    cfg.heads,
                    seed,
                )?);
            }
            FusionMode::Weighted => {
                layer.w_graph = Some(store.add("fusion.w_graph", Tensor::scalar(1.0))?);
                layer.w_vis = Some(store.add("fusion.w_vis", Tensor::scalar(1.0))?);
            }
            FusionMode::Concat => {}
        }
        layer.classifier_w = store.add_glorot("fusion.classifier.w", 2 * cfg.dim, 2, seed)?;
        layer.classifier_b = store.add_zeros("fusion.classifier.b", &[2])?;
        Ok(layer)
    }

    /// Combines `1 × d` graph and visual representations into `1 × 2d`.
    pub fn fuse(&self, tape: &mut Tape, store: &ParamStore, graph: Var, vis: Var) -> Result<Var> {
        let d = self.cfg.dim;
        for v in [graph, vis] {
            if tape.value(v).numel() != d {
                return Err(VgaError::dim(format!(
                    "fusion expects width {d}, got {:?}",
                    tape.value(v).shape()
                )));
            }
        }
        let (t, width) = (self.cfg.tokens, d / self.cfg.tokens);
        match self.cfg.mode {
            FusionMode::Concat => {
                let g = tape.reshape(graph, &[1, d])?;
                let v = tape.reshape(vis, &[1, d])?;
                tape.concat_cols(g, v)
            }
            FusionMode::Weighted => {
                let wg = tape.param(store, self.w_graph.expect("weighted fusion weights"));
                let wv = tape.param(store, self.w_vis.expect("weighted fusion weights"));
                let g = tape.reshape(graph, &[1, d])?;
                let v = tape.reshape(vis, &[1, d])?;
                let g = tape.scale_by(g, wg)?;
                let v = tape.scale_by(v, wv)?;
                tape.concat_cols(g, v)
            }
            FusionMode::Coattention => {
                let a = self.coattn_a.expect("co-attention weights");
                let b = self.coattn_b.expect("co-attention weights");
                let g = tape.reshape(graph, &[t, width])?;
                let v = tape.reshape(vis, &[t, width])?;
                let ga = a.forward(tape, store, g, v)?;
                let vb = b.forward(tape, store, v, g)?;
                let ga = tape.reshape(ga, &[1, d])?;
                let vb = tape.reshape(vb, &[1, d])?;
                tape.concat_cols(ga, vb)
            }
            FusionMode::SelfAttention => {
                let sa = self.self_attn.expect("self-attention weights");
                let g = tape.reshape(graph, &[1, d])?;
                let v = tape.reshape(vis, &[1, d])?;
                let gv = tape.concat_cols(g, v)?;
                let seq = tape.reshape(gv, &[2 * t, width])?;
                let out = sa.forward(tape, store, seq, seq)?;
                tape.reshape(out, &[1, 2 * d])
            }
        }
    }

    /// Softmax class probabilities `1 × 2` and `ŷ`, the false-rumor probability, as `1 × 1`.
    pub fn classify(&self, tape: &mut Tape, store: &ParamStore, vg: Var) -> Result<(Var, Var)> {
        let w = tape.param(store, self.classifier_w);
        let b = tape.param(store, self.classifier_b);
        let logits = tape.affine(vg, w, b)?;
        let probs = tape.softmax_rows(logits)?;
        let y_hat = tape.slice_cols(probs, 1, 2)?;
        Ok((probs, y_hat))
    }
}
