use serde::{Deserialize, Serialize};

use super::srm::SrmBank;
use crate::error::{Result, VgaError};
use crate::tensorcore::{
    check_heads, AttentionParams, ParamId, ParamStore, Tape, Tensor, Var, LEAKY_SLOPE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Use the claim's stored visual embedding as the encoder output.
    Precomputed,
    /// Trainable patch embedding over the raw image.
    TinyPatch,
}

impl std::str::FromStr for EncoderKind {
    type Err = VgaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "precomputed" => Ok(EncoderKind::Precomputed),
            "tiny_patch" | "tiny-patch" => Ok(EncoderKind::TinyPatch),
            _ => Err(VgaError::config(format!(
                "unknown encoder '{s}' (expected precomputed or tiny_patch)"
            ))),
        }
    }
}

/// Non-overlapping `p×p` patches of an `H×W×C` tensor as rows of a `P × (p·p·C)` matrix.
///
/// Rows and columns that do not fill a whole patch are dropped.
pub fn extract_patches(image: &Tensor, p: usize) -> Result<Tensor> {
    let &[h, w, c] = image.shape() else {
        return Err(VgaError::dim(format!(
            "patches need an H×W×C tensor, got {:?}",
            image.shape()
        )));
    };
    if p == 0 || h < p || w < p {
        return Err(VgaError::dim(format!(
            "image {h}×{w} is smaller than one {p}×{p} patch"
        )));
    }
    let (ph, pw) = (h / p, w / p);
    let mut data = Vec::with_capacity(ph * pw * p * p * c);
    let src = image.data();
    for by in 0..ph {
        for bx in 0..pw {
            for y in by * p..(by + 1) * p {
                let start = (y * w + bx * p) * c;
                data.extend_from_slice(&src[start..start + p * c]);
            }
        }
    }
    Tensor::new(vec![ph * pw, p * p * c], data)
}

/// Smallest trainable image encoder: per-patch projection, LeakyReLU, mean over patches.
#[derive(Debug, Clone, Copy)]
pub struct TinyPatchEncoder {
    pub w: ParamId,
    pub b: ParamId,
    pub patch: usize,
    pub out_dim: usize,
}

impl TinyPatchEncoder {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        patch: usize,
        channels: usize,
        out_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if patch == 0 || out_dim == 0 {
            return Err(VgaError::config(
                "patch size and encoder width must be positive",
            ));
        }
        Ok(TinyPatchEncoder {
            w: store.add_glorot(
                format!("{prefix}.w"),
                patch * patch * channels,
                out_dim,
                seed,
            )?,
            b: store.add_zeros(format!("{prefix}.b"), &[out_dim])?,
            patch,
            out_dim,
        })
    }

    /// `patches` is the output of [`extract_patches`]; returns `1 × out_dim`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, patches: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let z = tape.affine(patches, w, b)?;
        let z = tape.leaky_relu(z, LEAKY_SLOPE);
        let m = tape.mean_rows(z)?;
        tape.reshape(m, &[1, self.out_dim])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VisionConfig {
    /// Model width `d`; each FC output has width `d/2`.
    pub dim: usize,
    pub heads: usize,
    /// Number of tokens `t` the `d`-vector is split into for self-attention.
    pub tokens: usize,
    pub encoder: EncoderKind,
    pub patch: usize,
    /// Encoder output width `d_enc` (tiny_patch) or stored embedding width (precomputed).
    pub enc_dim: usize,
    pub noise: bool,
}

impl VisionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return Err(VgaError::config(format!(
                "model width {} must be even",
                self.dim
            )));
        }
        if self.tokens == 0 || !self.dim.is_multiple_of(self.tokens) {
            return Err(VgaError::config(format!(
                "model width {} is not divisible by {} visual tokens",
                self.dim, self.tokens
            )));
        }
        check_heads(self.dim / self.tokens, self.heads)
    }
}

/// Per-claim constant inputs of the visual branch.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualInput {
    /// `1 × enc_dim` stored embedding, or the patch matrix of the image.
    pub semantic: Tensor,
    /// Patch matrix of the SRM residual; `None` when the noise branch is off.
    pub noise_patches: Option<Tensor>,
}

impl VisualInput {
    pub fn prepare(
        cfg: &VisionConfig,
        srm: &SrmBank,
        claim_id: &str,
        image: Option<&Tensor>,
        embedding: Option<&Tensor>,
    ) -> Result<Self> {
        let semantic = match cfg.encoder {
            EncoderKind::Precomputed => {
                let e = embedding.ok_or_else(|| {
                    VgaError::config(format!(
                        "claim '{claim_id}' has no visual_embedding; the precomputed encoder needs one \
                         (use --encoder tiny_patch for raw images)"
                    ))
                })?;
                if e.numel() != cfg.enc_dim {
                    return Err(VgaError::dim(format!(
                        "claim '{claim_id}': visual embedding width {} differs from {}",
                        e.numel(),
                        cfg.enc_dim
                    )));
                }
                Tensor::row(e.data().to_vec())
            }
            EncoderKind::TinyPatch => {
                let img = image.ok_or_else(|| {
                    VgaError::config(format!(
                        "claim '{claim_id}' has no image; the tiny_patch encoder needs one \
                         (use --encoder precomputed for stored embeddings)"
                    ))
                })?;
                extract_patches(img, cfg.patch)?
            }
        };
        let noise_patches = if cfg.noise {
            let img = image.ok_or_else(|| {
                VgaError::config(format!(
                    "claim '{claim_id}' has no raw image for the noise branch; pass --no-noise to disable it"
                ))
            })?;
            Some(extract_patches(&srm.residual(img)?, cfg.patch)?)
        } else {
            None
        };
        Ok(VisualInput {
            semantic,
            noise_patches,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VisionBranch {
    pub cfg: VisionConfig,
    pub semantic_encoder: Option<TinyPatchEncoder>,
    pub w_rgb: ParamId,
    pub b_rgb: ParamId,
    pub noise_encoder: Option<TinyPatchEncoder>,
    pub w_n: Option<ParamId>,
    pub b_n: Option<ParamId>,
    pub attention: AttentionParams,
}

/// Intermediate and final visual representations, all `1 × width`.
#[derive(Debug, Clone, Copy)]
pub struct VisionOutput {
    pub rgb: Var,
    pub noise: Var,
    pub vis: Var,
    pub vis_prime: Var,
}

impl VisionBranch {
    pub fn new(store: &mut ParamStore, cfg: VisionConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let half = cfg.dim / 2;
        let (semantic_encoder, sem_width) = match cfg.encoder {
            EncoderKind::Precomputed => (None, cfg.enc_dim),
            EncoderKind::TinyPatch => (
                Some(TinyPatchEncoder::new(
                    store,
                    "vision.semantic_encoder",
                    cfg.patch,
                    3,
                    cfg.enc_dim,
                    seed,
                )?),
                cfg.enc_dim,
            ),
        };
        let w_rgb = store.add_glorot("vision.w_rgb", sem_width, half, seed)?;
        let b_rgb = store.add_zeros("vision.b_rgb", &[half])?;
        let (noise_encoder, w_n, b_n) = if cfg.noise {
            let enc = TinyPatchEncoder::new(
                store,
                "vision.noise_encoder",
                cfg.patch,
                3,
                cfg.enc_dim,
                seed,
            )?;
            let w = store.add_glorot("vision.w_n", cfg.enc_dim, half, seed)?;
            let b = store.add_zeros("vision.b_n", &[half])?;
            (Some(enc), Some(w), Some(b))
        } else {
            (None, None, None)
        };
        let attention = AttentionParams::new(
            store,
            "vision.self_attn",
            cfg.dim / cfg.tokens,
            cfg.heads,
            seed,
        )?;
        Ok(VisionBranch {
            cfg,
            semantic_encoder,
            w_rgb,
            b_rgb,
            noise_encoder,
            w_n,
            b_n,
            attention,
        })
    }

    /// `RGB = LeakyReLU(W_rgb · enc(I) + b_rgb)`.
    pub fn encode_semantic(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: &VisualInput,
    ) -> Result<Var> {
        let x = tape.constant(input.semantic.clone());
        let feat = match (&self.semantic_encoder, self.cfg.encoder) {
            (Some(enc), EncoderKind::TinyPatch) => enc.forward(tape, store, x)?,
            (None, EncoderKind::Precomputed) if input.semantic.rows() == 1 => x,
            _ => {
                return Err(VgaError::config(
                    "visual input does not match the configured encoder",
                ))
            }
        };
        let w = tape.param(store, self.w_rgb);
        let b = tape.param(store, self.b_rgb);
        let z = tape.affine(feat, w, b)?;
        Ok(tape.leaky_relu(z, LEAKY_SLOPE))
    }

    /// `Noise = LeakyReLU(W_n · enc(SRM(I)) + b_n)`, or zeros when the branch is disabled.
    pub fn encode_noise(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: &VisualInput,
    ) -> Result<Var> {
        let half = self.cfg.dim / 2;
        let (Some(enc), Some(w_n), Some(b_n)) = (&self.noise_encoder, self.w_n, self.b_n) else {
            return Ok(tape.constant(Tensor::zeros(&[1, half])));
        };
        let patches = input.noise_patches.as_ref().ok_or_else(|| {
            VgaError::config(
                "noise branch is enabled but no residual image was prepared; pass --no-noise",
            )
        })?;
        let x = tape.constant(patches.clone());
        let feat = enc.forward(tape, store, x)?;
        let w = tape.param(store, w_n);
        let b = tape.param(store, b_n);
        let z = tape.affine(feat, w, b)?;
        Ok(tape.leaky_relu(z, LEAKY_SLOPE))
    }

    /// Splits `1 × d` into `t` tokens of width `d/t`, self-attends and flattens back.
    pub fn self_attention(&self, tape: &mut Tape, store: &ParamStore, vis: Var) -> Result<Var> {
        visual_self_attention(tape, store, vis, &self.attention, self.cfg.tokens)
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: &VisualInput,
    ) -> Result<VisionOutput> {
        let rgb = self.encode_semantic(tape, store, input)?;
        let noise = self.encode_noise(tape, store, input)?;
        let vis = tape.concat_cols(rgb, noise)?;
        let vis_prime = self.self_attention(tape, store, vis)?;
        Ok(VisionOutput {
            rgb,
            noise,
            vis,
            vis_prime,
        })
    }
}

/// Multi-head self-attention over `vis` viewed as `tokens` rows; output has the input's shape.
pub fn visual_self_attention(
    tape: &mut Tape,
    store: &ParamStore,
    vis: Var,
    attention: &AttentionParams,
    tokens: usize,
) -> Result<Var> {
    let d = tape.value(vis).numel();
    if tokens == 0 || !d.is_multiple_of(tokens) {
        return Err(VgaError::config(format!(
            "width {d} is not divisible by {tokens} tokens"
        )));
    }
    let seq = tape.reshape(vis, &[tokens, d / tokens])?;
    let out = attention.forward(tape, store, seq, seq)?;
    tape.reshape(out, &[1, d])
}
