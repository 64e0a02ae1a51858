//! Visual branch: SRM noise residuals, semantic and tampering features, intra-modal attention.

mod branch;
mod srm;

pub use branch::{
    extract_patches, visual_self_attention, EncoderKind, TinyPatchEncoder, VisionBranch,
    VisionConfig, VisionOutput, VisualInput,
};
pub use srm::{srm_residual, SrmBank, SRM_STENCILS};
