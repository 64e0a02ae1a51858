use rand::Rng;

use super::config::ModelConfig;
use crate::datamodel::{Claim, Dataset, PropagationGraph};
use crate::error::{Result, VgaError};
use crate::fusion::{
    classification_loss, joint_loss, similarity_loss, FusionLayer, ProjectionHead, SimMode,
};
use crate::graphnet::{augment_nodes, GraphBranch};
use crate::tensorcore::{ParamStore, Tape, Var};
use crate::vision::{SrmBank, VisionBranch, VisualInput};

/// A claim reduced to the constant tensors the model consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedClaim {
    pub id: String,
    pub label: u8,
    pub a_hat: crate::Tensor,
    /// Node features with the OCR-supplemented root (unless disabled).
    pub features: crate::Tensor,
    pub visual: VisualInput,
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub graph_prime: Var,
    pub vis_prime: Var,
    pub z_g: Option<Var>,
    pub z_v: Option<Var>,
    pub probs: Var,
    /// Probability of class 1, `1 × 1`.
    pub y_hat: Var,
    pub l_cls: Var,
    pub l_sim: Var,
    pub loss: Var,
}

/// The full vision–graph model with its parameters.
#[derive(Debug, Clone)]
pub struct VgaModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub vision: VisionBranch,
    pub graph: GraphBranch,
    /// Graph and vision projection heads; absent when similarity is off.
    pub heads: Option<(ProjectionHead, ProjectionHead)>,
    pub fusion: FusionLayer,
    srm: SrmBank,
}

impl VgaModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let mut store = ParamStore::new();
        let vision = VisionBranch::new(&mut store, config.vision_config(), seed)?;
        let graph = GraphBranch::new(&mut store, config.graph_config(), seed)?;
        let heads = if config.effective_sim_mode() == SimMode::Off {
            None
        } else {
            let dp = config.projection_dim();
            Some((
                ProjectionHead::new(&mut store, "sim.graph_head", config.dim, dp, seed)?,
                ProjectionHead::new(&mut store, "sim.vision_head", config.dim, dp, seed)?,
            ))
        };
        let fusion = FusionLayer::new(&mut store, config.fusion_config(), seed)?;
        Ok(VgaModel {
            config,
            store,
            vision,
            graph,
            heads,
            fusion,
            srm: SrmBank::new(),
        })
    }

    pub fn prepare(&self, claim: &Claim) -> Result<PreparedClaim> {
        if claim.embedding_dim() != self.config.input_dim {
            return Err(VgaError::dim(format!(
                "claim '{}' has embedding width {}, model expects {}",
                claim.id,
                claim.embedding_dim(),
                self.config.input_dim
            )));
        }
        let g = PropagationGraph::from_claim(claim, !self.config.no_ocr)?;
        let visual = VisualInput::prepare(
            &self.vision.cfg,
            &self.srm,
            &claim.id,
            claim.image.as_ref(),
            claim.visual_embedding.as_ref(),
        )?;
        Ok(PreparedClaim {
            id: claim.id.clone(),
            label: claim.label,
            a_hat: g.a_hat,
            features: g.node_features,
            visual,
        })
    }

    pub fn prepare_all(&self, ds: &Dataset) -> Result<Vec<PreparedClaim>> {
        ds.claims.iter().map(|c| self.prepare(c)).collect()
    }

    /// One claim through both branches, fusion, classifier and the joint loss.
    ///
    /// `augment` supplies the randomness for node augmentation; `None` means evaluation mode.
    pub fn forward<R: Rng>(
        &self,
        tape: &mut Tape,
        claim: &PreparedClaim,
        augment: Option<&mut R>,
    ) -> Result<ForwardOutput> {
        self.forward_with(&self.store, tape, claim, augment)
    }

    /// [`Self::forward`] reading parameter values from `store` instead of the model's own.
    pub fn forward_with<R: Rng>(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        claim: &PreparedClaim,
        augment: Option<&mut R>,
    ) -> Result<ForwardOutput> {
        let features = match augment {
            Some(rng) => augment_nodes(&claim.features, self.config.effective_p_aug(), true, rng),
            None => claim.features.clone(),
        };
        let a_hat = tape.constant(claim.a_hat.clone());
        let x = tape.constant(features);
        let graph = self.graph.forward(tape, store, a_hat, x)?;
        let vision = self.vision.forward(tape, store, &claim.visual)?;

        let (z_g, z_v, l_sim) = match &self.heads {
            Some((hg, hv)) => {
                let z_g = hg.project(tape, store, graph.graph_prime)?;
                let z_v = hv.project(tape, store, vision.vis_prime)?;
                let l = similarity_loss(
                    tape,
                    z_g,
                    z_v,
                    claim.label,
                    self.config.effective_sim_mode(),
                )?;
                (Some(z_g), Some(z_v), l)
            }
            None => {
                let zero = tape.constant(crate::Tensor::scalar(0.0));
                (None, None, zero)
            }
        };
        let fused = self
            .fusion
            .fuse(tape, store, graph.graph_prime, vision.vis_prime)?;
        let (probs, y_hat) = self.fusion.classify(tape, store, fused)?;
        let l_cls = classification_loss(tape, y_hat, claim.label);
        let loss = joint_loss(tape, l_cls, l_sim, self.config.alpha)?;
        Ok(ForwardOutput {
            graph_prime: graph.graph_prime,
            vis_prime: vision.vis_prime,
            z_g,
            z_v,
            probs,
            y_hat,
            l_cls,
            l_sim,
            loss,
        })
    }

    /// `(ŷ, loss)` in evaluation mode.
    pub fn evaluate_claim(&self, claim: &PreparedClaim) -> Result<(f64, f64)> {
        let mut tape = Tape::new();
        let out = self.forward::<rand_chacha::ChaCha8Rng>(&mut tape, claim, None)?;
        Ok((tape.value(out.y_hat).item(), tape.value(out.loss).item()))
    }

    pub fn predict_proba(&self, claim: &PreparedClaim) -> Result<f64> {
        self.evaluate_claim(claim).map(|(p, _)| p)
    }
}

/// Class decision for a false-rumor probability: 1 iff `ŷ > 0.5`.
pub fn decide(y_hat: f64) -> u8 {
    u8::from(y_hat > 0.5)
}
