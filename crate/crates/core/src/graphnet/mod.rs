//! Graph branch: node augmentation, GCN, root enhancement and mutual co-attention, readout.

use rand::Rng;

use crate::error::{Result, VgaError};
use crate::tensorcore::{
    check_heads, AttentionParams, ParamId, ParamStore, Tape, Tensor, Var, LEAKY_SLOPE,
};

/// Zero whole rows of `features` with probability `p` each (training only; no rescaling).
pub fn augment_nodes(features: &Tensor, p: f64, training: bool, rng: &mut impl Rng) -> Tensor {
    if !training || p <= 0.0 {
        return features.clone();
    }
    let mut out = features.clone();
    let cols = features.cols();
    for r in 0..features.rows() {
        if rng.random_bool(p.min(1.0)) {
            out.data_mut()[r * cols..(r + 1) * cols].fill(0.0);
        }
    }
    out
}

/// `LeakyReLU(Â · X · W)`.
pub fn gcn_layer(tape: &mut Tape, a_hat: Var, features: Var, w: Var) -> Result<Var> {
    let ax = tape.matmul(a_hat, features)?;
    let z = tape.matmul(ax, w)?;
    Ok(tape.leaky_relu(z, LEAKY_SLOPE))
}

/// `R`: every row is `H[0]`.
pub fn root_broadcast(tape: &mut Tape, h: Var) -> Result<Var> {
    let n = tape.value(h).rows();
    tape.broadcast_row(h, 0, n)
}

/// `(R_enh, H_enh)`: attention with queries from `H` over `R`, and queries from `R` over `H`.
pub fn mutual_coattention(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    r: Var,
    rh: &AttentionParams,
    hr: &AttentionParams,
) -> Result<(Var, Var)> {
    let r_enh = rh.forward(tape, store, h, r)?;
    let h_enh = hr.forward(tape, store, r, h)?;
    Ok((r_enh, h_enh))
}

/// `mean_rows(concat(R_enh, H_enh))` as `1 × d`.
pub fn graph_readout(tape: &mut Tape, r_enh: Var, h_enh: Var) -> Result<(Var, Var)> {
    let graph = tape.concat_cols(r_enh, h_enh)?;
    let d = tape.value(graph).cols();
    let m = tape.mean_rows(graph)?;
    Ok((graph, tape.reshape(m, &[1, d])?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphConfig {
    /// Input width `D`.
    pub input_dim: usize,
    /// Model width `d`; node features have width `d/2`.
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    /// Root enhancement; off reproduces the "w/o RE" ablation.
    pub root_enhancement: bool,
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(VgaError::config("input width must be positive"));
        }
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return Err(VgaError::config(format!(
                "model width {} must be even",
                self.dim
            )));
        }
        if self.layers == 0 {
            return Err(VgaError::config("at least one GCN layer is required"));
        }
        check_heads(self.dim / 2, self.heads)
    }
}

#[derive(Debug, Clone)]
pub struct GraphBranch {
    pub cfg: GraphConfig,
    /// `W_gcl` of each layer; the first is `D × d/2`, the rest `d/2 × d/2`.
    pub gcn: Vec<ParamId>,
    /// Queries from `H`, keys/values from `R`.
    pub rh: Option<AttentionParams>,
    /// Queries from `R`, keys/values from `H`.
    pub hr: Option<AttentionParams>,
}

#[derive(Debug, Clone, Copy)]
pub struct GraphOutput {
    pub h: Var,
    pub r_enh: Var,
    pub h_enh: Var,
    pub graph: Var,
    pub graph_prime: Var,
}

impl GraphBranch {
    pub fn new(store: &mut ParamStore, cfg: GraphConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let half = cfg.dim / 2;
        let mut gcn = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let fan_in = if l == 0 { cfg.input_dim } else { half };
            gcn.push(store.add_glorot(format!("graph.gcn{l}.w"), fan_in, half, seed)?);
        }
        let (rh, hr) = if cfg.root_enhancement {
            (
                Some(AttentionParams::new(
                    store,
                    "graph.coattn_rh",
                    half,
                    cfg.heads,
                    seed,
                )?),
                Some(AttentionParams::new(
                    store,
                    "graph.coattn_hr",
                    half,
                    cfg.heads,
                    seed,
                )?),
            )
        } else {
            (None, None)
        };
        Ok(GraphBranch { cfg, gcn, rh, hr })
    }

    /// `a_hat` is `(n+1)²`, `features` `(n+1) × D` (already augmented if training).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        a_hat: Var,
        features: Var,
    ) -> Result<GraphOutput> {
        let mut h = features;
        for &w in &self.gcn {
            let w = tape.param(store, w);
            h = gcn_layer(tape, a_hat, h, w)?;
        }
        let (r_enh, h_enh) = match (&self.rh, &self.hr) {
            (Some(rh), Some(hr)) => {
                let r = root_broadcast(tape, h)?;
                mutual_coattention(tape, store, h, r, rh, hr)?
            }
            _ => (h, h),
        };
        let (graph, graph_prime) = graph_readout(tape, r_enh, h_enh)?;
        Ok(GraphOutput {
            h,
            r_enh,
            h_enh,
            graph,
            graph_prime,
        })
    }
}
