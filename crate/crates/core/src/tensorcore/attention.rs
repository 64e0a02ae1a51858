use super::{ParamId, ParamStore, Tape, Var};
use crate::error::{Result, VgaError};

/// Query/key/value/output projections for one attention block of model width `width`.
///
/// The per-head matrices `W^Q_j, W^K_j, W^V_j` (each `width × width/heads`) are stored side by side
/// as the column blocks of one `width × width` matrix; head `j` owns columns
/// `j·width/heads .. (j+1)·width/heads`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub width: usize,
    pub heads: usize,
}

impl AttentionParams {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        width: usize,
        heads: usize,
        seed: u64,
    ) -> Result<Self> {
        check_heads(width, heads)?;
        Ok(AttentionParams {
            wq: store.add_glorot(format!("{prefix}.w_q"), width, width, seed)?,
            wk: store.add_glorot(format!("{prefix}.w_k"), width, width, seed)?,
            wv: store.add_glorot(format!("{prefix}.w_v"), width, width, seed)?,
            wo: store.add_glorot(format!("{prefix}.w_o"), width, width, seed)?,
            width,
            heads,
        })
    }

    pub fn vars(&self, tape: &mut Tape, store: &ParamStore) -> AttentionVars {
        AttentionVars {
            wq: tape.param(store, self.wq),
            wk: tape.param(store, self.wk),
            wv: tape.param(store, self.wv),
            wo: tape.param(store, self.wo),
        }
    }

    /// Attention of `q_in` over `kv_in`; self-attention when both are the same node.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        q_in: Var,
        kv_in: Var,
    ) -> Result<Var> {
        let vars = self.vars(tape, store);
        multi_head_attention(tape, q_in, kv_in, &vars, self.heads)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
}

pub fn check_heads(width: usize, heads: usize) -> Result<()> {
    if heads == 0 || width == 0 || !width.is_multiple_of(heads) {
        return Err(VgaError::config(format!(
            "attention width {width} is not divisible by {heads} heads"
        )));
    }
    Ok(())
}

/// Scaled dot-product multi-head attention.
///
/// `q_in` is `a × width`, `kv_in` is `b × width`; each head computes
/// `softmax(Q_j K_jᵀ / √(width/heads)) V_j`, the heads are concatenated and projected by `W^O`.
pub fn multi_head_attention(
    tape: &mut Tape,
    q_in: Var,
    kv_in: Var,
    w: &AttentionVars,
    heads: usize,
) -> Result<Var> {
    let (_, width) = tape.value(q_in).dims2()?;
    let (_, kv_width) = tape.value(kv_in).dims2()?;
    if kv_width != width {
        return Err(VgaError::dim(format!(
            "query width {width} differs from key/value width {kv_width}"
        )));
    }
    check_heads(width, heads)?;
    let head_dim = width / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let q = tape.matmul(q_in, w.wq)?;
    let k = tape.matmul(kv_in, w.wk)?;
    let v = tape.matmul(kv_in, w.wv)?;

    let mut outs = Vec::with_capacity(heads);
    for j in 0..heads {
        let (lo, hi) = (j * head_dim, (j + 1) * head_dim);
        let (qj, kj, vj) = if heads == 1 {
            (q, k, v)
        } else {
            (
                tape.slice_cols(q, lo, hi)?,
                tape.slice_cols(k, lo, hi)?,
                tape.slice_cols(v, lo, hi)?,
            )
        };
        let scores = tape.matmul_bt(qj, kj)?;
        let scores = tape.scale(scores, scale);
        let weights = tape.softmax_rows(scores)?;
        outs.push(tape.matmul(weights, vj)?);
    }
    let heads_cat = if heads == 1 {
        outs[0]
    } else {
        tape.concat_cols_many(&outs)?
    };
    tape.matmul(heads_cat, w.wo)
}
