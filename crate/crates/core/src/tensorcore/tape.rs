//! Wengert-list reverse-mode differentiation.
//!
//! Every op appends one node holding its forward value. [`Tape::backward`] walks the nodes in
//! reverse execution order and pushes vector-Jacobian products to the inputs; gradients that
//! reach a parameter leaf are added into the owning [`ParamStore`].

use std::collections::HashMap;

use super::tensor::{matmul_at_into, matmul_bt_into, matmul_into};
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Result, VgaError};

/// Norms below this make a cosine similarity degenerate.
pub const COSINE_NORM_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    ScaleBy(Var, Var),
    Affine { x: Var, mul: f64 },
    LeakyRelu(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    MeanRows(Var),
    BroadcastRow { x: Var, row: usize },
    Reshape(Var),
    Sum(Var),
    ClampLog { x: Var, eps: f64 },
    Cosine(Var, Var),
    Distance(Var, Var),
    Conv2dValid { image: Var, kernels: Tensor },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::MatMulBt(..) => "matmul_bt",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::ScaleBy(..) => "scale_by",
            Op::Affine { .. } => "affine_scalar",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::ConcatCols(_) => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::MeanRows(_) => "mean_rows",
            Op::BroadcastRow { .. } => "broadcast_row",
            Op::Reshape(_) => "reshape",
            Op::Sum(_) => "sum",
            Op::ClampLog { .. } => "clamp_log",
            Op::Cosine(..) => "cosine",
            Op::Distance(..) => "distance",
            Op::Conv2dValid { .. } => "conv2d_valid",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// What a backward pass touched, in visiting order.
#[derive(Debug, Clone, Default)]
pub struct BackwardReport {
    pub visited: Vec<usize>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize)> {
        self.nodes[v.0].value.dims2()
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Leaf for a trainable parameter. Repeated requests return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id), true);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (k2, n) = self.dims2(b)?;
        if k != k2 {
            return Err(VgaError::dim(format!(
                "matmul of {:?} by {:?}: inner extents differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ` without materialising the transpose.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (n, k2) = self.dims2(b)?;
        if k != k2 {
            return Err(VgaError::dim(format!(
                "matmul of {:?} by transpose of {:?}: inner extents differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = vec![0.0; m * n];
        matmul_bt_into(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMulBt(a, b), rg))
    }

    /// `x·w + b` with `b` broadcast over the rows of the product.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).transpose()?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Transpose(a), rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(VgaError::dim(format!(
                "{what} of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, op.name())?;
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims2(a)?;
        if self.value(bias).numel() != n {
            return Err(VgaError::dim(format!(
                "bias of shape {:?} cannot broadcast over rows of {:?}",
                self.shape(bias),
                self.shape(a)
            )));
        }
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(a).clone();
        for r in 0..m {
            for (o, bv) in out.data_mut()[r * n..(r + 1) * n].iter_mut().zip(&b) {
                *o += bv;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(a, bias), rg))
    }

    /// Multiplies every element of `a` by the single value held in `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).numel() != 1 {
            return Err(VgaError::dim(format!(
                "scale factor must hold one value, got shape {:?}",
                self.shape(s)
            )));
        }
        let k = self.value(s).item();
        let out = self.map(a, |x| x * k);
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(out, Op::ScaleBy(a, s), rg))
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let va = self.value(a);
        Tensor::new(
            va.shape().to_vec(),
            va.data().iter().map(|&x| f(x)).collect(),
        )
        .expect("map preserves shape")
    }

    /// `x·mul + add`, elementwise with constant coefficients.
    pub fn affine_scalar(&mut self, x: Var, mul: f64, add: f64) -> Var {
        let out = self.map(x, |v| v * mul + add);
        let rg = self.rg(x);
        self.push(out, Op::Affine { x, mul }, rg)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.affine_scalar(x, k, 0.0)
    }

    /// `max(x, slope·x)`; the derivative at exactly 0 is taken from the positive branch.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.map(x, |v| if v >= 0.0 { v } else { slope * v });
        let rg = self.rg(x);
        self.push(out, Op::LeakyRelu(x, slope), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.map(x, |v| v.max(0.0));
        let rg = self.rg(x);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.map(x, stable_sigmoid);
        let rg = self.rg(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.dims2(x)?;
        let mut out = self.value(x).clone();
        for r in 0..m {
            softmax_in_place(&mut out.data_mut()[r * n..(r + 1) * n]);
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::SoftmaxRows(x), rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        self.concat_cols_many(&[a, b])
    }

    pub fn concat_cols_many(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| VgaError::EmptyInput("concat of zero tensors".into()))?;
        let (m, _) = self.dims2(first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.dims2(p)?;
            if pm != m {
                return Err(VgaError::dim(format!(
                    "concat_cols of {:?} and {:?}: row counts differ",
                    self.shape(first),
                    self.shape(p)
                )));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(vec![m, total], out)?,
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.dims2(x)?;
        if start >= end || end > n {
            return Err(VgaError::dim(format!(
                "column range {start}..{end} out of bounds for {:?}",
                self.shape(x)
            )));
        }
        let v = self.value(x);
        let mut out = Vec::with_capacity(m * (end - start));
        for r in 0..m {
            out.extend_from_slice(&v.row_slice(r)[start..end]);
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(vec![m, end - start], out)?,
            Op::SliceCols { x, start },
            rg,
        ))
    }

    /// Column-wise mean of an `m×n` matrix, returned with shape `[n]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.rank() != 2 {
            return Err(VgaError::dim(format!(
                "mean_rows expects a matrix, got {:?}",
                v.shape()
            )));
        }
        let (m, n) = v.dims2()?;
        let mut out = vec![0.0; n];
        for r in 0..m {
            for (o, x) in out.iter_mut().zip(v.row_slice(r)) {
                *o += x;
            }
        }
        let inv = 1.0 / m as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        let rg = self.rg(x);
        Ok(self.push(Tensor::vector(out), Op::MeanRows(x), rg))
    }

    /// `count` copies of row `row` stacked into a matrix.
    pub fn broadcast_row(&mut self, x: Var, row: usize, count: usize) -> Result<Var> {
        let (m, n) = self.dims2(x)?;
        if row >= m || count == 0 {
            return Err(VgaError::dim(format!(
                "cannot broadcast row {row} of {:?} {count} times",
                self.shape(x)
            )));
        }
        let src = self.value(x).row_slice(row).to_vec();
        let data = src.iter().copied().cycle().take(count * n).collect();
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(vec![count, n], data)?,
            Op::BroadcastRow { x, row },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Sum of all elements as a 1×1 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// `ln(clamp(x, eps, 1-eps))`, elementwise. The clamp keeps cross-entropy terms finite.
    pub fn clamp_log(&mut self, x: Var, eps: f64) -> Var {
        let out = self.map(x, |v| v.clamp(eps, 1.0 - eps).ln());
        let rg = self.rg(x);
        self.push(out, Op::ClampLog { x, eps }, rg)
    }

    /// Cosine similarity of two equally sized tensors as a 1×1 tensor.
    ///
    /// When either norm is below [`COSINE_NORM_FLOOR`] the similarity is defined as 0 with zero
    /// gradient, and a warning is logged.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).numel() != self.value(b).numel() {
            return Err(VgaError::dim(format!(
                "cosine of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let c = cosine_parts(self.value(a).data(), self.value(b).data())
            .map(|p| p.cos)
            .unwrap_or_else(|| {
                log::warn!("degenerate cosine similarity: zero-norm input, using 0");
                0.0
            });
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(c), Op::Cosine(a, b), rg))
    }

    /// Euclidean distance `‖a − b‖` as a 1×1 tensor; the subgradient at 0 is 0.
    pub fn distance(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).numel() != self.value(b).numel() {
            return Err(VgaError::dim(format!(
                "distance of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let d = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(d), Op::Distance(a, b), rg))
    }

    /// Valid cross-correlation of an `H×W×C` image with constant `K×kh×kw×C` kernels.
    ///
    /// `out[y][x][k] = Σ_{i,j,c} image[y+i][x+j][c] · kernels[k][i][j][c]`, so an impulse image
    /// reproduces each kernel reflected about its centre. Gradients flow to the image only.
    pub fn conv2d_valid(&mut self, image: Var, kernels: &Tensor) -> Result<Var> {
        let out = conv2d_valid_forward(self.value(image), kernels)?;
        let rg = self.rg(image);
        Ok(self.push(
            out,
            Op::Conv2dValid {
                image,
                kernels: kernels.clone(),
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar `loss`, adding parameter gradients into `store`.
    ///
    /// Gradients accumulate: calling this twice without [`ParamStore::zero_grads`] doubles them.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<BackwardReport> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(VgaError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        let mut report = BackwardReport::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            report.visited.push(i);
            let g = g.data();
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let p = store.get_mut(*id);
                    for (acc, v) in p.grad.data_mut().iter_mut().zip(g) {
                        *acc += v;
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.value(*a).dims2()?;
                    let n = self.value(*b).cols();
                    if self.rg(*a) {
                        let bv = self.value(*b).data();
                        self.acc(&mut grads, *a, |da| matmul_bt_into(g, bv, da, m, n, k));
                    }
                    if self.rg(*b) {
                        let av = self.value(*a).data();
                        self.acc(&mut grads, *b, |db| matmul_at_into(av, g, db, k, m, n));
                    }
                }
                Op::MatMulBt(a, b) => {
                    let (m, k) = self.value(*a).dims2()?;
                    let n = self.value(*b).rows();
                    if self.rg(*a) {
                        let bv = self.value(*b).data();
                        self.acc(&mut grads, *a, |da| matmul_into(g, bv, da, m, n, k));
                    }
                    if self.rg(*b) {
                        let av = self.value(*a).data();
                        self.acc(&mut grads, *b, |db| matmul_at_into(g, av, db, n, m, k));
                    }
                }
                Op::Transpose(a) => {
                    let (m, n) = self.value(*a).dims2()?;
                    self.acc(&mut grads, *a, |da| {
                        for r in 0..m {
                            for c in 0..n {
                                da[r * n + c] += g[c * m + r];
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    self.acc(&mut grads, *a, |da| add_into(da, g));
                    self.acc(&mut grads, *b, |db| add_into(db, g));
                }
                Op::Sub(a, b) => {
                    self.acc(&mut grads, *a, |da| add_into(da, g));
                    self.acc(&mut grads, *b, |db| {
                        db.iter_mut().zip(g).for_each(|(d, v)| *d -= v)
                    });
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    self.acc(&mut grads, *a, |da| {
                        for ((d, gv), y) in da.iter_mut().zip(g).zip(bv) {
                            *d += gv * y;
                        }
                    });
                    self.acc(&mut grads, *b, |db| {
                        for ((d, gv), x) in db.iter_mut().zip(g).zip(av) {
                            *d += gv * x;
                        }
                    });
                }
                Op::AddRow(a, bias) => {
                    let n = self.value(*a).cols();
                    self.acc(&mut grads, *a, |da| add_into(da, g));
                    self.acc(&mut grads, *bias, |db| {
                        for row in g.chunks(n) {
                            add_into(db, row);
                        }
                    });
                }
                Op::ScaleBy(a, s) => {
                    let k = self.value(*s).item();
                    let av = self.value(*a).data();
                    self.acc(&mut grads, *a, |da| {
                        da.iter_mut().zip(g).for_each(|(d, v)| *d += v * k)
                    });
                    self.acc(&mut grads, *s, |ds| {
                        ds[0] += g.iter().zip(av).map(|(v, x)| v * x).sum::<f64>()
                    });
                }
                Op::Affine { x, mul } => {
                    self.acc(&mut grads, *x, |dx| {
                        dx.iter_mut().zip(g).for_each(|(d, v)| *d += v * mul)
                    });
                }
                Op::LeakyRelu(x, slope) => {
                    let xv = self.value(*x).data();
                    self.acc(&mut grads, *x, |dx| {
                        for ((d, v), xi) in dx.iter_mut().zip(g).zip(xv) {
                            *d += if *xi >= 0.0 { *v } else { slope * v };
                        }
                    });
                }
                Op::Relu(x) => {
                    let xv = self.value(*x).data();
                    self.acc(&mut grads, *x, |dx| {
                        for ((d, v), xi) in dx.iter_mut().zip(g).zip(xv) {
                            if *xi >= 0.0 {
                                *d += v;
                            }
                        }
                    });
                }
                Op::Sigmoid(x) => {
                    let y = node.value.data();
                    self.acc(&mut grads, *x, |dx| {
                        for ((d, v), s) in dx.iter_mut().zip(g).zip(y) {
                            *d += v * s * (1.0 - s);
                        }
                    });
                }
                Op::SoftmaxRows(x) => {
                    let (_, n) = node.value.dims2()?;
                    let y = node.value.data();
                    self.acc(&mut grads, *x, |dx| {
                        for ((drow, grow), yrow) in
                            dx.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n))
                        {
                            let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                            for ((d, gv), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                                *d += yv * (gv - dot);
                            }
                        }
                    });
                }
                Op::ConcatCols(parts) => {
                    let total = node.value.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        self.acc(&mut grads, p, |dp| {
                            for (r, drow) in dp.chunks_mut(w).enumerate() {
                                add_into(drow, &g[r * total + offset..r * total + offset + w]);
                            }
                        });
                        offset += w;
                    }
                }
                Op::SliceCols { x, start } => {
                    let n = self.value(*x).cols();
                    let w = node.value.cols();
                    self.acc(&mut grads, *x, |dx| {
                        for (r, grow) in g.chunks(w).enumerate() {
                            add_into(&mut dx[r * n + start..r * n + start + w], grow);
                        }
                    });
                }
                Op::MeanRows(x) => {
                    let (m, n) = self.value(*x).dims2()?;
                    let inv = 1.0 / m as f64;
                    self.acc(&mut grads, *x, |dx| {
                        for drow in dx.chunks_mut(n) {
                            drow.iter_mut().zip(g).for_each(|(d, v)| *d += v * inv);
                        }
                    });
                }
                Op::BroadcastRow { x, row } => {
                    let n = self.value(*x).cols();
                    self.acc(&mut grads, *x, |dx| {
                        for grow in g.chunks(n) {
                            add_into(&mut dx[row * n..(row + 1) * n], grow);
                        }
                    });
                }
                Op::Reshape(x) => self.acc(&mut grads, *x, |dx| add_into(dx, g)),
                Op::Sum(x) => {
                    let s = g[0];
                    self.acc(&mut grads, *x, |dx| dx.iter_mut().for_each(|d| *d += s));
                }
                Op::ClampLog { x, eps } => {
                    let xv = self.value(*x).data();
                    self.acc(&mut grads, *x, |dx| {
                        for ((d, v), xi) in dx.iter_mut().zip(g).zip(xv) {
                            if *xi > *eps && *xi < 1.0 - eps {
                                *d += v / xi;
                            }
                        }
                    });
                }
                Op::Cosine(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    if let Some(p) = cosine_parts(av, bv) {
                        let s = g[0];
                        let inv = 1.0 / (p.norm_a * p.norm_b);
                        let ca = p.cos / (p.norm_a * p.norm_a);
                        let cb = p.cos / (p.norm_b * p.norm_b);
                        self.acc(&mut grads, *a, |da| {
                            for ((d, x), y) in da.iter_mut().zip(av).zip(bv) {
                                *d += s * (y * inv - ca * x);
                            }
                        });
                        self.acc(&mut grads, *b, |db| {
                            for ((d, x), y) in db.iter_mut().zip(av).zip(bv) {
                                *d += s * (x * inv - cb * y);
                            }
                        });
                    }
                }
                Op::Distance(a, b) => {
                    let dist = node.value.item();
                    if dist > 0.0 {
                        let s = g[0] / dist;
                        let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                        self.acc(&mut grads, *a, |da| {
                            for ((d, x), y) in da.iter_mut().zip(av).zip(bv) {
                                *d += s * (x - y);
                            }
                        });
                        self.acc(&mut grads, *b, |db| {
                            for ((d, x), y) in db.iter_mut().zip(av).zip(bv) {
                                *d -= s * (x - y);
                            }
                        });
                    }
                }
                Op::Conv2dValid { image, kernels } => {
                    let img_shape = self.value(*image).shape().to_vec();
                    let out_shape = node.value.shape().to_vec();
                    self.acc(&mut grads, *image, |di| {
                        conv2d_valid_backward(di, &img_shape, kernels, g, &out_shape)
                    });
                }
            }
        }
        Ok(report)
    }

    /// Adds into the gradient slot of `v`, allocating it on first use. No-op for constants.
    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.rg(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(self.shape(v)));
        f(slot.data_mut());
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

struct CosineParts {
    cos: f64,
    norm_a: f64,
    norm_b: f64,
}

fn cosine_parts(a: &[f64], b: &[f64]) -> Option<CosineParts> {
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a < COSINE_NORM_FLOOR || norm_b < COSINE_NORM_FLOOR {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some(CosineParts {
        cos: (dot / (norm_a * norm_b)).clamp(-1.0, 1.0),
        norm_a,
        norm_b,
    })
}

fn conv_dims(
    image: &[usize],
    kernels: &[usize],
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (&[h, w, c], &[k, kh, kw, kc]) = (image, kernels) else {
        return Err(VgaError::dim(format!(
            "conv2d_valid expects an H×W×C image and K×kh×kw×C kernels, got {image:?} and {kernels:?}"
        )));
    };
    if kc != c {
        return Err(VgaError::dim(format!(
            "image has {c} channels but kernels expect {kc}"
        )));
    }
    if h < kh || w < kw {
        return Err(VgaError::dim(format!(
            "image {h}×{w} is smaller than the {kh}×{kw} kernel"
        )));
    }
    Ok((h, w, c, k, kh, kw))
}

/// Forward valid cross-correlation on plain tensors.
pub fn conv2d_valid_forward(image: &Tensor, kernels: &Tensor) -> Result<Tensor> {
    let (h, w, c, k, kh, kw) = conv_dims(image.shape(), kernels.shape())?;
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let img = image.data();
    let ker = kernels.data();
    let mut out = vec![0.0; oh * ow * k];
    for y in 0..oh {
        for x in 0..ow {
            for kk in 0..k {
                let mut acc = 0.0;
                for i in 0..kh {
                    for j in 0..kw {
                        let ib = ((y + i) * w + (x + j)) * c;
                        let kb = ((kk * kh + i) * kw + j) * c;
                        for ch in 0..c {
                            acc += img[ib + ch] * ker[kb + ch];
                        }
                    }
                }
                out[(y * ow + x) * k + kk] = acc;
            }
        }
    }
    Tensor::new(vec![oh, ow, k], out)
}

fn conv2d_valid_backward(
    di: &mut [f64],
    img_shape: &[usize],
    kernels: &Tensor,
    g: &[f64],
    out_shape: &[usize],
) {
    let (w, c) = (img_shape[1], img_shape[2]);
    let (k, kh, kw) = (kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]);
    let (oh, ow) = (out_shape[0], out_shape[1]);
    let ker = kernels.data();
    for y in 0..oh {
        for x in 0..ow {
            for kk in 0..k {
                let gv = g[(y * ow + x) * k + kk];
                if gv == 0.0 {
                    continue;
                }
                for i in 0..kh {
                    for j in 0..kw {
                        let ib = ((y + i) * w + (x + j)) * c;
                        let kb = ((kk * kh + i) * kw + j) * c;
                        for ch in 0..c {
                            di[ib + ch] += gv * ker[kb + ch];
                        }
                    }
                }
            }
        }
    }
}
