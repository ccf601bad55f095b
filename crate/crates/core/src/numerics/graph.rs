//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Values are computed eagerly as ops are appended; `backward` walks the
//! tape in reverse and accumulates gradients into every reachable parameter.
//! Reduction orders are fixed, so identical graphs produce identical floats.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::params::ModelParams;
use super::tensor::Tensor;
use super::{NumericsError, Result};
use crate::fmath;
use crate::fmath::{sigmoid, softplus};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(String),
    MatMul(NodeId, NodeId),
    /// `a @ b^T`.
    MatMulTB(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Broadcast-add a 1xC row to every row of an RxC matrix.
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Softplus(NodeId),
    Abs(NodeId),
    RowSoftmax(NodeId),
    /// Per-column max over rows: RxC -> 1xC.
    RowMaxPool(NodeId),
    /// Per-row sum: RxC -> Rx1.
    RowSum(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    /// Tile a 1xC row R times: 1xC -> RxC.
    RepeatRow(NodeId),
    /// Sum of squares: RxC -> 1x1.
    L2Sq(NodeId),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients keyed by parameter name. Parameters the loss does not reach
/// have no entry.
pub type Grads = BTreeMap<String, Tensor>;

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant input; rejected if non-finite.
    pub fn input(&mut self, value: Tensor) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite { context: "graph input" });
        }
        Ok(self.push(Op::Input, value))
    }

    /// Trainable leaf; gradients are collected under `name`.
    pub fn param(&mut self, name: &str, value: Tensor) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite { context: "graph param" });
        }
        Ok(self.push(Op::Param(name.to_string()), value))
    }

    /// Binds a parameter from a [`ModelParams`] store by name.
    pub fn param_from(&mut self, store: &ModelParams, name: &str) -> Result<NodeId> {
        let value = store.get(name)?.clone();
        self.param(name, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    /// `a @ b^T`.
    pub fn matmul_tb(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_tb(self.value(b))?;
        Ok(self.push(Op::MatMulTB(a, b), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn add_row(&mut self, m: NodeId, row: NodeId) -> Result<NodeId> {
        let v = self.value(m).add_row(self.value(row))?;
        Ok(self.push(Op::AddRow(m, row), v))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).scale(c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(fmath::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), v)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(softplus);
        self.push(Op::Softplus(a), v)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(fmath::abs);
        self.push(Op::Abs(a), v)
    }

    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).row_softmax();
        self.push(Op::RowSoftmax(a), v)
    }

    pub fn row_maxpool(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).row_maxpool();
        self.push(Op::RowMaxPool(a), v)
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).row_sum();
        self.push(Op::RowSum(a), v)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum_all());
        self.push(Op::SumAll(a), v)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum_all() / t.len() as f64);
        self.push(Op::MeanAll(a), v)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let tensors: Vec<&Tensor> = parts.iter().map(|id| self.value(*id)).collect();
        let v = Tensor::concat_cols(&tensors)?;
        Ok(self.push(Op::ConcatCols(parts.to_vec()), v))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let tensors: Vec<&Tensor> = parts.iter().map(|id| self.value(*id)).collect();
        let v = Tensor::concat_rows(&tensors)?;
        Ok(self.push(Op::ConcatRows(parts.to_vec()), v))
    }

    pub fn repeat_row(&mut self, a: NodeId, times: usize) -> Result<NodeId> {
        let t = self.value(a);
        if t.rows() != 1 {
            return Err(NumericsError::ShapeMismatch {
                op: "repeat_row",
                left: t.shape(),
                right: (1, t.cols()),
            });
        }
        let mut v = Tensor::zeros(times, t.cols());
        for r in 0..times {
            v.row_slice_mut(r).copy_from_slice(t.row_slice(0));
        }
        Ok(self.push(Op::RepeatRow(a), v))
    }

    pub fn l2_sq(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).l2_sq());
        self.push(Op::L2Sq(a), v)
    }

    /// Reverse pass from a 1x1 loss node. Returns per-parameter gradients.
    pub fn backward(&mut self, loss: NodeId) -> Result<Grads> {
        let loss_t = self.value(loss);
        if loss_t.shape() != (1, 1) {
            return Err(NumericsError::ShapeMismatch {
                op: "backward",
                left: loss_t.shape(),
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            // Re-insert so params keep their gradient for collection below.
            let keep = matches!(self.nodes[i].op, Op::Param(_));
            if keep {
                grads[i] = Some(g.clone());
            }
            match self.nodes[i].op.clone() {
                Op::Input | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_tb(self.value(b))?;
                    let gb = matmul_ta(self.value(a), &g);
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::MatMulTB(a, b) => {
                    let ga = g.matmul(self.value(b))?;
                    let gb = matmul_ta(&g, self.value(a));
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    let ga = g.mul(self.value(b))?;
                    let gb = g.mul(self.value(a))?;
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::AddRow(m, r) => {
                    accumulate(&mut grads, m, g.clone());
                    accumulate(&mut grads, r, col_sums(&g));
                }
                Op::Scale(a, c) => accumulate(&mut grads, a, g.scale(c)),
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    let gx = elementwise(&g, y, |gv, yv| gv * yv * (1.0 - yv));
                    accumulate(&mut grads, a, gx);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    let gx = elementwise(&g, y, |gv, yv| gv * (1.0 - yv * yv));
                    accumulate(&mut grads, a, gx);
                }
                Op::Relu(a) => {
                    let x = self.value(a);
                    let gx = elementwise(&g, x, |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                    accumulate(&mut grads, a, gx);
                }
                Op::Softplus(a) => {
                    let x = self.value(a);
                    let gx = elementwise(&g, x, |gv, xv| gv * sigmoid(xv));
                    accumulate(&mut grads, a, gx);
                }
                Op::Abs(a) => {
                    let x = self.value(a);
                    let gx = elementwise(&g, x, |gv, xv| {
                        if xv > 0.0 {
                            gv
                        } else if xv < 0.0 {
                            -gv
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, a, gx);
                }
                Op::RowSoftmax(a) => {
                    let y = &self.nodes[i].value;
                    let mut gx = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row_slice(r);
                        let gr = g.row_slice(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(yv, gv)| yv * gv).sum();
                        let out = gx.row_slice_mut(r);
                        for ((o, yv), gv) in out.iter_mut().zip(yr).zip(gr) {
                            *o = yv * (gv - dot);
                        }
                    }
                    accumulate(&mut grads, a, gx);
                }
                Op::RowMaxPool(a) => {
                    let x = self.value(a);
                    let mut gx = Tensor::zeros(x.rows(), x.cols());
                    // Ties route to the earliest row, matching the forward
                    // pass's strict-greater update.
                    for c in 0..x.cols() {
                        let mut best_r = 0;
                        let mut best_v = x.at(0, c);
                        for r in 1..x.rows() {
                            if x.at(r, c) > best_v {
                                best_v = x.at(r, c);
                                best_r = r;
                            }
                        }
                        gx.set(best_r, c, g.at(0, c));
                    }
                    accumulate(&mut grads, a, gx);
                }
                Op::RowSum(a) => {
                    let x = self.value(a);
                    let mut gx = Tensor::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let gv = g.at(r, 0);
                        for v in gx.row_slice_mut(r) {
                            *v = gv;
                        }
                    }
                    accumulate(&mut grads, a, gx);
                }
                Op::SumAll(a) => {
                    let x = self.value(a);
                    let mut gx = Tensor::zeros(x.rows(), x.cols());
                    gx.data_mut().fill(g.item());
                    accumulate(&mut grads, a, gx);
                }
                Op::MeanAll(a) => {
                    let x = self.value(a);
                    let mut gx = Tensor::zeros(x.rows(), x.cols());
                    gx.data_mut().fill(g.item() / x.len() as f64);
                    accumulate(&mut grads, a, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let pc = self.value(p).cols();
                        let rows = g.rows();
                        let mut gp = Tensor::zeros(rows, pc);
                        for r in 0..rows {
                            gp.row_slice_mut(r)
                                .copy_from_slice(&g.row_slice(r)[off..off + pc]);
                        }
                        off += pc;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let pr = self.value(p).rows();
                        let cols = g.cols();
                        let mut gp = Tensor::zeros(pr, cols);
                        for r in 0..pr {
                            gp.row_slice_mut(r).copy_from_slice(g.row_slice(off + r));
                        }
                        off += pr;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::RepeatRow(a) => accumulate(&mut grads, a, col_sums(&g)),
                Op::L2Sq(a) => {
                    let gx = self.value(a).scale(2.0 * g.item());
                    accumulate(&mut grads, a, gx);
                }
            }
        }

        let mut out = Grads::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(name) = &node.op {
                if let Some(g) = grads[i].take() {
                    match out.entry(name.clone()) {
                        alloc::collections::btree_map::Entry::Vacant(e) => {
                            e.insert(g);
                        }
                        alloc::collections::btree_map::Entry::Occupied(mut e) => {
                            // Same parameter bound at several nodes: sum.
                            let merged = e.get().add(&g)?;
                            *e.get_mut() = merged;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Binds each named parameter once per graph so gradients accumulate on a
/// single node.
#[derive(Default)]
pub struct ParamCache {
    bound: BTreeMap<String, NodeId>,
}

impl ParamCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(
        &mut self,
        g: &mut Graph,
        params: &ModelParams,
        name: &str,
    ) -> Result<NodeId> {
        if let Some(id) = self.bound.get(name) {
            return Ok(*id);
        }
        let id = g.param_from(params, name)?;
        self.bound.insert(name.to_string(), id);
        Ok(id)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => {
            debug_assert_eq!(existing.shape(), g.shape());
            for (o, v) in existing.data_mut().iter_mut().zip(g.data()) {
                *o += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn elementwise(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(g.shape(), other.shape());
    let mut out = g.clone();
    for (o, v) in out.data_mut().iter_mut().zip(other.data()) {
        *o = f(*o, *v);
    }
    out
}

/// `a^T @ g` without materializing the transpose.
fn matmul_ta(a: &Tensor, g: &Tensor) -> Tensor {
    debug_assert_eq!(a.rows(), g.rows());
    let (n, k, m) = (a.rows(), a.cols(), g.cols());
    let mut out = Tensor::zeros(k, m);
    for i in 0..n {
        let arow = a.row_slice(i);
        let grow = g.row_slice(i);
        for (kk, &av) in arow.iter().enumerate() {
            let orow = &mut out.data_mut()[kk * m..(kk + 1) * m];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

/// Column sums: RxC -> 1xC.
fn col_sums(g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(g.row_slice(r)) {
            *o += v;
        }
    }
    out
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d_x_squared_is_2x() {
        let mut g = Graph::new();
        let x = g.param("x", Tensor::scalar(3.0)).unwrap();
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads["x"].item(), 6.0);
    }

    #[test]
    fn matmul_gradients() {
        // loss = sum(A @ B); dA = ones @ B^T, dB = A^T @ ones.
        let mut g = Graph::new();
        let a = g
            .param("a", Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        let b = g
            .param("b", Tensor::from_vec(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap())
            .unwrap();
        let c = g.matmul(a, b).unwrap();
        let loss = g.sum_all(c);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads["a"].data(), &[11.0, 15.0, 11.0, 15.0]);
        assert_eq!(grads["b"].data(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn shared_param_grads_sum() {
        // loss = x + x where both are the same named parameter.
        let mut g = Graph::new();
        let x1 = g.param("x", Tensor::scalar(1.5)).unwrap();
        let x2 = g.param("x", Tensor::scalar(1.5)).unwrap();
        let y = g.add(x1, x2).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads["x"].item(), 2.0);
    }

    #[test]
    fn maxpool_routes_to_argmax() {
        let mut g = Graph::new();
        let x = g
            .param("x", Tensor::from_vec(2, 2, vec![1.0, 5.0, 3.0, 2.0]).unwrap())
            .unwrap();
        let p = g.row_maxpool(x);
        assert_eq!(g.value(p).data(), &[3.0, 5.0]);
        let s = g.sum_all(p);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads["x"].data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn softmax_grad_sums_to_zero_per_row() {
        let mut g = Graph::new();
        let x = g
            .param("x", Tensor::from_vec(1, 3, vec![0.2, -0.4, 1.1]).unwrap())
            .unwrap();
        let s = g.row_softmax(x);
        // Weighted sum so the pullback is nontrivial.
        let w = g
            .input(Tensor::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap())
            .unwrap();
        let ws = g.mul(s, w).unwrap();
        let loss = g.sum_all(ws);
        let grads = g.backward(loss).unwrap();
        let total: f64 = grads["x"].data().iter().sum();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_input() {
        let mut g = Graph::new();
        let err = g.input(Tensor::scalar(f64::NAN)).unwrap_err();
        assert!(matches!(err, NumericsError::NonFinite { .. }));
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut g = Graph::new();
        let x = g.param("x", Tensor::zeros(2, 2)).unwrap();
        assert!(g.backward(x).is_err());
    }
}
