use std::collections::BTreeMap;

use super::tensor::{self, Tensor};
use super::GradError;

/// Identifies a trainable leaf. Gradients are reported per id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    Param(ParamId),
    Constant,
    /// Same-shape sum, or `[m×n] + [n]` row broadcast.
    Add,
    Multiply,
    Matmul,
    /// Gathers rows of a `[r×c]` table.
    RowLookup(Vec<usize>),
    LogSoftmax,
    Sum,
    Scale(f64),
    Negate,
    Tanh,
}

impl OpKind {
    fn name(&self) -> &'static str {
        match self {
            OpKind::Param(_) => "param",
            OpKind::Constant => "constant",
            OpKind::Add => "add",
            OpKind::Multiply => "multiply",
            OpKind::Matmul => "matmul",
            OpKind::RowLookup(_) => "row-lookup",
            OpKind::LogSoftmax => "log-softmax",
            OpKind::Sum => "sum",
            OpKind::Scale(_) => "scale",
            OpKind::Negate => "negate",
            OpKind::Tanh => "tanh",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: OpKind,
    inputs: Vec<usize>,
    shape: Vec<usize>,
    /// Leaves carry their value from construction; interior nodes get one in `forward`.
    value: Option<Tensor>,
}

/// Gradient of a scalar with respect to every parameter leaf on the graph.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    map: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.map.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.map.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn insert(&mut self, id: ParamId, grad: Tensor) {
        self.map.insert(id, grad);
    }
}

/// A recorded computation. Build nodes, call [`Graph::forward`], then
/// [`Graph::backward`] on the scalar output.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    evaluated: usize,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: OpKind, inputs: Vec<usize>, shape: Vec<usize>, value: Option<Tensor>) -> NodeId {
        self.nodes.push(Node {
            op,
            inputs,
            shape,
            value,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn shape_of(&self, id: NodeId) -> Result<&[usize], GradError> {
        self.nodes
            .get(id.0)
            .map(|n| n.shape.as_slice())
            .ok_or(GradError::UnknownNode(id.0))
    }

    fn mismatch(op: &OpKind, shapes: &[&[usize]]) -> GradError {
        GradError::ShapeMismatch {
            op: op.name(),
            shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        }
    }

    pub fn param(&mut self, id: ParamId, value: Tensor) -> NodeId {
        let shape = value.shape().to_vec();
        self.push(OpKind::Param(id), vec![], shape, Some(value))
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let shape = value.shape().to_vec();
        self.push(OpKind::Constant, vec![], shape, Some(value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let (sa, sb) = (self.shape_of(a)?.to_vec(), self.shape_of(b)?.to_vec());
        let ok = sa == sb || (sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0]);
        if !ok {
            return Err(Self::mismatch(&OpKind::Add, &[&sa, &sb]));
        }
        Ok(self.push(OpKind::Add, vec![a.0, b.0], sa, None))
    }

    pub fn multiply(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let (sa, sb) = (self.shape_of(a)?.to_vec(), self.shape_of(b)?.to_vec());
        if sa != sb {
            return Err(Self::mismatch(&OpKind::Multiply, &[&sa, &sb]));
        }
        Ok(self.push(OpKind::Multiply, vec![a.0, b.0], sa, None))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let (sa, sb) = (self.shape_of(a)?.to_vec(), self.shape_of(b)?.to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Self::mismatch(&OpKind::Matmul, &[&sa, &sb]));
        }
        Ok(self.push(OpKind::Matmul, vec![a.0, b.0], vec![sa[0], sb[1]], None))
    }

    pub fn row_lookup(&mut self, table: NodeId, indices: Vec<usize>) -> Result<NodeId, GradError> {
        let st = self.shape_of(table)?.to_vec();
        if st.len() != 2 || indices.is_empty() {
            return Err(Self::mismatch(&OpKind::RowLookup(vec![]), &[&st, &[indices.len()]]));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= st[0]) {
            return Err(GradError::IndexOutOfRange {
                index: bad,
                rows: st[0],
            });
        }
        let shape = vec![indices.len(), st[1]];
        Ok(self.push(OpKind::RowLookup(indices), vec![table.0], shape, None))
    }

    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId, GradError> {
        let s = self.shape_of(x)?.to_vec();
        if s.len() > 2 {
            return Err(Self::mismatch(&OpKind::LogSoftmax, &[&s]));
        }
        Ok(self.push(OpKind::LogSoftmax, vec![x.0], s, None))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, GradError> {
        self.shape_of(x)?;
        Ok(self.push(OpKind::Sum, vec![x.0], vec![1], None))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId, GradError> {
        let s = self.shape_of(x)?.to_vec();
        Ok(self.push(OpKind::Scale(c), vec![x.0], s, None))
    }

    pub fn negate(&mut self, x: NodeId) -> Result<NodeId, GradError> {
        let s = self.shape_of(x)?.to_vec();
        Ok(self.push(OpKind::Negate, vec![x.0], s, None))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId, GradError> {
        let s = self.shape_of(x)?.to_vec();
        Ok(self.push(OpKind::Tanh, vec![x.0], s, None))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn op(&self, id: NodeId) -> Option<&OpKind> {
        self.nodes.get(id.0).map(|n| &n.op)
    }

    /// Value of a node, available once `forward` has covered it.
    pub fn value(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes.get(id.0).and_then(|n| n.value.as_ref())
    }

    fn val(&self, i: usize) -> &Tensor {
        self.nodes[i].value.as_ref().expect("inputs evaluated before use")
    }

    /// Evaluates every node up to and including `out`, which must be scalar.
    /// Returns the scalar value.
    pub fn forward(&mut self, out: NodeId) -> Result<f64, GradError> {
        let shape = self.shape_of(out)?;
        if shape.iter().product::<usize>() != 1 {
            return Err(GradError::NotScalar(shape.to_vec()));
        }
        Ok(self.evaluate(out)?.data()[0])
    }

    /// Evaluates every node up to and including `id` (any shape) and returns
    /// its value. Reading a value this way and feeding it back as a
    /// [`constant`](Self::constant) detaches it from the gradient.
    pub fn evaluate(&mut self, id: NodeId) -> Result<&Tensor, GradError> {
        self.shape_of(id)?;
        let out = id;
        for i in self.evaluated..=out.0 {
            if self.nodes[i].value.is_some() {
                continue;
            }
            let node = &self.nodes[i];
            let value = match &node.op {
                OpKind::Param(_) | OpKind::Constant => unreachable!("leaves carry values"),
                OpKind::Add => {
                    let (a, b) = (self.val(node.inputs[0]), self.val(node.inputs[1]));
                    if a.shape() == b.shape() {
                        a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect()
                    } else {
                        tensor::add_row_bias(a.data(), b.data())
                    }
                }
                OpKind::Multiply => {
                    let (a, b) = (self.val(node.inputs[0]), self.val(node.inputs[1]));
                    a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect()
                }
                OpKind::Matmul => {
                    let (a, b) = (self.val(node.inputs[0]), self.val(node.inputs[1]));
                    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                    tensor::matmul(a.data(), b.data(), m, k, n)
                }
                OpKind::RowLookup(idx) => {
                    let t = self.val(node.inputs[0]);
                    tensor::gather_rows(t.data(), t.cols(), idx)
                }
                OpKind::LogSoftmax => {
                    let x = self.val(node.inputs[0]);
                    tensor::log_softmax_rows(x.data(), x.cols())
                }
                OpKind::Sum => vec![self.val(node.inputs[0]).data().iter().sum()],
                OpKind::Scale(c) => self.val(node.inputs[0]).data().iter().map(|v| v * c).collect(),
                OpKind::Negate => self.val(node.inputs[0]).data().iter().map(|v| -v).collect(),
                OpKind::Tanh => self.val(node.inputs[0]).data().iter().map(|v| v.tanh()).collect(),
            };
            let shape = node.shape.clone();
            self.nodes[i].value = Some(Tensor::from_parts(shape, value));
        }
        self.evaluated = self.evaluated.max(out.0 + 1);
        Ok(self.val(out.0))
    }

    /// Reverse sweep from the scalar `out`. Every parameter leaf recorded on
    /// the graph gets an entry, zero if it does not reach `out`.
    pub fn backward(&self, out: NodeId) -> Result<Gradients, GradError> {
        let node = self.nodes.get(out.0).ok_or(GradError::UnknownNode(out.0))?;
        if node.shape.iter().product::<usize>() != 1 {
            return Err(GradError::NotScalar(node.shape.clone()));
        }
        if node.value.is_none() || self.evaluated <= out.0 {
            return Err(GradError::NotEvaluated);
        }

        let mut adj: Vec<Option<Vec<f64>>> = vec![None; out.0 + 1];
        adj[out.0] = Some(vec![1.0]);

        fn accumulate(slot: &mut Option<Vec<f64>>, g: Vec<f64>) {
            match slot {
                Some(acc) => {
                    for (a, v) in acc.iter_mut().zip(g) {
                        *a += v;
                    }
                }
                None => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                OpKind::Param(_) | OpKind::Constant => {
                    adj[i] = Some(g);
                }
                OpKind::Add => {
                    let (ia, ib) = (node.inputs[0], node.inputs[1]);
                    let db = if self.nodes[ia].shape == self.nodes[ib].shape {
                        g.clone()
                    } else {
                        let cols = self.nodes[ib].shape[0];
                        let mut acc = vec![0.0; cols];
                        for row in g.chunks_exact(cols) {
                            for (a, v) in acc.iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                        acc
                    };
                    accumulate(&mut adj[ia], g);
                    accumulate(&mut adj[ib], db);
                }
                OpKind::Multiply => {
                    let (ia, ib) = (node.inputs[0], node.inputs[1]);
                    let (a, b) = (self.val(ia).data(), self.val(ib).data());
                    let da = g.iter().zip(b).map(|(x, y)| x * y).collect();
                    let db = g.iter().zip(a).map(|(x, y)| x * y).collect();
                    accumulate(&mut adj[ia], da);
                    accumulate(&mut adj[ib], db);
                }
                OpKind::Matmul => {
                    let (ia, ib) = (node.inputs[0], node.inputs[1]);
                    let (a, b) = (self.val(ia), self.val(ib));
                    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                    let da = tensor::matmul_a_bt(&g, b.data(), m, k, n);
                    let db = tensor::matmul_at_b(a.data(), &g, m, k, n);
                    accumulate(&mut adj[ia], da);
                    accumulate(&mut adj[ib], db);
                }
                OpKind::RowLookup(idx) => {
                    let it = node.inputs[0];
                    let cols = self.nodes[it].shape[1];
                    let mut dt = vec![0.0; self.nodes[it].shape.iter().product()];
                    for (r, &src) in idx.iter().enumerate() {
                        for (d, v) in dt[src * cols..(src + 1) * cols].iter_mut().zip(&g[r * cols..(r + 1) * cols]) {
                            *d += v;
                        }
                    }
                    accumulate(&mut adj[it], dt);
                }
                OpKind::LogSoftmax => {
                    let ix = node.inputs[0];
                    let y = self.val(i);
                    let cols = y.cols();
                    let mut dx = Vec::with_capacity(g.len());
                    for (grow, yrow) in g.chunks_exact(cols).zip(y.data().chunks_exact(cols)) {
                        let s: f64 = grow.iter().sum();
                        dx.extend(grow.iter().zip(yrow).map(|(gv, yv)| gv - yv.exp() * s));
                    }
                    accumulate(&mut adj[ix], dx);
                }
                OpKind::Sum => {
                    let ix = node.inputs[0];
                    let n = self.nodes[ix].shape.iter().product();
                    accumulate(&mut adj[ix], vec![g[0]; n]);
                }
                OpKind::Scale(c) => {
                    let ix = node.inputs[0];
                    accumulate(&mut adj[ix], g.iter().map(|v| v * c).collect());
                }
                OpKind::Negate => {
                    let ix = node.inputs[0];
                    accumulate(&mut adj[ix], g.iter().map(|v| -v).collect());
                }
                OpKind::Tanh => {
                    let ix = node.inputs[0];
                    let y = self.val(i).data();
                    accumulate(&mut adj[ix], g.iter().zip(y).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect());
                }
            }
        }

        let mut grads = Gradients::default();
        for (i, node) in self.nodes.iter().enumerate() {
            if let OpKind::Param(id) = node.op {
                let contrib = adj
                    .get_mut(i)
                    .and_then(Option::take)
                    .unwrap_or_else(|| vec![0.0; node.shape.iter().product()]);
                match grads.map.get_mut(&id) {
                    Some(acc) => {
                        for (a, v) in acc.data_mut().iter_mut().zip(contrib) {
                            *a += v;
                        }
                    }
                    None => {
                        grads.map.insert(id, Tensor::from_parts(node.shape.clone(), contrib));
                    }
                }
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_scaled_vector() {
        let mut g = Graph::new();
        let x = g.param(ParamId(0), Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap());
        let s = g.scale(x, 2.0).unwrap();
        let out = g.sum(s).unwrap();
        assert_eq!(g.forward(out).unwrap(), 12.0);
        let grads = g.backward(out).unwrap();
        assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn log_softmax_symmetric() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
        let y = g.log_softmax(x).unwrap();
        let out = g.sum(y).unwrap();
        g.forward(out).unwrap();
        let v = g.value(y).unwrap();
        for &e in v.data() {
            assert!((e + std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn matmul_shape_mismatch_names_op() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[4, 2]));
        let err = g.matmul(a, b).unwrap_err();
        match err {
            GradError::ShapeMismatch { op, shapes } => {
                assert_eq!(op, "matmul");
                assert_eq!(shapes, vec![vec![2, 3], vec![4, 2]]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn square_derivative() {
        let mut g = Graph::new();
        let x = g.param(ParamId(3), Tensor::scalar(3.0));
        let y = g.multiply(x, x).unwrap();
        g.forward(y).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(ParamId(3)).unwrap().data(), &[6.0]);
    }

    #[test]
    fn backward_before_forward_fails() {
        let mut g = Graph::new();
        let x = g.param(ParamId(0), Tensor::scalar(1.0));
        let y = g.scale(x, 2.0).unwrap();
        assert!(matches!(g.backward(y), Err(GradError::NotEvaluated)));
    }

    #[test]
    fn unused_param_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.param(ParamId(0), Tensor::scalar(1.0));
        let _unused = g.param(ParamId(1), Tensor::vector(vec![1.0, 1.0]).unwrap());
        let y = g.scale(x, 4.0).unwrap();
        g.forward(y).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(ParamId(1)).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_output_rejected() {
        let mut g = Graph::new();
        let x = g.param(ParamId(0), Tensor::vector(vec![1.0, 2.0]).unwrap());
        assert!(matches!(g.forward(x), Err(GradError::NotScalar(_))));
    }

    #[test]
    fn linearity_on_joint_tape() {
        let mut g = Graph::new();
        let w = g.param(ParamId(0), Tensor::matrix(2, 2, vec![0.3, -0.7, 1.1, 0.2]).unwrap());
        let x1 = g.constant(Tensor::matrix(1, 2, vec![0.5, -1.5]).unwrap());
        let x2 = g.constant(Tensor::matrix(1, 2, vec![-0.25, 2.0]).unwrap());
        let h1 = g.matmul(x1, w).unwrap();
        let t = g.tanh(h1).unwrap();
        let f = g.sum(t).unwrap();
        let h2 = g.matmul(x2, w).unwrap();
        let ls = g.log_softmax(h2).unwrap();
        let q = g.sum(ls).unwrap();
        let total = g.add(f, q).unwrap();
        g.forward(total).unwrap();
        let df = g.backward(f).unwrap();
        let dq = g.backward(q).unwrap();
        let dt = g.backward(total).unwrap();
        let manual: Vec<f64> = df
            .get(ParamId(0))
            .unwrap()
            .data()
            .iter()
            .zip(dq.get(ParamId(0)).unwrap().data())
            .map(|(a, b)| a + b)
            .collect();
        assert_eq!(dt.get(ParamId(0)).unwrap().data(), manual.as_slice());
    }
}
