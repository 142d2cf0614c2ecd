//! Define-by-run reverse-mode tape over [`Array`] values.
//!
//! Every primitive is evaluated eagerly and appended to the tape, so node ids
//! are a topological order by construction. [`Tape::backward`] walks that
//! order once in reverse and scatters parameter adjoints into a
//! [`GradVector`] laid out like the parameter vector the tape was built on.
//! `backward` borrows the tape immutably, so several losses sharing one
//! forward pass can each be differentiated without touching the others.

use super::array::{gemm, Array};
use super::params::{GradVector, ParamSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param { offset: usize },
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Square(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Concat(Vec<NodeId>),
    Slice { src: NodeId, start: usize },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Array,
}

/// Recording of one forward pass. Parameter leaves read from the borrowed
/// parameter vector; their gradients land at the same offsets.
#[derive(Debug)]
pub struct Tape<'p> {
    params: &'p GradVector,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p GradVector) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, op: Op, value: Array) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn next_id(&self) -> usize {
        self.nodes.len()
    }

    fn shape_err(&self, name: &'static str, detail: String) -> Error {
        Error::Shape {
            op: self.next_id(),
            name,
            detail,
        }
    }

    pub fn constant(&mut self, value: Array) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn param(&mut self, spec: &ParamSpec) -> Result<NodeId> {
        let end = spec.offset + spec.numel();
        if end > self.params.len() {
            return Err(self.shape_err(
                "param",
                format!(
                    "{} spans [{}, {end}) but parameter vector has {}",
                    spec.name,
                    spec.offset,
                    self.params.len()
                ),
            ));
        }
        let value = Array::new(
            spec.shape.clone(),
            self.params.as_slice()[spec.offset..end].to_vec(),
        )?;
        Ok(self.push(
            Op::Param {
                offset: spec.offset,
            },
            value,
        ))
    }

    /// `(m x k) * (k x n)`; rank-1 left operands are treated as one row.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() > 2 || bv.rank() != 2 || av.cols() != bv.shape()[0] {
            return Err(self.shape_err("matmul", format!("{:?} x {:?}", av.shape(), bv.shape())));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            av.data(),
            k as isize,
            1,
            bv.data(),
            n as isize,
            1,
            0.0,
            &mut out,
        );
        let shape = if av.rank() == 2 { vec![m, n] } else { vec![n] };
        let value = Array::new(shape, out)?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    fn same_shape(&self, name: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_err(name, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), v))
    }

    /// Adds a length-`n` row vector to every row of an `m x n` matrix.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rank() != 1 || av.cols() != rv.len() {
            return Err(self.shape_err(
                "add_row",
                format!("{:?} + row {:?}", av.shape(), rv.shape()),
            ));
        }
        let mut v = av.clone();
        let r = rv.data().to_vec();
        for i in 0..v.rows() {
            for (x, b) in v.row_mut(i).iter_mut().zip(&r) {
                *x += b;
            }
        }
        Ok(self.push(Op::AddRow(a, row), v))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x * x);
        self.push(Op::Square(a), v)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Array::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(self.shape_err("mean", "mean of empty array".into()));
        }
        let v = Array::scalar(self.value(a).sum() / n as f64);
        Ok(self.push(Op::Mean(a), v))
    }

    /// Concatenates rank-2 arrays with equal row counts along columns.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(self.shape_err("concat", "no inputs".into()));
        };
        let rows = self.value(first).rows();
        if parts
            .iter()
            .any(|&p| self.value(p).rank() != 2 || self.value(p).rows() != rows)
        {
            let shapes: Vec<_> = parts.iter().map(|&p| self.shape(p).to_vec()).collect();
            return Err(self.shape_err("concat", format!("incompatible {shapes:?}")));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let v = Array::matrix(rows, cols, data);
        Ok(self.push(Op::Concat(parts.to_vec()), v))
    }

    /// Column slice `[start, end)` of a rank-2 array.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let av = self.value(a);
        if av.rank() != 2 || start > end || end > av.cols() {
            return Err(self.shape_err("slice", format!("[{start}, {end}) of {:?}", av.shape())));
        }
        let rows = av.rows();
        let mut data = Vec::with_capacity(rows * (end - start));
        for i in 0..rows {
            data.extend_from_slice(&av.row(i)[start..end]);
        }
        let v = Array::matrix(rows, end - start, data);
        Ok(self.push(Op::Slice { src: a, start }, v))
    }

    /// Reverse sweep from a scalar `root`, seeded with `seed`. Returns
    /// d(root)/d(params) in canonical order; unused parameters stay zero.
    pub fn backward(&self, root: NodeId, seed: f64) -> Result<GradVector> {
        let root_val = self.value(root);
        if !root_val.is_scalar() {
            return Err(Error::NonScalarRoot {
                node: root.0,
                shape: root_val.shape().to_vec(),
            });
        }
        let mut grads = GradVector::zeros(self.params.len());
        let mut adj: Vec<Option<Array>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Array::full(root_val.shape(), seed));

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param { offset } => {
                    let dst = &mut grads.as_mut_slice()[*offset..*offset + g.len()];
                    for (d, v) in dst.iter_mut().zip(g.data()) {
                        *d += v;
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.shape()[1]);
                    // dA = G * B^T
                    let mut da = vec![0.0; m * k];
                    gemm(
                        m,
                        n,
                        k,
                        g.data(),
                        n as isize,
                        1,
                        bv.data(),
                        1,
                        n as isize,
                        0.0,
                        &mut da,
                    );
                    // dB = A^T * G
                    let mut db = vec![0.0; k * n];
                    gemm(
                        k,
                        m,
                        n,
                        av.data(),
                        1,
                        k as isize,
                        g.data(),
                        n as isize,
                        1,
                        0.0,
                        &mut db,
                    );
                    accumulate(&mut adj, *a, Array::new(av.shape().to_vec(), da)?);
                    accumulate(&mut adj, *b, Array::new(bv.shape().to_vec(), db)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.map(|x| -x));
                    accumulate(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let mut gr = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (acc, v) in gr.iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut adj, *row, Array::vector(gr));
                    accumulate(&mut adj, *a, g);
                }
                Op::Scale(a, s) => accumulate(&mut adj, *a, g.map(|x| x * s)),
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * (1.0 - y * y));
                    accumulate(&mut adj, *a, ga);
                }
                Op::Square(a) => {
                    let ga = g.zip_map(self.value(*a), |x, y| 2.0 * x * y);
                    accumulate(&mut adj, *a, ga);
                }
                Op::Sum(a) => {
                    let gs = g.data()[0];
                    accumulate(&mut adj, *a, Array::full(self.shape(*a), gs));
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len() as f64;
                    let gs = g.data()[0] / n;
                    accumulate(&mut adj, *a, Array::full(self.shape(*a), gs));
                }
                Op::Concat(parts) => {
                    let rows = g.rows();
                    let mut start = 0;
                    for &p in parts {
                        let c = self.value(p).cols();
                        let mut data = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row(r)[start..start + c]);
                        }
                        accumulate(&mut adj, p, Array::matrix(rows, c, data));
                        start += c;
                    }
                }
                Op::Slice { src, start } => {
                    let sv = self.value(*src);
                    let mut full = Array::zeros(sv.shape());
                    let w = g.cols();
                    for r in 0..g.rows() {
                        full.row_mut(r)[*start..*start + w].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut adj, *src, full);
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(adj: &mut [Option<Array>], id: NodeId, g: Array) {
    match &mut adj[id.0] {
        Some(existing) => existing.axpy(1.0, &g),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::params::ParamLayout;

    #[test]
    fn square_of_parameter() {
        let mut layout = ParamLayout::new();
        let spec = layout.push("theta", &[1]);
        let params = GradVector::from_vec(vec![3.0]);
        let mut tape = Tape::new(&params);
        let th = tape.param(&spec).unwrap();
        let sq = tape.square(th);
        let loss = tape.sum(sq);
        assert_eq!(tape.value(loss).data()[0], 9.0);
        let g = tape.backward(loss, 1.0).unwrap();
        assert_eq!(g.as_slice(), &[6.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut layout = ParamLayout::new();
        let spec = layout.push("w", &[2, 2]);
        let params = GradVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let mut tape = Tape::new(&params);
        let _w = tape.param(&spec).unwrap();
        let c = tape.constant(Array::vector(vec![5.0, 6.0]));
        let loss = tape.sum(c);
        let g = tape.backward(loss, 1.0).unwrap();
        assert_eq!(g.as_slice(), &[0.0; 4]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let params = GradVector::zeros(0);
        let mut tape = Tape::new(&params);
        let c = tape.constant(Array::vector(vec![1.0, 2.0]));
        assert!(matches!(
            tape.backward(c, 1.0),
            Err(Error::NonScalarRoot { .. })
        ));
    }

    #[test]
    fn shape_mismatch_reports_op_id() {
        let params = GradVector::zeros(0);
        let mut tape = Tape::new(&params);
        let a = tape.constant(Array::matrix(2, 3, vec![0.0; 6]));
        let b = tape.constant(Array::matrix(2, 3, vec![0.0; 6]));
        match tape.matmul(a, b) {
            Err(Error::Shape { op, name, .. }) => {
                assert_eq!(op, 2);
                assert_eq!(name, "matmul");
            }
            other => panic!("expected shape error, got {other:?}"),
        }
        let v = tape.constant(Array::vector(vec![1.0]));
        assert!(tape.add(a, v).is_err());
    }

    #[test]
    fn concat_and_slice_round_trip_gradients() {
        let mut layout = ParamLayout::new();
        let a_spec = layout.push("a", &[2, 2]);
        let b_spec = layout.push("b", &[2, 1]);
        let params = GradVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut tape = Tape::new(&params);
        let a = tape.param(&a_spec).unwrap();
        let b = tape.param(&b_spec).unwrap();
        let cat = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.value(cat).data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let s = tape.slice_cols(cat, 1, 3).unwrap();
        assert_eq!(tape.value(s).data(), &[2.0, 5.0, 4.0, 6.0]);
        let sq = tape.square(s);
        let loss = tape.sum(sq);
        let g = tape.backward(loss, 1.0).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 4.0, 0.0, 8.0, 10.0, 12.0]);
    }
}
