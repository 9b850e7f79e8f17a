//! Reverse-mode gradients over a fixed set of matrix primitives.
//!
//! A [`GradTape`] records every primitive application in order. Values are
//! computed eagerly; [`GradTape::backward`] walks the record in reverse to
//! produce the gradient of a 1×1 output with respect to every node, and
//! [`GradTape::replay`] recomputes all values from the leaves.

use crate::error::{Error, Result};
use crate::numeric::matrix::{log_sum_exp, masked_row_softmax, softmax, Matrix};

/// Handle to a value on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// a · bᵀ
    MatMulT(Var, Var),
    /// a + row-broadcast bias
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    MaskedSoftmax(Var, Matrix),
    ColumnMax(Var),
    /// Mean cross-entropy over the rows that carry a label.
    CrossEntropy(Var, Vec<Option<usize>>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Clone, Debug, Default)]
pub struct GradTape {
    nodes: Vec<Node>,
}

/// Gradients of the tape's leaves, indexed by [`Var`]; `None` for leaves the
/// output does not reach and for interior nodes.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of the given shape when `v` is unreached.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Matrix {
        self.get(v).cloned().unwrap_or_else(|| Matrix::zeros(rows, cols))
    }
}

fn evaluate<'a>(op: &Op, val: impl Fn(Var) -> &'a Matrix) -> Result<Matrix> {
    Ok(match op {
        Op::Leaf => unreachable!("leaves carry their own value"),
        Op::MatMul(a, b) => val(*a).matmul(val(*b))?,
        Op::MatMulT(a, b) => val(*a).matmul_t(val(*b))?,
        Op::AddBias(a, b) => val(*a).add_row_broadcast(val(*b))?,
        Op::Add(a, b) => val(*a).add(val(*b))?,
        Op::Scale(a, s) => val(*a).scale(*s),
        Op::Relu(a) => val(*a).relu(),
        Op::MaskedSoftmax(a, mask) => masked_row_softmax(val(*a), mask)?,
        Op::ColumnMax(a) => val(*a).column_max()?.0,
        Op::CrossEntropy(a, labels) => {
            cross_entropy(val(*a), labels)?
        }
    })
}

fn cross_entropy(logits: &Matrix, labels: &[Option<usize>]) -> Result<Matrix> {
    if labels.len() != logits.rows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (r, label) in labels.iter().enumerate() {
        if let Some(y) = *label {
            if y >= logits.cols() {
                return Err(Error::Dimension(format!(
                    "label {y} for {} classes",
                    logits.cols()
                )));
            }
            let row = logits.row(r);
            total += log_sum_exp(row) - row[y];
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoTrainingSignal("cross-entropy over zero labels".into()));
    }
    Ok(Matrix::from_raw(1, 1, vec![total / count as f64]))
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op) -> Result<Var> {
        let value = evaluate(&op, |v| &self.nodes[v.0].value)?;
        Ok(self.push(value, op))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::MatMulT(a, b))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.record(Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.record(Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Relu(a))
    }

    pub fn masked_softmax(&mut self, scores: Var, mask: Matrix) -> Result<Var> {
        self.record(Op::MaskedSoftmax(scores, mask))
    }

    pub fn column_max(&mut self, a: Var) -> Result<Var> {
        self.record(Op::ColumnMax(a))
    }

    pub fn cross_entropy(&mut self, logits: Var, labels: Vec<Option<usize>>) -> Result<Var> {
        self.record(Op::CrossEntropy(logits, labels))
    }

    /// `x · Wᵀ + b` with `W` stored out×in and `b` as 1×out.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xw = self.matmul_t(x, weight)?;
        self.add_bias(xw, bias)
    }

    /// Recomputes every node from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Matrix>> {
        let mut values: Vec<Matrix> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf => node.value.clone(),
                op => evaluate(op, |v| &values[v.0])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Gradients of the 1×1 node `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(Error::Dimension(format!(
                "backward from a {}x{} value",
                out.rows(),
                out.cols()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if let Op::Leaf = node.op {
                grads[idx] = Some(g);
                continue;
            }
            let mut acc = |v: Var, contribution: Matrix| -> Result<()> {
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&contribution),
                    slot @ None => {
                        *slot = Some(contribution);
                        Ok(())
                    }
                }
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(*a, g.matmul_t(bv)?)?;
                    acc(*b, av.t_matmul(&g)?)?;
                }
                Op::MatMulT(a, b) => {
                    // C = A Bᵀ: dA = G B, dB = Gᵀ A
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(*a, g.matmul(bv)?)?;
                    acc(*b, g.t_matmul(av)?)?;
                }
                Op::AddBias(a, b) => {
                    acc(*b, g.column_sums())?;
                    acc(*a, g)?;
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone())?;
                    acc(*b, g)?;
                }
                Op::Scale(a, s) => acc(*a, g.scale(*s))?,
                Op::Relu(a) => {
                    let input = self.value(*a);
                    let masked = input
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&x, &gy)| if x > 0.0 { gy } else { 0.0 })
                        .collect();
                    acc(*a, Matrix::from_raw(g.rows(), g.cols(), masked))?;
                }
                Op::MaskedSoftmax(a, _) => {
                    // dS_ij = y_ij (g_ij - Σ_k y_ik g_ik); masked entries have y = 0.
                    let y = &node.value;
                    let mut gs = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..y.cols() {
                            gs.set(r, c, yr[c] * (gr[c] - inner));
                        }
                    }
                    acc(*a, gs)?;
                }
                Op::ColumnMax(a) => {
                    let input = self.value(*a);
                    let (_, arg) = input.column_max()?;
                    let mut gx = Matrix::zeros(input.rows(), input.cols());
                    for (c, &r) in arg.iter().enumerate() {
                        gx.set(r, c, g.get(0, c));
                    }
                    acc(*a, gx)?;
                }
                Op::CrossEntropy(a, labels) => {
                    let logits = self.value(*a);
                    let count = labels.iter().filter(|l| l.is_some()).count() as f64;
                    let scale = g.get(0, 0) / count;
                    let mut gl = Matrix::zeros(logits.rows(), logits.cols());
                    for (r, label) in labels.iter().enumerate() {
                        if let Some(y) = *label {
                            let p = softmax(logits.row(r));
                            for (c, pc) in p.into_iter().enumerate() {
                                let target = if c == y { 1.0 } else { 0.0 };
                                gl.set(r, c, (pc - target) * scale);
                            }
                        }
                    }
                    acc(*a, gl)?;
                }
            }
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_cross_entropy_is_log_classes() {
        let mut tape = GradTape::new();
        let logits = tape.leaf(Matrix::zeros(1, 4));
        let loss = tape.cross_entropy(logits, vec![Some(2)]).unwrap();
        assert!((tape.value(loss).get(0, 0) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_needs_a_label() {
        let mut tape = GradTape::new();
        let logits = tape.leaf(Matrix::zeros(2, 3));
        assert!(matches!(
            tape.cross_entropy(logits, vec![None, None]),
            Err(Error::NoTrainingSignal(_))
        ));
    }

    #[test]
    fn backward_requires_scalar_output() {
        let mut tape = GradTape::new();
        let x = tape.leaf(Matrix::zeros(2, 2));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn shared_leaf_accumulates() {
        // L = x·x for a 1×1 x gives dL/dx = 2x
        let mut tape = GradTape::new();
        let x = tape.leaf(Matrix::filled(1, 1, 3.0));
        let y = tape.matmul(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().get(0, 0), 6.0);
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut tape = GradTape::new();
        let x = tape.leaf(Matrix::from_rows(&[vec![0.1, -0.7], vec![2.0, 0.3]]).unwrap());
        let w = tape.leaf(Matrix::from_rows(&[vec![0.5, 1.5], vec![-1.0, 0.25]]).unwrap());
        let b = tape.leaf(Matrix::row_vector(&[0.01, -0.02]).unwrap());
        let h = tape.linear(x, w, b).unwrap();
        let h = tape.relu(h).unwrap();
        let g = tape.masked_softmax(h, Matrix::filled(2, 2, 1.0)).unwrap();
        let p = tape.column_max(g).unwrap();
        let l = tape.cross_entropy(p, vec![Some(1)]).unwrap();
        let replayed = tape.replay().unwrap();
        assert_eq!(replayed.len(), tape.len());
        for (i, v) in replayed.iter().enumerate() {
            assert_eq!(v, tape.value(Var(i)));
        }
        assert!(tape.value(l).get(0, 0) > 0.0);
    }
}
