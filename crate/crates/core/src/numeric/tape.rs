//! Eager reverse-mode tape. Each kernel call computes its value immediately
//! and records enough to replay its gradient rule during `backward`.

use crate::error::{Error, Result};
use crate::numeric::kernels;
use crate::numeric::tensor::{Scalar, Tensor};
use crate::sparse::SparseRowMatrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<F> {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    SparseDense { s: SparseRowMatrix, d: Var },
    Tanh(Var),
    MaskedSoftmax { x: Var, axis: usize },
    Gather { src: Var, indices: Vec<usize> },
    Add(Var, Var),
    Scale(Var, F),
    RowDot(Var, Var),
    Reshape(Var),
    SampledSoftmaxNll { pos: Var, neg: Var },
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    needs_grad: bool,
}

pub struct Tape<F: Scalar = f32> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zeros of the right shape when nothing reached it.
    pub fn take_or_zeros(&mut self, v: Var, shape: &[usize]) -> Tensor<F> {
        self.grads[v.0].take().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Trainable input.
    pub fn param(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let value = kernels::matmul(self.value(a), self.value(b), ta, tb)?;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(value, Op::MatMul { a, b, ta, tb }, g))
    }

    pub fn sparse_dense_matmul(&mut self, s: SparseRowMatrix, d: Var) -> Result<Var> {
        let value = kernels::sparse_dense_matmul(&s, self.value(d))?;
        let g = self.grad_of(&[d]);
        Ok(self.push(value, Op::SparseDense { s, d }, g))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = kernels::tanh(self.value(x));
        let g = self.grad_of(&[x]);
        self.push(value, Op::Tanh(x), g)
    }

    pub fn masked_softmax(&mut self, x: Var, mask: &[bool], axis: usize) -> Result<Var> {
        let value = kernels::masked_softmax(self.value(x), mask, axis)?;
        let g = self.grad_of(&[x]);
        Ok(self.push(value, Op::MaskedSoftmax { x, axis }, g))
    }

    pub fn gather(&mut self, src: Var, indices: Vec<usize>) -> Result<Var> {
        let value = kernels::gather(self.value(src), &indices)?;
        let g = self.grad_of(&[src]);
        Ok(self.push(value, Op::Gather { src, indices }, g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = kernels::add(self.value(a), self.value(b))?;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), g))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let value = kernels::scale(self.value(a), c);
        let g = self.grad_of(&[a]);
        self.push(value, Op::Scale(a, c), g)
    }

    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = kernels::row_dot(self.value(a), self.value(b))?;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(value, Op::RowDot(a, b), g))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let g = self.grad_of(&[x]);
        Ok(self.push(value, Op::Reshape(x), g))
    }

    pub fn sampled_softmax_nll(&mut self, pos: Var, neg: Var) -> Result<Var> {
        let value = kernels::sampled_softmax_nll(self.value(pos), self.value(neg))?;
        let g = self.grad_of(&[pos, neg]);
        Ok(self.push(value, Op::SampledSoftmaxNll { pos, neg }, g))
    }

    /// Reverse pass from a single-element output.
    pub fn backward(&self, out: Var) -> Result<Gradients<F>> {
        let root = self.value(out);
        if root.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: root.shape().to_vec(),
                rhs: vec![1],
            });
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Tensor::raw(root.shape().to_vec(), vec![F::one()]));

        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            let mut send = |v: Var, t: Tensor<F>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul { a, b, ta, tb } => {
                    let (da, db) =
                        kernels::matmul_backward(self.value(*a), self.value(*b), *ta, *tb, &g)?;
                    send(*a, da);
                    send(*b, db);
                }
                Op::SparseDense { s, d } => send(*d, kernels::sparse_dense_backward(s, &g)),
                Op::Tanh(x) => send(*x, kernels::tanh_backward(&node.value, &g)),
                Op::MaskedSoftmax { x, axis } => {
                    send(*x, kernels::masked_softmax_backward(&node.value, *axis, &g))
                }
                Op::Gather { src, indices } => send(
                    *src,
                    kernels::gather_backward(self.value(*src).shape(), indices, &g),
                ),
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Scale(a, c) => send(*a, kernels::scale(&g, *c)),
                Op::RowDot(a, b) => {
                    let (da, db) = kernels::row_dot_backward(self.value(*a), self.value(*b), &g);
                    send(*a, da);
                    send(*b, db);
                }
                Op::Reshape(x) => {
                    let shape = self.value(*x).shape().to_vec();
                    send(*x, g.reshape(&shape)?);
                }
                Op::SampledSoftmaxNll { pos, neg } => {
                    let (dp, dn) = kernels::sampled_softmax_nll_backward(
                        self.value(*pos),
                        self.value(*neg),
                        g.data()[0],
                    );
                    send(*pos, dp);
                    send(*neg, dn);
                }
            }
        }
        Ok(Gradients { grads })
    }
}
