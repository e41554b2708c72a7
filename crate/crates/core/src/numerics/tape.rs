//! Reverse-mode differentiation over a linear tape of tensor operations.
//!
//! Every call on [`Tape`] evaluates its operation eagerly and records enough
//! state to replay the adjoint. [`Tape::backward`] walks the tape once in
//! reverse and returns gradients for the nodes registered with
//! [`Tape::param`].

use std::collections::BTreeMap;

use super::ops::{self, ConvDims, DenseDims};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

enum Op<T> {
    Constant,
    Param(usize),
    Conv1d {
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        dims: ConvDims,
        cols: Vec<T>,
    },
    Dense {
        input: NodeId,
        weights: NodeId,
        bias: NodeId,
        dims: DenseDims,
    },
    Relu(NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Reshape(NodeId),
    SoftmaxCrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        epsilon: f64,
        probs: Vec<T>,
        width: usize,
    },
    Mmd {
        sample: NodeId,
        reference: Tensor<T>,
        bandwidth: f64,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Gradients keyed by the parameter index passed to [`Tape::param`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: BTreeMap<usize, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, param: usize) -> Option<&Tensor<T>> {
        self.grads.get(&param)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Tensor<T>)> {
        self.grads.iter().map(|(&k, v)| (k, v))
    }
}

pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node<T>> {
        self.nodes.get(id.0).ok_or(Error::NoForward(id.0))
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Constant)
    }

    /// Registers a trainable leaf; its gradient is reported under `index`.
    pub fn param(&mut self, index: usize, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Param(index))
    }

    pub fn conv1d(&mut self, input: NodeId, kernel: NodeId, bias: NodeId) -> Result<NodeId> {
        let (x, k, b) = (self.node(input)?, self.node(kernel)?, self.node(bias)?);
        let dims = ops::conv_dims(x.value.shape(), k.value.shape(), b.value.shape())?;
        let (out, cols) = ops::conv_forward(x.value.data(), k.value.data(), b.value.data(), dims);
        let mut shape = x.value.shape().to_vec();
        *shape.last_mut().unwrap() = dims.cout;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                kernel,
                bias,
                dims,
                cols,
            },
        ))
    }

    pub fn dense(&mut self, input: NodeId, weights: NodeId, bias: NodeId) -> Result<NodeId> {
        let (x, w, b) = (self.node(input)?, self.node(weights)?, self.node(bias)?);
        let dims = ops::dense_dims(x.value.shape(), w.value.shape(), b.value.shape())?;
        let out = ops::dense_forward(x.value.data(), w.value.data(), b.value.data(), dims);
        let shape = if x.value.shape().len() == 1 {
            vec![dims.outputs]
        } else {
            vec![dims.batch, dims.outputs]
        };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Dense {
                input,
                weights,
                bias,
                dims,
            },
        ))
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        let x = &self.node(input)?.value;
        let out = x.data().iter().map(|&v| v.max(T::zero())).collect();
        let value = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Relu(input)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (x, y) = (&self.node(a)?.value, &self.node(b)?.value);
        if x.shape() != y.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", x.shape(), y.shape()),
            ));
        }
        let out = x.data().iter().zip(y.data()).map(|(&u, &v)| u + v).collect();
        let value = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn scale(&mut self, input: NodeId, factor: f64) -> Result<NodeId> {
        let x = &self.node(input)?.value;
        let f = T::from_f64(factor);
        let out = x.data().iter().map(|&v| v * f).collect();
        let value = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Scale(input, factor)))
    }

    pub fn reshape(&mut self, input: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.node(input)?.value.clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(input)))
    }

    /// Row-wise softmax fused with label-smoothed cross-entropy, averaged over
    /// rows. The output is a scalar node.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        epsilon: f64,
    ) -> Result<NodeId> {
        ops::check_smoothing(epsilon)?;
        let x = &self.node(logits)?.value;
        let width = *x
            .shape()
            .last()
            .ok_or_else(|| Error::shape("softmax_cross_entropy", "no axes"))?;
        let rows = x.len() / width.max(1);
        if rows != targets.len() || rows == 0 {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("{rows} rows but {} targets", targets.len()),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= width) {
            return Err(Error::invalid(format!("target {bad} outside {width} classes")));
        }
        let mut probs = vec![T::zero(); x.len()];
        for (row, dst) in x.data().chunks_exact(width).zip(probs.chunks_exact_mut(width)) {
            ops::softmax_slice(row, dst);
        }
        let mut total = 0.0;
        for (row, &target) in probs.chunks_exact(width).zip(targets) {
            for (s, &p) in row.iter().enumerate() {
                let y = ops::smoothed_target(s, target, epsilon, width);
                if y > 0.0 {
                    total -= y * p.as_f64().max(ops::PROB_FLOOR).ln();
                }
            }
        }
        let loss = total / rows as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite("cross-entropy loss".into()));
        }
        Ok(self.push(
            Tensor::scalar(T::from_f64(loss)),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                epsilon,
                probs,
                width,
            },
        ))
    }

    /// Squared MMD between the sample node and a constant reference sample.
    pub fn mmd(&mut self, sample: NodeId, reference: Tensor<T>, bandwidth: f64) -> Result<NodeId> {
        let x = &self.node(sample)?.value;
        let value = ops::mmd_sq(x, &reference, bandwidth)?;
        Ok(self.push(
            Tensor::scalar(T::from_f64(value)),
            Op::Mmd {
                sample,
                reference,
                bandwidth,
            },
        ))
    }

    /// Propagates d(loss)/d(node) back to every registered parameter.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let root = self.node(loss)?;
        if root.value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got shape {:?}", root.value.shape()),
            ));
        }
        let mut adj: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![T::one()]);
        let mut grads = BTreeMap::new();

        fn accumulate<T: Real>(adj: &mut [Option<Vec<T>>], id: NodeId, g: Vec<T>) {
            match &mut adj[id.0] {
                Some(acc) => {
                    for (a, v) in acc.iter_mut().zip(g) {
                        *a = *a + v;
                    }
                }
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => {
                    let t = Tensor::new(node.value.shape().to_vec(), g)?;
                    match grads.get_mut(p) {
                        None => {
                            grads.insert(*p, t);
                        }
                        Some(acc) => {
                            let acc: &mut Tensor<T> = acc;
                            for (a, v) in acc.data_mut().iter_mut().zip(t.data()) {
                                *a = *a + *v;
                            }
                        }
                    }
                }
                Op::Conv1d {
                    input,
                    kernel,
                    bias,
                    dims,
                    cols,
                } => {
                    let k = self.value(*kernel).data();
                    let (dx, dk, db) = ops::conv_backward(&g, cols, k, *dims);
                    accumulate(&mut adj, *input, dx);
                    accumulate(&mut adj, *kernel, dk);
                    accumulate(&mut adj, *bias, db);
                }
                Op::Dense {
                    input,
                    weights,
                    bias,
                    dims,
                } => {
                    let x = self.value(*input).data();
                    let w = self.value(*weights).data();
                    let (dx, dw, db) = ops::dense_backward(&g, x, w, *dims);
                    accumulate(&mut adj, *input, dx);
                    accumulate(&mut adj, *weights, dw);
                    accumulate(&mut adj, *bias, db);
                }
                Op::Relu(input) => {
                    let dx = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(&gv, &y)| if y > T::zero() { gv } else { T::zero() })
                        .collect();
                    accumulate(&mut adj, *input, dx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Scale(input, factor) => {
                    let f = T::from_f64(*factor);
                    accumulate(&mut adj, *input, g.into_iter().map(|v| v * f).collect());
                }
                Op::Reshape(input) => accumulate(&mut adj, *input, g),
                Op::SoftmaxCrossEntropy {
                    logits,
                    targets,
                    epsilon,
                    probs,
                    width,
                } => {
                    let upstream = g[0].as_f64();
                    let scale = upstream / targets.len() as f64;
                    let mut dx = vec![T::zero(); probs.len()];
                    for ((row, dst), &target) in probs
                        .chunks_exact(*width)
                        .zip(dx.chunks_exact_mut(*width))
                        .zip(targets)
                    {
                        for (s, (&p, d)) in row.iter().zip(dst.iter_mut()).enumerate() {
                            let y = ops::smoothed_target(s, target, *epsilon, *width);
                            *d = T::from_f64((p.as_f64() - y) * scale);
                        }
                    }
                    accumulate(&mut adj, *logits, dx);
                }
                Op::Mmd {
                    sample,
                    reference,
                    bandwidth,
                } => {
                    let x = self.value(*sample);
                    let d = x.shape()[1];
                    let upstream = g[0].as_f64();
                    let dx = ops::mmd_sq_grad_a(x.data(), reference.data(), d, *bandwidth)
                        .into_iter()
                        .map(|v| T::from_f64(v * upstream))
                        .collect();
                    accumulate(&mut adj, *sample, dx);
                }
            }
        }
        // Parameters the loss does not depend on get explicit zero gradients.
        for node in &self.nodes[..=loss.0] {
            if let Op::Param(p) = node.op {
                grads
                    .entry(p)
                    .or_insert_with(|| Tensor::zeros(node.value.shape().to_vec()));
            }
        }
        Ok(Gradients { grads })
    }
}
