//! Reverse-mode autodiff over a flat tape.
//!
//! Operations execute eagerly and record themselves as nodes; creation order
//! is the topological order. `backward` walks the tape in exact reverse,
//! accumulating gradients by summation, so a tensor feeding several consumers
//! receives the sum of all contributions.
//!
//! The whole graph lives in one arena indexed by [`Var`] handles, which keeps
//! everything `Send` without interior mutability.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{self, ConvDims};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub(crate) fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        dims: ConvDims,
    },
    Relu {
        input: Var,
    },
    Add {
        lhs: Var,
        rhs: Var,
    },
    ConcatChannels {
        inputs: Vec<Var>,
    },
    MaxPool2x2 {
        input: Var,
        argmax: Vec<u32>,
    },
    SseLoss {
        pred: Var,
        target: Var,
    },
    Sum {
        input: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
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

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    /// Insert a leaf that does not track gradients (inputs, targets).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// Insert a leaf that accumulates a gradient during `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.node(v).grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    pub fn is_leaf(&self, v: Var) -> bool {
        matches!(self.node(v).op, Op::Leaf)
    }

    /// Leaf vars with `requires_grad` set, in creation order.
    pub fn trainable_leaves(&self) -> Vec<Var> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.requires_grad && matches!(n.op, Op::Leaf))
            .map(|(i, _)| Var(i))
            .collect()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Grouped 2d cross-correlation with zero padding and bias.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Var> {
        let dims = ConvDims::infer(
            self.value(input).shape(),
            self.value(weight).shape(),
            stride,
            padding,
            groups,
        )?;
        let bshape = self.value(bias).shape();
        if bshape != [dims.cout] {
            return Err(Error::Shape(format!(
                "conv2d: bias shape {bshape:?} does not match output channel count {}",
                dims.cout
            )));
        }
        let mut out = Tensor::zeros(&dims.out_shape());
        kernels::conv2d_fwd(
            &dims,
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            out.data_mut(),
        );
        let rg = self.requires_grad(input) || self.requires_grad(weight) || self.requires_grad(bias);
        Ok(self.push(
            out,
            rg,
            Op::Conv2d {
                input,
                weight,
                bias,
                dims,
            },
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let mut out = Tensor::zeros(x.shape());
        kernels::relu_fwd(x.data(), out.data_mut());
        let rg = self.requires_grad(input);
        self.push(out, rg, Op::Relu { input })
    }

    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (a, b) = (self.value(lhs), self.value(rhs));
        if a.shape() != b.shape() {
            return Err(Error::Shape(format!(
                "add: shape {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let mut out = Tensor::zeros(a.shape());
        kernels::add_fwd(a.data(), b.data(), out.data_mut());
        let rg = self.requires_grad(lhs) || self.requires_grad(rhs);
        Ok(self.push(out, rg, Op::Add { lhs, rhs }))
    }

    /// Concatenate along the channel axis; inputs must agree on N, H, W.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::Shape("concat: empty input list".into()));
        }
        let (n0, _, h0, w0) = self.value(inputs[0]).dims4()?;
        let mut c_total = 0;
        for &v in inputs {
            let (n, c, h, w) = self.value(v).dims4()?;
            if n != n0 {
                return Err(Error::Shape(format!(
                    "concat: batch axis mismatch ({n} vs {n0})"
                )));
            }
            if h != h0 || w != w0 {
                return Err(Error::Shape(format!(
                    "concat: spatial axes mismatch ({h}x{w} vs {h0}x{w0})"
                )));
            }
            c_total += c;
        }
        let mut out = Tensor::zeros(&[n0, c_total, h0, w0]);
        let parts: Vec<(&[f32], usize)> = inputs
            .iter()
            .map(|&v| {
                let t = self.value(v);
                (t.data(), t.shape()[1])
            })
            .collect();
        kernels::concat_channels_fwd(&parts, n0, h0, w0, out.data_mut());
        let rg = inputs.iter().any(|&v| self.requires_grad(v));
        Ok(self.push(
            out,
            rg,
            Op::ConcatChannels {
                inputs: inputs.to_vec(),
            },
        ))
    }

    pub fn max_pool_2x2(&mut self, input: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4()?;
        if h % 2 != 0 {
            return Err(Error::Shape(format!("max_pool_2x2: height {h} is odd")));
        }
        if w % 2 != 0 {
            return Err(Error::Shape(format!("max_pool_2x2: width {w} is odd")));
        }
        let mut out = Tensor::zeros(&[n, c, h / 2, w / 2]);
        let mut argmax = vec![0u32; out.numel()];
        kernels::max_pool2x2_fwd(n, c, h, w, self.value(input).data(), out.data_mut(), &mut argmax);
        let rg = self.requires_grad(input);
        Ok(self.push(out, rg, Op::MaxPool2x2 { input, argmax }))
    }

    /// Sum of squared differences over every element; scalar output.
    pub fn sse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(Error::Shape(format!(
                "sse_loss: prediction shape {:?} vs target shape {:?}",
                p.shape(),
                t.shape()
            )));
        }
        let v = kernels::sse_fwd(p.data(), t.data());
        let rg = self.requires_grad(pred) || self.requires_grad(target);
        Ok(self.push(Tensor::scalar(v), rg, Op::SseLoss { pred, target }))
    }

    /// Sum of all elements; scalar output.
    pub fn sum(&mut self, input: Var) -> Var {
        let v = kernels::sum_fwd(self.value(input).data());
        let rg = self.requires_grad(input);
        self.push(Tensor::scalar(v), rg, Op::Sum { input })
    }

    /// Populate gradients of every `requires_grad` node reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Graph(format!(
                "backward: node {} is not part of this graph",
                loss.0
            )));
        }
        let lshape = self.value(loss).shape();
        if self.value(loss).numel() != 1 {
            return Err(Error::Graph(format!(
                "backward requires a scalar loss, got shape {lshape:?}"
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            // Gradients only flow to earlier nodes, so split the table at i.
            let (earlier, rest) = grads.split_at_mut(i);
            let Some(g_out) = rest[0].as_ref() else { continue };
            self.backprop_node(i, g_out, earlier);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads.into_iter()) {
            if node.requires_grad {
                node.grad = g;
            }
        }
        Ok(())
    }

    /// Accumulate into the grad slot of `v`, allocating zeros on first touch.
    fn acc_slot(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f32])) {
        let t = grads[v.0].get_or_insert_with(|| Tensor::zeros(self.nodes[v.0].value.shape()));
        f(t.data_mut());
    }

    fn backprop_node(&self, i: usize, g_out: &Tensor, grads: &mut [Option<Tensor>]) {
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                dims,
            } => {
                let go = g_out.data();
                if needs(*input) {
                    self.acc_slot(grads, *input, |g| {
                        kernels::conv2d_bwd_input(dims, self.value(*weight).data(), go, g)
                    });
                }
                if needs(*weight) {
                    self.acc_slot(grads, *weight, |g| {
                        kernels::conv2d_bwd_weight(dims, self.value(*input).data(), go, g)
                    });
                }
                if needs(*bias) {
                    self.acc_slot(grads, *bias, |g| kernels::conv2d_bwd_bias(dims, go, g));
                }
            }
            Op::Relu { input } => {
                if needs(*input) {
                    self.acc_slot(grads, *input, |g| {
                        kernels::relu_bwd(self.value(*input).data(), g_out.data(), g)
                    });
                }
            }
            Op::Add { lhs, rhs } => {
                for v in [*lhs, *rhs] {
                    if needs(v) {
                        self.acc_slot(grads, v, |g| {
                            for (gi, go) in g.iter_mut().zip(g_out.data()) {
                                *gi += *go;
                            }
                        });
                    }
                }
            }
            Op::ConcatChannels { inputs } => {
                let (n, c_total, h, w) = self.nodes[i].value.dims4().expect("concat output is 4d");
                let plane = h * w;
                let mut c_off = 0;
                for &v in inputs {
                    let c = self.value(v).shape()[1];
                    if needs(v) {
                        self.acc_slot(grads, v, |g| {
                            for n_i in 0..n {
                                let src =
                                    &g_out.data()[(n_i * c_total + c_off) * plane..][..c * plane];
                                let dst = &mut g[n_i * c * plane..][..c * plane];
                                for (gi, go) in dst.iter_mut().zip(src) {
                                    *gi += *go;
                                }
                            }
                        });
                    }
                    c_off += c;
                }
            }
            Op::MaxPool2x2 { input, argmax } => {
                if needs(*input) {
                    self.acc_slot(grads, *input, |g| {
                        kernels::max_pool2x2_bwd(argmax, g_out.data(), g)
                    });
                }
            }
            Op::SseLoss { pred, target } => {
                let go = g_out.data()[0];
                if needs(*pred) {
                    self.acc_slot(grads, *pred, |g| {
                        kernels::sse_bwd(
                            self.value(*pred).data(),
                            self.value(*target).data(),
                            go,
                            Some(g),
                            None,
                        )
                    });
                }
                if needs(*target) {
                    self.acc_slot(grads, *target, |g| {
                        kernels::sse_bwd(
                            self.value(*pred).data(),
                            self.value(*target).data(),
                            go,
                            None,
                            Some(g),
                        )
                    });
                }
            }
            Op::Sum { input } => {
                if needs(*input) {
                    let go = g_out.data()[0];
                    self.acc_slot(grads, *input, |g| {
                        for gi in g {
                            *gi += go;
                        }
                    });
                }
            }
        }
    }

    /// Recompute the scalar value of `loss` in f64, optionally with one leaf
    /// coordinate replaced. Used by the finite-difference checker.
    ///
    /// With `frozen_pattern`, relu masks and pool argmax stay as recorded at
    /// the base point, so the replay evaluates the local linearization the
    /// backward pass differentiates; without it, kinked ops are recomputed
    /// fresh.
    pub fn eval_f64(
        &self,
        loss: Var,
        perturb: Option<(Var, usize, f64)>,
        frozen_pattern: bool,
    ) -> Result<f64> {
        let vals = self.replay_f64(loss, perturb, frozen_pattern)?;
        Ok(vals[loss.0][0])
    }

    fn replay_f64(
        &self,
        loss: Var,
        perturb: Option<(Var, usize, f64)>,
        frozen_pattern: bool,
    ) -> Result<Vec<Vec<f64>>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Graph(format!(
                "eval_f64: node {} is not part of this graph",
                loss.0
            )));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Graph("eval_f64 requires a scalar node".into()));
        }
        let mut vals: Vec<Vec<f64>> = Vec::with_capacity(loss.0 + 1);
        for i in 0..=loss.0 {
            let node = &self.nodes[i];
            let v: Vec<f64> = match &node.op {
                Op::Leaf => {
                    let mut data: Vec<f64> =
                        node.value.data().iter().map(|&x| x as f64).collect();
                    if let Some((pv, coord, value)) = perturb {
                        if pv.0 == i {
                            data[coord] = value;
                        }
                    }
                    data
                }
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    dims,
                } => {
                    let mut out = vec![0.0f64; node.value.numel()];
                    kernels::conv2d_fwd(dims, &vals[input.0], &vals[weight.0], &vals[bias.0], &mut out);
                    out
                }
                Op::Relu { input } => {
                    if frozen_pattern {
                        // Mask from the recorded base-point activations.
                        let base = self.value(*input).data();
                        vals[input.0]
                            .iter()
                            .zip(base)
                            .map(|(&v, &b)| if b > 0.0 { v } else { 0.0 })
                            .collect()
                    } else {
                        let mut out = vec![0.0f64; node.value.numel()];
                        kernels::relu_fwd(&vals[input.0], &mut out);
                        out
                    }
                }
                Op::Add { lhs, rhs } => {
                    let mut out = vec![0.0f64; node.value.numel()];
                    kernels::add_fwd(&vals[lhs.0], &vals[rhs.0], &mut out);
                    out
                }
                Op::ConcatChannels { inputs } => {
                    let (n, _, h, w) = node.value.dims4()?;
                    let parts: Vec<(&[f64], usize)> = inputs
                        .iter()
                        .map(|&v| (vals[v.0].as_slice(), self.value(v).shape()[1]))
                        .collect();
                    let mut out = vec![0.0f64; node.value.numel()];
                    kernels::concat_channels_fwd(&parts, n, h, w, &mut out);
                    out
                }
                Op::MaxPool2x2 { input, argmax } => {
                    if frozen_pattern {
                        argmax.iter().map(|&src| vals[input.0][src as usize]).collect()
                    } else {
                        // Recompute the max fresh: a perturbation may move it.
                        let (n, c, h, w) = self.value(*input).dims4()?;
                        let mut out = vec![0.0f64; node.value.numel()];
                        let mut fresh = vec![0u32; node.value.numel()];
                        kernels::max_pool2x2_fwd(n, c, h, w, &vals[input.0], &mut out, &mut fresh);
                        out
                    }
                }
                Op::SseLoss { pred, target } => {
                    vec![kernels::sse_fwd(&vals[pred.0], &vals[target.0])]
                }
                Op::Sum { input } => vec![kernels::sum_fwd(&vals[input.0])],
            };
            vals.push(v);
        }
        Ok(vals)
    }

    /// Full-precision analytic gradients: replay the forward pass in f64 and
    /// run the same backward kernels in f64. Gradient indexed by node; `None`
    /// where no gradient flows. The activation pattern (relu masks, pool
    /// argmax) is the recorded base-point pattern, exactly as in `backward`.
    pub fn backward_f64(&self, loss: Var) -> Result<Vec<Option<Vec<f64>>>> {
        let vals = self.replay_f64(loss, None, true)?;
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let (earlier, rest) = grads.split_at_mut(i);
            let Some(g_out) = rest[0].as_ref() else { continue };
            let needs = |v: Var| self.nodes[v.0].requires_grad;
            let acc = |slot: &mut [Option<Vec<f64>>], v: Var, f: &mut dyn FnMut(&mut [f64])| {
                let g = slot[v.0].get_or_insert_with(|| vec![0.0f64; self.nodes[v.0].value.numel()]);
                f(g);
            };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    dims,
                } => {
                    if needs(*input) {
                        acc(earlier, *input, &mut |g| {
                            kernels::conv2d_bwd_input(dims, &vals[weight.0], g_out, g)
                        });
                    }
                    if needs(*weight) {
                        acc(earlier, *weight, &mut |g| {
                            kernels::conv2d_bwd_weight(dims, &vals[input.0], g_out, g)
                        });
                    }
                    if needs(*bias) {
                        acc(earlier, *bias, &mut |g| kernels::conv2d_bwd_bias(dims, g_out, g));
                    }
                }
                Op::Relu { input } => {
                    if needs(*input) {
                        let base = self.value(*input).data();
                        acc(earlier, *input, &mut |g| {
                            for ((gi, &b), go) in g.iter_mut().zip(base).zip(g_out) {
                                if b > 0.0 {
                                    *gi += *go;
                                }
                            }
                        });
                    }
                }
                Op::Add { lhs, rhs } => {
                    for v in [*lhs, *rhs] {
                        if needs(v) {
                            acc(earlier, v, &mut |g| {
                                for (gi, go) in g.iter_mut().zip(g_out) {
                                    *gi += *go;
                                }
                            });
                        }
                    }
                }
                Op::ConcatChannels { inputs } => {
                    let (n, c_total, h, w) =
                        self.nodes[i].value.dims4().expect("concat output is 4d");
                    let plane = h * w;
                    let mut c_off = 0;
                    for &v in inputs {
                        let c = self.value(v).shape()[1];
                        if needs(v) {
                            acc(earlier, v, &mut |g| {
                                for n_i in 0..n {
                                    let src =
                                        &g_out[(n_i * c_total + c_off) * plane..][..c * plane];
                                    let dst = &mut g[n_i * c * plane..][..c * plane];
                                    for (gi, go) in dst.iter_mut().zip(src) {
                                        *gi += *go;
                                    }
                                }
                            });
                        }
                        c_off += c;
                    }
                }
                Op::MaxPool2x2 { input, argmax } => {
                    if needs(*input) {
                        acc(earlier, *input, &mut |g| {
                            kernels::max_pool2x2_bwd(argmax, g_out, g)
                        });
                    }
                }
                Op::SseLoss { pred, target } => {
                    let go = g_out[0];
                    if needs(*pred) {
                        acc(earlier, *pred, &mut |g| {
                            kernels::sse_bwd(&vals[pred.0], &vals[target.0], go, Some(g), None)
                        });
                    }
                    if needs(*target) {
                        acc(earlier, *target, &mut |g| {
                            kernels::sse_bwd(&vals[pred.0], &vals[target.0], go, None, Some(g))
                        });
                    }
                }
                Op::Sum { input } => {
                    if needs(*input) {
                        let go = g_out[0];
                        acc(earlier, *input, &mut |g| {
                            for gi in g {
                                *gi += go;
                            }
                        });
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
    use crate::kernels::same_padding;
    use crate::rng::SplitMix64;

    fn rand_tensor(rng: &mut SplitMix64, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.range_f32(-1.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn conv_identity_kernel_passes_input_through() {
        // 1x1 kernel holding the identity over channels, zero bias.
        let mut g = Graph::new();
        let mut rng = SplitMix64::new(3);
        let x = rand_tensor(&mut rng, &[1, 3, 4, 4]);
        let xv = g.input(x.clone());
        let mut w = Tensor::zeros(&[3, 3, 1, 1]);
        for c in 0..3 {
            w.data_mut()[c * 3 + c] = 1.0;
        }
        let wv = g.input(w);
        let bv = g.input(Tensor::zeros(&[3]));
        let y = g.conv2d(xv, wv, bv, 1, 0, 1).unwrap();
        assert_eq!(g.value(y), &x);
    }

    #[test]
    fn conv_zero_input_broadcasts_bias() {
        let mut g = Graph::new();
        let xv = g.input(Tensor::zeros(&[2, 3, 4, 4]));
        let wv = g.input(Tensor::full(&[5, 3, 3, 3], 0.37));
        let bv = g.input(Tensor::from_vec(&[5], vec![1.0, -2.0, 3.0, 0.5, 0.0]).unwrap());
        let y = g.conv2d(xv, wv, bv, 1, 1, 1).unwrap();
        let t = g.value(y);
        for co in 0..5 {
            for n in 0..2 {
                for yy in 0..4 {
                    for xx in 0..4 {
                        assert_eq!(t.at4(n, co, yy, xx), g.value(bv).data()[co]);
                    }
                }
            }
        }
    }

    #[test]
    fn grouped_conv_equals_independent_convs_concatenated() {
        let mut rng = SplitMix64::new(5);
        let groups = 4;
        let x = rand_tensor(&mut rng, &[2, 8, 6, 6]);
        let w = rand_tensor(&mut rng, &[8, 2, 3, 3]);
        let b = rand_tensor(&mut rng, &[8]);

        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let wv = g.input(w.clone());
        let bv = g.input(b.clone());
        let grouped = g.conv2d(xv, wv, bv, 1, 1, groups).unwrap();

        // Slice channels per group and run G dense convs.
        let mut per_group = Vec::new();
        for gi in 0..groups {
            let mut gg = Graph::new();
            let mut xs = Tensor::zeros(&[2, 2, 6, 6]);
            for n in 0..2 {
                for c in 0..2 {
                    for yy in 0..6 {
                        for xx in 0..6 {
                            let v = x.at4(n, gi * 2 + c, yy, xx);
                            xs.data_mut()[((n * 2 + c) * 6 + yy) * 6 + xx] = v;
                        }
                    }
                }
            }
            let ws = Tensor::from_vec(&[2, 2, 3, 3], w.data()[gi * 2 * 18..(gi + 1) * 2 * 18].to_vec())
                .unwrap();
            let bs = Tensor::from_vec(&[2], b.data()[gi * 2..gi * 2 + 2].to_vec()).unwrap();
            let xv = gg.input(xs);
            let wv = gg.input(ws);
            let bv = gg.input(bs);
            let y = gg.conv2d(xv, wv, bv, 1, 1, 1).unwrap();
            per_group.push(gg.value(y).clone());
        }
        for n in 0..2 {
            for co in 0..8 {
                for yy in 0..6 {
                    for xx in 0..6 {
                        let got = g.value(grouped).at4(n, co, yy, xx);
                        let want = per_group[co / 2].at4(n, co % 2, yy, xx);
                        assert!((got - want).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn relu_of_all_negative_is_zero() {
        let mut g = Graph::new();
        let x = g.input(Tensor::full(&[1, 2, 3, 3], -4.2));
        let y = g.relu(x);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn concat_prefix_is_bit_identical() {
        let mut rng = SplitMix64::new(9);
        let a = rand_tensor(&mut rng, &[1, 3, 4, 5]);
        let b = rand_tensor(&mut rng, &[1, 5, 4, 5]);
        let mut g = Graph::new();
        let av = g.input(a.clone());
        let bv = g.input(b.clone());
        let y = g.concat(&[av, bv]).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 8, 4, 5]);
        for c in 0..3 {
            for yy in 0..4 {
                for xx in 0..5 {
                    assert_eq!(g.value(y).at4(0, c, yy, xx).to_bits(), a.at4(0, c, yy, xx).to_bits());
                }
            }
        }
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(&[1, 2, 4, 4]));
        let b = g.input(Tensor::zeros(&[1, 2, 4, 6]));
        let err = g.concat(&[a, b]).unwrap_err();
        assert!(format!("{err}").contains("spatial axes"));
    }

    #[test]
    fn sse_loss_examples() {
        let mut g = Graph::new();
        let a = g.input(Tensor::full(&[2, 3], 1.5));
        let b = g.input(Tensor::full(&[2, 3], 1.5));
        let zero = g.sse_loss(a, b).unwrap();
        assert_eq!(g.value(zero).item().unwrap(), 0.0);

        // pred = target + 1 everywhere on a 2x3 map: one per element.
        let c = g.input(Tensor::full(&[2, 3], 2.5));
        let six = g.sse_loss(c, b).unwrap();
        assert_eq!(g.value(six).item().unwrap(), 6.0);
    }

    #[test]
    fn sse_loss_matches_elementwise_loop_oracle() {
        let mut rng = SplitMix64::new(21);
        let p = rand_tensor(&mut rng, &[2, 4, 5, 3]);
        let t = rand_tensor(&mut rng, &[2, 4, 5, 3]);
        let mut want = 0.0f64;
        for i in 0..p.numel() {
            let d = (p.data()[i] - t.data()[i]) as f64;
            want += d * d;
        }
        let mut g = Graph::new();
        let pv = g.input(p);
        let tv = g.input(t);
        let l = g.sse_loss(pv, tv).unwrap();
        let got = g.value(l).item().unwrap() as f64;
        assert!((got - want).abs() / want.abs() < 1e-6);
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut g = Graph::new();
        let x = g.param(Tensor::full(&[2, 3, 2, 2], 0.25));
        let l = g.sum(x);
        g.backward(l).unwrap();
        assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn backward_fanout_accumulates() {
        // x used twice via add(x, x): gradient doubles.
        let mut g = Graph::new();
        let x = g.param(Tensor::full(&[1, 2, 2, 2], 0.5));
        let y = g.add(x, x).unwrap();
        let l = g.sum(y);
        g.backward(l).unwrap();
        assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2, 2]));
        let err = g.backward(x).unwrap_err();
        assert!(format!("{err}").contains("scalar"));
    }

    #[test]
    fn backward_routes_pool_gradient_to_argmax() {
        let mut g = Graph::new();
        let x = g.param(
            Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 5.0, 2.0, 3.0]).unwrap(),
        );
        let p = g.max_pool_2x2(x).unwrap();
        let l = g.sum(p);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn pool_rejects_odd_dims() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[1, 1, 3, 4]));
        let err = g.max_pool_2x2(x).unwrap_err();
        assert!(format!("{err}").contains("height 3"));
    }

    #[test]
    fn same_padding_preserves_resolution_through_conv() {
        let mut rng = SplitMix64::new(33);
        for k in [1usize, 3, 5, 7] {
            let pad = same_padding(k).unwrap();
            let mut g = Graph::new();
            let x = g.input(rand_tensor(&mut rng, &[1, 2, 6, 6]));
            let w = g.input(rand_tensor(&mut rng, &[2, 2, k, k]));
            let b = g.input(rand_tensor(&mut rng, &[2]));
            let y = g.conv2d(x, w, b, 1, pad, 1).unwrap();
            assert_eq!(g.value(y).shape(), &[1, 2, 6, 6]);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut rng = SplitMix64::new(77);
            let mut g = Graph::new();
            let x = g.input(rand_tensor(&mut rng, &[1, 3, 6, 6]));
            let w = g.param(rand_tensor(&mut rng, &[4, 3, 3, 3]));
            let b = g.param(rand_tensor(&mut rng, &[4]));
            let c = g.conv2d(x, w, b, 1, 1, 1).unwrap();
            let r = g.relu(c);
            let t = g.input(rand_tensor(&mut rng, &[1, 4, 6, 6]));
            let l = g.sse_loss(r, t).unwrap();
            g.backward(l).unwrap();
            (
                g.value(l).data().to_vec(),
                g.grad(w).unwrap().data().to_vec(),
            )
        };
        let (l1, g1) = run();
        let (l2, g2) = run();
        assert_eq!(l1, l2);
        assert!(g1.iter().zip(&g2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
