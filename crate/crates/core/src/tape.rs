//! Reverse-mode differentiation over a recorded forward pass.
//!
//! A [`Tape`] records every operation applied to its variables. Values are
//! computed eagerly; [`Tape::backward`] then walks the record in reverse and
//! accumulates gradients for every node that depends on a leaf created with
//! `requires_grad = true`. One tape is single-threaded and used once.

use crate::error::{Error, Result};
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        cols: Vec<T>,
    },
    MaxPool2 {
        input: Var,
        winners: Vec<u8>,
    },
    AvgPool2 {
        input: Var,
    },
    Upsample2 {
        input: Var,
    },
    Relu {
        input: Var,
    },
    BoundedOut {
        input: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    Crop {
        input: Var,
        top: usize,
        left: usize,
    },
    Select {
        input: Var,
        index: usize,
    },
    Mse {
        pred: Var,
        target: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, v: Var) -> Result<&Node<T>> {
        self.nodes
            .get(v.0)
            .ok_or_else(|| Error::Tape(format!("variable {} is not on this tape", v.0)))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an input. Gradients are only tracked for leaves created with
    /// `requires_grad` and everything computed from them.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        for v in [input, weight, bias] {
            self.node(v)?;
        }
        let (out, cols) = ops::conv2d_same_with_cols(self.value(input), self.value(weight), self.value(bias))?;
        let rg = self.rg(&[input, weight, bias]);
        // the column buffer is only needed for the weight gradient
        let cols = if self.rg(&[weight]) { cols } else { Vec::new() };
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                cols,
            },
            rg,
        ))
    }

    pub fn maxpool2(&mut self, input: Var) -> Result<Var> {
        let (out, winners) = ops::maxpool2(&self.node(input)?.value)?;
        let rg = self.rg(&[input]);
        Ok(self.push(out, Op::MaxPool2 { input, winners }, rg))
    }

    pub fn avgpool2(&mut self, input: Var) -> Result<Var> {
        let out = ops::avgpool2(&self.node(input)?.value)?;
        let rg = self.rg(&[input]);
        Ok(self.push(out, Op::AvgPool2 { input }, rg))
    }

    pub fn upsample2(&mut self, input: Var) -> Result<Var> {
        let out = ops::upsample2(&self.node(input)?.value)?;
        let rg = self.rg(&[input]);
        Ok(self.push(out, Op::Upsample2 { input }, rg))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let out = ops::relu(&self.node(input)?.value);
        let rg = self.rg(&[input]);
        Ok(self.push(out, Op::Relu { input }, rg))
    }

    pub fn bounded_out(&mut self, input: Var) -> Result<Var> {
        let out = ops::bounded_out(&self.node(input)?.value);
        let rg = self.rg(&[input]);
        Ok(self.push(out, Op::BoundedOut { input }, rg))
    }

    /// Channel-wise concatenation of `C_i x H x W` tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "nothing to concatenate"))?;
        let (_, h, w) = self.node(*first)?.value.chw()?;
        let mut data = Vec::new();
        let mut channels = 0;
        for &p in parts {
            let (c, ph, pw) = self.node(p)?.value.chw()?;
            if (ph, pw) != (h, w) {
                return Err(Error::shape("concat", format!("spatial {ph}x{pw} vs {h}x{w}")));
            }
            channels += c;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::from_vec(&[channels, h, w], data)?;
        let rg = self.rg(parts);
        Ok(self.push(out, Op::Concat { parts: parts.to_vec() }, rg))
    }

    /// Spatial window `[top, top+height) x [left, left+width)` of every channel.
    pub fn crop(&mut self, input: Var, top: usize, left: usize, height: usize, width: usize) -> Result<Var> {
        let (c, h, w) = self.node(input)?.value.chw()?;
        if top + height > h || left + width > w {
            return Err(Error::shape(
                "crop",
                format!("window {height}x{width} at ({top},{left}) exceeds {h}x{w}"),
            ));
        }
        let src = self.value(input).data();
        let mut data = Vec::with_capacity(c * height * width);
        for ch in 0..c {
            for y in top..top + height {
                let row = (ch * h + y) * w;
                data.extend_from_slice(&src[row + left..row + left + width]);
            }
        }
        let out = Tensor::from_vec(&[c, height, width], data)?;
        let rg = self.rg(&[input]);
        Ok(self.push(out, Op::Crop { input, top, left }, rg))
    }

    /// One element (flat index) as a scalar.
    pub fn select(&mut self, input: Var, index: usize) -> Result<Var> {
        let n = self.node(input)?.value.len();
        if index >= n {
            return Err(Error::shape("select", format!("index {index} >= {n}")));
        }
        let out = Tensor::scalar(self.value(input).data()[index]);
        let rg = self.rg(&[input]);
        Ok(self.push(out, Op::Select { input, index }, rg))
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.node(pred)?;
        self.node(target)?;
        let loss = ops::mse_loss(self.value(pred), self.value(target))?;
        let rg = self.rg(&[pred, target]);
        Ok(self.push(Tensor::scalar(loss), Op::Mse { pred, target }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mut out = self.node(a)?.value.clone();
        out.add_assign(&self.node(b)?.value)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    /// Gradient of the last `backward` target with respect to `v`, if `v`
    /// took part in it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn accumulate(grads: &mut [Option<Tensor<T>>], shape: &[usize], v: Var, g: Vec<T>) {
        match &mut grads[v.0] {
            Some(existing) => {
                for (a, b) in existing.data_mut().iter_mut().zip(g) {
                    *a += b;
                }
            }
            slot @ None => {
                *slot = Some(Tensor::from_vec(shape, g).expect("gradient shape"));
            }
        }
    }

    /// Back-propagates from the scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Tape("backward called before any forward pass".into()));
        }
        let root = self.node(loss)?;
        if root.value.len() != 1 {
            return Err(Error::Tape(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_vec(root.value.shape(), vec![T::one()])?);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let gd = g.data();
            let wants = |v: &Var| self.nodes[v.0].requires_grad;
            let shape_of = |v: &Var| self.nodes[v.0].value.shape().to_vec();
            match &node.op {
                Op::Leaf => {}
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    cols,
                } => {
                    let chw = self.nodes[input.0].value.chw()?;
                    let w = &self.nodes[weight.0].value;
                    if wants(weight) || wants(bias) {
                        let cg = ops::conv2d_backward(gd, cols, w, chw, wants(input));
                        if wants(weight) {
                            Self::accumulate(&mut grads, w.shape(), *weight, cg.weight);
                        }
                        if wants(bias) {
                            Self::accumulate(&mut grads, &shape_of(bias), *bias, cg.bias);
                        }
                        if let Some(gi) = cg.input {
                            Self::accumulate(&mut grads, &shape_of(input), *input, gi);
                        }
                    } else if wants(input) {
                        let (c, h, wd) = chw;
                        let o = w.shape()[0];
                        let ck = c * 9;
                        let hw = h * wd;
                        let mut gcols = vec![T::zero(); ck * hw];
                        T::gemm(ck, o, hw, T::one(), w.data(), 1, ck, gd, hw, 1, T::zero(), &mut gcols);
                        let gi = ops::col2im(&gcols, c, h, wd);
                        Self::accumulate(&mut grads, &shape_of(input), *input, gi);
                    }
                }
                Op::MaxPool2 { input, winners } => {
                    if wants(input) {
                        let chw = self.nodes[input.0].value.chw()?;
                        let gi = ops::maxpool2_backward(gd, winners, chw);
                        Self::accumulate(&mut grads, &shape_of(input), *input, gi);
                    }
                }
                Op::AvgPool2 { input } => {
                    if wants(input) {
                        let chw = self.nodes[input.0].value.chw()?;
                        let gi = ops::avgpool2_backward(gd, chw);
                        Self::accumulate(&mut grads, &shape_of(input), *input, gi);
                    }
                }
                Op::Upsample2 { input } => {
                    if wants(input) {
                        let chw = self.nodes[input.0].value.chw()?;
                        let gi = ops::upsample2_backward(gd, chw);
                        Self::accumulate(&mut grads, &shape_of(input), *input, gi);
                    }
                }
                Op::Relu { input } => {
                    if wants(input) {
                        let x = self.nodes[input.0].value.data();
                        let gi = gd
                            .iter()
                            .zip(x)
                            .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                            .collect();
                        Self::accumulate(&mut grads, &shape_of(input), *input, gi);
                    }
                }
                Op::BoundedOut { input } => {
                    if wants(input) {
                        let gi = gd
                            .iter()
                            .zip(node.value.data())
                            .map(|(&g, &y)| g * ops::bounded_out_grad(y))
                            .collect();
                        Self::accumulate(&mut grads, &shape_of(input), *input, gi);
                    }
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        if wants(p) {
                            Self::accumulate(&mut grads, &shape_of(p), *p, gd[offset..offset + n].to_vec());
                        }
                        offset += n;
                    }
                }
                Op::Crop { input, top, left } => {
                    if wants(input) {
                        let (c, h, w) = self.nodes[input.0].value.chw()?;
                        let (_, ch, cw) = node.value.chw()?;
                        let mut gi = vec![T::zero(); c * h * w];
                        for k in 0..c {
                            for y in 0..ch {
                                let dst = (k * h + top + y) * w + left;
                                gi[dst..dst + cw].copy_from_slice(&gd[(k * ch + y) * cw..(k * ch + y + 1) * cw]);
                            }
                        }
                        Self::accumulate(&mut grads, &shape_of(input), *input, gi);
                    }
                }
                Op::Select { input, index } => {
                    if wants(input) {
                        let mut gi = vec![T::zero(); self.nodes[input.0].value.len()];
                        gi[*index] = gd[0];
                        Self::accumulate(&mut grads, &shape_of(input), *input, gi);
                    }
                }
                Op::Mse { pred, target } => {
                    let p = self.nodes[pred.0].value.data();
                    let t = self.nodes[target.0].value.data();
                    let scale = (T::one() + T::one()) * gd[0] / T::from_usize(p.len()).unwrap();
                    if wants(pred) {
                        let gp = p.iter().zip(t).map(|(&p, &t)| scale * (p - t)).collect();
                        Self::accumulate(&mut grads, &shape_of(pred), *pred, gp);
                    }
                    if wants(target) {
                        let gt = p.iter().zip(t).map(|(&p, &t)| scale * (t - p)).collect();
                        Self::accumulate(&mut grads, &shape_of(target), *target, gt);
                    }
                }
                Op::Add { a, b } => {
                    if wants(a) {
                        Self::accumulate(&mut grads, &shape_of(a), *a, gd.to_vec());
                    }
                    if wants(b) {
                        Self::accumulate(&mut grads, &shape_of(b), *b, gd.to_vec());
                    }
                }
            }
            // keep leaf gradients for the caller; interior ones are dropped
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        self.grads = grads;
        Ok(())
    }
}
