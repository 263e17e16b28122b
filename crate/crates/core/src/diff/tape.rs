//! Reverse-mode differentiation over an append-only arena of nodes.
//!
//! Layout conventions:
//! - image batches are `[B, C, H, W]`, row-major
//! - dense activations are `[B, D]`
//! - conv kernels are `[F, C, K, K]`, dense weights `[D_in, D_out]`
//!
//! Every forward op is a plain function so the inference path can run without
//! recording; the tape wraps the same functions and stores what backward
//! needs (max-pool argmax indices, softmax probabilities, labels).
//! Backward walks the arena in strict reverse order and accumulates into
//! per-node buffers sequentially, so gradients are bit-identical across runs
//! regardless of how many worker threads the surrounding code uses.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub type NodeId = usize;

enum Op<T: Scalar> {
    Leaf,
    Dense {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    },
    Relu {
        input: NodeId,
    },
    MaxPool2d {
        input: NodeId,
        argmax: Vec<u32>,
    },
    Flatten {
        input: NodeId,
    },
    Softmax {
        input: NodeId,
    },
    CrossEntropy {
        probs: NodeId,
        labels: Vec<usize>,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Tensor<T>,
    },
    LogitMargin {
        logits: NodeId,
        target: usize,
        other: usize,
    },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recorded computation graph; create one per forward/backward pass.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.nodes.len() - 1
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn dense(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let out = dense_forward(self.value(input), self.value(weight), self.value(bias))?;
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            out,
            Op::Dense {
                input,
                weight,
                bias,
            },
            needs,
        ))
    }

    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let out = conv2d_forward(
            self.value(input),
            self.value(kernel),
            self.value(bias),
            stride,
            padding,
        )?;
        let needs = self.needs(input) || self.needs(kernel) || self.needs(bias);
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                padding,
            },
            needs,
        ))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let out = relu_forward(self.value(input));
        let needs = self.needs(input);
        self.push(out, Op::Relu { input }, needs)
    }

    pub fn maxpool2d(&mut self, input: NodeId, size: usize, stride: usize) -> Result<NodeId> {
        let (out, argmax) = maxpool_forward(self.value(input), size, stride)?;
        let needs = self.needs(input);
        Ok(self.push(out, Op::MaxPool2d { input, argmax }, needs))
    }

    pub fn flatten(&mut self, input: NodeId) -> Result<NodeId> {
        let out = flatten_forward(self.value(input))?;
        let needs = self.needs(input);
        Ok(self.push(out, Op::Flatten { input }, needs))
    }

    pub fn softmax(&mut self, input: NodeId) -> Result<NodeId> {
        let out = softmax_forward(self.value(input))?;
        let needs = self.needs(input);
        Ok(self.push(out, Op::Softmax { input }, needs))
    }

    /// Mean negative log-likelihood of `labels` under probability rows.
    pub fn cross_entropy(&mut self, probs: NodeId, labels: &[usize]) -> Result<NodeId> {
        let out = cross_entropy_forward(self.value(probs), labels)?;
        let needs = self.needs(probs);
        Ok(self.push(
            out,
            Op::CrossEntropy {
                probs,
                labels: labels.to_vec(),
            },
            needs,
        ))
    }

    /// Fused softmax + cross-entropy over logit rows, mean over the batch.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let (loss, probs) = softmax_xent_forward(self.value(logits), labels)?;
        let needs = self.needs(logits);
        Ok(self.push(
            loss,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            needs,
        ))
    }

    /// Scalar difference `z[0, target] - z[0, other]` of a single logit row.
    ///
    /// This is the objective boundary-seeking attacks differentiate: its
    /// zero crossing is the decision boundary between the two classes.
    pub fn logit_margin(&mut self, logits: NodeId, target: usize, other: usize) -> Result<NodeId> {
        let z = self.value(logits);
        let [b_n, k_n] = z.dims2("logit-margin")?;
        if b_n != 1 {
            return Err(Error::shape(
                "logit-margin",
                format!("expected a single row of logits, got batch of {b_n}"),
            ));
        }
        if target >= k_n || other >= k_n || target == other {
            return Err(Error::shape(
                "logit-margin",
                format!("class pair ({target}, {other}) invalid for {k_n} logits"),
            ));
        }
        let value = Tensor::new(vec![1], vec![z.data()[target] - z.data()[other]])?;
        let needs = self.needs(logits);
        Ok(self.push(
            value,
            Op::LogitMargin {
                logits,
                target,
                other,
            },
            needs,
        ))
    }

    /// Backpropagates from a scalar loss node, returning per-node gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let loss_node = &self.nodes[loss];
        if loss_node.value.len() != 1 {
            return Err(Error::NonScalarLoss(loss_node.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !loss_node.needs_grad {
            return Ok(Gradients { grads });
        }
        grads[loss] = Some(Tensor::filled(loss_node.value.shape(), T::one()));

        for id in (0..=loss).rev() {
            let Some(gout) = grads[id].clone() else {
                continue;
            };
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::Dense {
                    input,
                    weight,
                    bias,
                } => {
                    let x = self.value(*input);
                    let w = self.value(*weight);
                    let [b_n, d_in] = x.dims2("dense-backward")?;
                    let d_out = w.shape()[1];
                    if self.needs(*input) {
                        let mut dx = Tensor::zeros(x.shape());
                        T::gemm(
                            b_n,
                            d_out,
                            d_in,
                            T::one(),
                            gout.data(),
                            d_out as isize,
                            1,
                            w.data(),
                            1,
                            d_out as isize,
                            T::zero(),
                            dx.data_mut(),
                            d_in as isize,
                            1,
                        );
                        accumulate(&mut grads, *input, dx);
                    }
                    if self.needs(*weight) {
                        let mut dw = Tensor::zeros(w.shape());
                        T::gemm(
                            d_in,
                            b_n,
                            d_out,
                            T::one(),
                            x.data(),
                            1,
                            d_in as isize,
                            gout.data(),
                            d_out as isize,
                            1,
                            T::zero(),
                            dw.data_mut(),
                            d_out as isize,
                            1,
                        );
                        accumulate(&mut grads, *weight, dw);
                    }
                    if self.needs(*bias) {
                        let mut db = Tensor::zeros(&[d_out]);
                        for row in gout.data().chunks_exact(d_out) {
                            for (acc, &g) in db.data_mut().iter_mut().zip(row) {
                                *acc = *acc + g;
                            }
                        }
                        accumulate(&mut grads, *bias, db);
                    }
                }
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    stride,
                    padding,
                } => {
                    let x = self.value(*input);
                    let k = self.value(*kernel);
                    if self.needs(*input) {
                        let dx = conv2d_backward_input(x.shape(), k, &gout, *stride, *padding)?;
                        accumulate(&mut grads, *input, dx);
                    }
                    if self.needs(*kernel) {
                        let dk = conv2d_backward_kernel(x, k.shape(), &gout, *stride, *padding)?;
                        accumulate(&mut grads, *kernel, dk);
                    }
                    if self.needs(*bias) {
                        let [_, f_n, oh, ow] = gout.dims4("conv2d-backward")?;
                        let mut db = Tensor::zeros(&[f_n]);
                        let plane = oh * ow;
                        for sample in gout.data().chunks_exact(f_n * plane) {
                            for (f, chan) in sample.chunks_exact(plane).enumerate() {
                                let mut s = T::zero();
                                for &g in chan {
                                    s = s + g;
                                }
                                db.data_mut()[f] = db.data()[f] + s;
                            }
                        }
                        accumulate(&mut grads, *bias, db);
                    }
                }
                Op::Relu { input } => {
                    if self.needs(*input) {
                        let out = self.value(id);
                        let dx = gout.zip_map(out, "relu-backward", |g, o| {
                            if o > T::zero() {
                                g
                            } else {
                                T::zero()
                            }
                        })?;
                        accumulate(&mut grads, *input, dx);
                    }
                }
                Op::MaxPool2d { input, argmax, .. } => {
                    if self.needs(*input) {
                        let x = self.value(*input);
                        let [_, _, h, w] = x.dims4("maxpool-backward")?;
                        let plane = h * w;
                        let out_plane = {
                            let [_, _, oh, ow] = self.value(id).dims4("maxpool-backward")?;
                            oh * ow
                        };
                        let mut dx = Tensor::zeros(x.shape());
                        let dxd = dx.data_mut();
                        for (cell, (&g, &am)) in gout.data().iter().zip(argmax).enumerate() {
                            let chan = cell / out_plane;
                            let at = chan * plane + am as usize;
                            dxd[at] = dxd[at] + g;
                        }
                        accumulate(&mut grads, *input, dx);
                    }
                }
                Op::Flatten { input } => {
                    if self.needs(*input) {
                        let dx = gout.reshaped(self.value(*input).shape())?;
                        accumulate(&mut grads, *input, dx);
                    }
                }
                Op::Softmax { input } => {
                    if self.needs(*input) {
                        let p = self.value(id);
                        let [b_n, k_n] = p.dims2("softmax-backward")?;
                        let mut dx = Tensor::zeros(p.shape());
                        for b in 0..b_n {
                            let row = &p.data()[b * k_n..(b + 1) * k_n];
                            let grow = &gout.data()[b * k_n..(b + 1) * k_n];
                            let mut dot = T::zero();
                            for (pk, gk) in row.iter().zip(grow) {
                                dot = dot + *pk * *gk;
                            }
                            for (k, slot) in dx.data_mut()[b * k_n..(b + 1) * k_n]
                                .iter_mut()
                                .enumerate()
                            {
                                *slot = row[k] * (grow[k] - dot);
                            }
                        }
                        accumulate(&mut grads, *input, dx);
                    }
                }
                Op::CrossEntropy { probs, labels } => {
                    if self.needs(*probs) {
                        let p = self.value(*probs);
                        let [b_n, k_n] = p.dims2("cross-entropy-backward")?;
                        let g0 = gout.scalar().expect("loss is scalar");
                        let tiny = T::of_f64(1e-12);
                        let scale = T::of_f64(b_n as f64);
                        let mut dp = Tensor::zeros(p.shape());
                        for (b, &y) in labels.iter().enumerate() {
                            let pv = p.data()[b * k_n + y].max(tiny);
                            dp.data_mut()[b * k_n + y] = -g0 / (scale * pv);
                        }
                        accumulate(&mut grads, *probs, dp);
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    if self.needs(*logits) {
                        let [b_n, k_n] = probs.dims2("softmax-cross-entropy-backward")?;
                        let g0 = gout.scalar().expect("loss is scalar");
                        let scale = T::of_f64(b_n as f64);
                        let mut dz = Tensor::zeros(probs.shape());
                        for b in 0..b_n {
                            let y = labels[b];
                            for k in 0..k_n {
                                let indicator = if k == y { T::one() } else { T::zero() };
                                dz.data_mut()[b * k_n + k] =
                                    g0 * (probs.data()[b * k_n + k] - indicator) / scale;
                            }
                        }
                        accumulate(&mut grads, *logits, dz);
                    }
                }
                Op::LogitMargin {
                    logits,
                    target,
                    other,
                } => {
                    if self.needs(*logits) {
                        let g0 = gout.scalar().expect("margin is scalar");
                        let mut dz = Tensor::zeros(self.value(*logits).shape());
                        dz.data_mut()[*target] = g0;
                        dz.data_mut()[*other] = -g0;
                        accumulate(&mut grads, *logits, dz);
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) {
    match &mut grads[id] {
        Some(existing) => {
            for (slot, add) in existing.data_mut().iter_mut().zip(g.data()) {
                *slot = *slot + *add;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<T>> {
        self.grads.get_mut(id).and_then(|g| g.take())
    }

    /// Gradient of `id`, or zeros when the loss does not depend on it.
    pub fn get_or_zeros(&self, id: NodeId, shape: &[usize]) -> Tensor<T> {
        match self.get(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape),
        }
    }
}

// ---------------------------------------------------------------------------
// Forward kernels (shared by the tape and the inference-only path)
// ---------------------------------------------------------------------------

pub(crate) fn dense_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [b_n, d_in] = x.dims2("dense")?;
    let [wd_in, d_out] = w.dims2("dense")?;
    if wd_in != d_in || b.shape() != [d_out] {
        return Err(Error::shape(
            "dense",
            format!(
                "input {:?} weight {:?} bias {:?}",
                x.shape(),
                w.shape(),
                b.shape()
            ),
        ));
    }
    let mut out = Tensor::zeros(&[b_n, d_out]);
    for row in out.data_mut().chunks_exact_mut(d_out) {
        row.copy_from_slice(b.data());
    }
    T::gemm(
        b_n,
        d_in,
        d_out,
        T::one(),
        x.data(),
        d_in as isize,
        1,
        w.data(),
        d_out as isize,
        1,
        T::one(),
        out.data_mut(),
        d_out as isize,
        1,
    );
    Ok(out)
}

fn conv_out_side(side: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = side + 2 * padding;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Unrolls one sample into a `[C*K*K, OH*OW]` column matrix.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    xs: &[T],
    c_n: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    col: &mut [T],
) {
    let fast = padding == 0 && stride == 1;
    for c in 0..c_n {
        for ki in 0..k {
            for kj in 0..k {
                let row = ((c * k + ki) * k + kj) * (oh * ow);
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - padding as isize;
                    let dst = &mut col[row + oy * ow..row + (oy + 1) * ow];
                    if iy < 0 || iy as usize >= h {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src_row = (c * h + iy as usize) * w;
                    if fast {
                        dst.copy_from_slice(&xs[src_row + kj..src_row + kj + ow]);
                    } else {
                        for (ox, slot) in dst.iter_mut().enumerate() {
                            let ix = (ox * stride + kj) as isize - padding as isize;
                            *slot = if ix < 0 || ix as usize >= w {
                                T::zero()
                            } else {
                                xs[src_row + ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds a `[C*K*K, OH*OW]` column gradient back onto one sample.
#[allow(clippy::too_many_arguments)]
fn col2im_add<T: Scalar>(
    col: &[T],
    c_n: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    dxs: &mut [T],
) {
    for c in 0..c_n {
        for ki in 0..k {
            for kj in 0..k {
                let row = ((c * k + ki) * k + kj) * (oh * ow);
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - padding as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    let dst_row = (c * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * stride + kj) as isize - padding as isize;
                        if ix < 0 || ix as usize >= w {
                            continue;
                        }
                        let at = dst_row + ix as usize;
                        dxs[at] = dxs[at] + col[row + oy * ow + ox];
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let [b_n, c_n, h, w] = x.dims4("conv2d")?;
    let kshape = kernel.shape();
    if kshape.len() != 4 || kshape[1] != c_n || kshape[2] != kshape[3] {
        return Err(Error::shape(
            "conv2d",
            format!("kernel {:?} does not fit input {:?}", kshape, x.shape()),
        ));
    }
    let (f_n, k) = (kshape[0], kshape[2]);
    if bias.shape() != [f_n] {
        return Err(Error::shape(
            "conv2d",
            format!("bias {:?} does not fit kernel {:?}", bias.shape(), kshape),
        ));
    }
    let (oh, ow) = match (
        conv_out_side(h, k, stride, padding),
        conv_out_side(w, k, stride, padding),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::shape(
                "conv2d",
                format!("window {k}x{k} stride {stride} too large for {h}x{w}"),
            ))
        }
    };

    let ckk = c_n * k * k;
    let plane = oh * ow;
    let mut out = Tensor::zeros(&[b_n, f_n, oh, ow]);
    let mut col = vec![T::zero(); ckk * plane];
    let sample_in = c_n * h * w;
    let sample_out = f_n * plane;
    for b in 0..b_n {
        im2col(
            &x.data()[b * sample_in..(b + 1) * sample_in],
            c_n,
            h,
            w,
            k,
            stride,
            padding,
            oh,
            ow,
            &mut col,
        );
        let out_s = &mut out.data_mut()[b * sample_out..(b + 1) * sample_out];
        for (f, chan) in out_s.chunks_exact_mut(plane).enumerate() {
            chan.fill(bias.data()[f]);
        }
        T::gemm(
            f_n,
            ckk,
            plane,
            T::one(),
            kernel.data(),
            ckk as isize,
            1,
            &col,
            plane as isize,
            1,
            T::one(),
            out_s,
            plane as isize,
            1,
        );
    }
    Ok(out)
}

fn conv2d_backward_input<T: Scalar>(
    x_shape: &[usize],
    kernel: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (b_n, c_n, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (f_n, k) = (kernel.shape()[0], kernel.shape()[2]);
    let [_, _, oh, ow] = dy.dims4("conv2d-backward")?;
    let ckk = c_n * k * k;
    let plane = oh * ow;
    let mut dx = Tensor::zeros(x_shape);
    let mut dcol = vec![T::zero(); ckk * plane];
    let sample_in = c_n * h * w;
    let sample_out = f_n * plane;
    for b in 0..b_n {
        let dy_s = &dy.data()[b * sample_out..(b + 1) * sample_out];
        T::gemm(
            ckk,
            f_n,
            plane,
            T::one(),
            kernel.data(),
            1,
            ckk as isize,
            dy_s,
            plane as isize,
            1,
            T::zero(),
            &mut dcol,
            plane as isize,
            1,
        );
        col2im_add(
            &dcol,
            c_n,
            h,
            w,
            k,
            stride,
            padding,
            oh,
            ow,
            &mut dx.data_mut()[b * sample_in..(b + 1) * sample_in],
        );
    }
    Ok(dx)
}

fn conv2d_backward_kernel<T: Scalar>(
    x: &Tensor<T>,
    k_shape: &[usize],
    dy: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let [b_n, c_n, h, w] = x.dims4("conv2d-backward")?;
    let (f_n, k) = (k_shape[0], k_shape[2]);
    let [_, _, oh, ow] = dy.dims4("conv2d-backward")?;
    let ckk = c_n * k * k;
    let plane = oh * ow;
    let mut dk = Tensor::zeros(k_shape);
    let mut col = vec![T::zero(); ckk * plane];
    let sample_in = c_n * h * w;
    let sample_out = f_n * plane;
    for b in 0..b_n {
        im2col(
            &x.data()[b * sample_in..(b + 1) * sample_in],
            c_n,
            h,
            w,
            k,
            stride,
            padding,
            oh,
            ow,
            &mut col,
        );
        T::gemm(
            f_n,
            plane,
            ckk,
            T::one(),
            &dy.data()[b * sample_out..(b + 1) * sample_out],
            plane as isize,
            1,
            &col,
            1,
            plane as isize,
            T::one(),
            dk.data_mut(),
            ckk as isize,
            1,
        );
    }
    Ok(dk)
}

pub(crate) fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

pub(crate) fn maxpool_forward<T: Scalar>(
    x: &Tensor<T>,
    size: usize,
    stride: usize,
) -> Result<(Tensor<T>, Vec<u32>)> {
    let [b_n, c_n, h, w] = x.dims4("maxpool2d")?;
    let (oh, ow) = match (
        conv_out_side(h, size, stride, 0),
        conv_out_side(w, size, stride, 0),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::shape(
                "maxpool2d",
                format!("window {size} stride {stride} too large for {h}x{w}"),
            ))
        }
    };
    let mut out = Tensor::zeros(&[b_n, c_n, oh, ow]);
    let mut argmax = vec![0u32; b_n * c_n * oh * ow];
    let od = out.data_mut();
    let mut cell = 0;
    for bc in 0..b_n * c_n {
        let plane = &x.data()[bc * h * w..(bc + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                // First maximum in row-major scan order wins ties.
                let mut best = plane[oy * stride * w + ox * stride];
                let mut best_at = (oy * stride) * w + ox * stride;
                for ky in 0..size {
                    for kx in 0..size {
                        let iy = oy * stride + ky;
                        let ix = ox * stride + kx;
                        let v = plane[iy * w + ix];
                        if v > best {
                            best = v;
                            best_at = iy * w + ix;
                        }
                    }
                }
                od[cell] = best;
                argmax[cell] = best_at as u32;
                cell += 1;
            }
        }
    }
    Ok((out, argmax))
}

pub(crate) fn flatten_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape().is_empty() {
        return Err(Error::shape("flatten", "scalar input".to_string()));
    }
    let b_n = x.shape()[0];
    let rest: usize = x.shape()[1..].iter().product();
    x.reshaped(&[b_n, rest])
}

pub(crate) fn softmax_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [b_n, k_n] = x.dims2("softmax")?;
    if k_n == 0 {
        return Err(Error::shape("softmax", "zero-width rows".to_string()));
    }
    let mut out = Tensor::zeros(&[b_n, k_n]);
    for (row, orow) in x
        .data()
        .chunks_exact(k_n)
        .zip(out.data_mut().chunks_exact_mut(k_n))
    {
        let mut m = row[0];
        for &v in row {
            m = m.max(v);
        }
        let mut sum = T::zero();
        for (slot, &v) in orow.iter_mut().zip(row) {
            let e = (v - m).exp();
            *slot = e;
            sum = sum + e;
        }
        for slot in orow.iter_mut() {
            *slot = *slot / sum;
        }
    }
    Ok(out)
}

pub(crate) fn cross_entropy_forward<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[usize],
) -> Result<Tensor<T>> {
    let [b_n, k_n] = probs.dims2("cross-entropy")?;
    check_labels(b_n, k_n, labels, "cross-entropy")?;
    let tiny = T::of_f64(1e-12);
    let mut total = T::zero();
    for (b, &y) in labels.iter().enumerate() {
        total = total - probs.data()[b * k_n + y].max(tiny).ln();
    }
    let loss = total / T::of_f64(b_n as f64);
    Tensor::new(vec![1], vec![loss])
}

pub(crate) fn softmax_xent_forward<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(Tensor<T>, Tensor<T>)> {
    let [b_n, k_n] = logits.dims2("softmax-cross-entropy")?;
    check_labels(b_n, k_n, labels, "softmax-cross-entropy")?;
    let probs = softmax_forward(logits)?;
    let mut total = T::zero();
    for (b, &y) in labels.iter().enumerate() {
        let row = &logits.data()[b * k_n..(b + 1) * k_n];
        let mut m = row[0];
        for &v in row {
            m = m.max(v);
        }
        let mut se = T::zero();
        for &v in row {
            se = se + (v - m).exp();
        }
        total = total + se.ln() + m - row[y];
    }
    let loss = total / T::of_f64(b_n as f64);
    Ok((Tensor::new(vec![1], vec![loss])?, probs))
}

fn check_labels(b_n: usize, k_n: usize, labels: &[usize], op: &'static str) -> Result<()> {
    if labels.len() != b_n {
        return Err(Error::shape(
            op,
            format!("{} rows but {} labels", b_n, labels.len()),
        ));
    }
    if b_n == 0 {
        return Err(Error::shape(op, "empty batch".to_string()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k_n) {
        return Err(Error::shape(op, format!("label {bad} out of {k_n} classes")));
    }
    Ok(())
}
