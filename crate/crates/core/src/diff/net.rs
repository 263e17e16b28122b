//! Feed-forward network container: a layer list plus an ordered, named
//! parameter collection, with taped and inference-only forward paths.

use rand::Rng;

use super::tape::{self, NodeId, Tape};
use super::tensor::{stack, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::{next_gaussian, rng_from};

/// One layer of a sequential convolutional classifier.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        size: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        out_features: usize,
    },
}

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<T: Scalar> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Parameters<T> {
    pub fn new(entries: Vec<(String, Tensor<T>)>) -> Self {
        Parameters { entries }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        Parameters {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast()))
                .collect(),
        }
    }

    pub fn into_entries(self) -> Vec<(String, Tensor<T>)> {
        self.entries
    }
}

/// A sequential network bound to a fixed input shape `[C, H, W]`.
#[derive(Clone, Debug)]
pub struct Network<T: Scalar> {
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    params: Parameters<T>,
}

/// Node handles returned by a taped forward pass.
pub struct TapedForward {
    pub input: NodeId,
    pub params: Vec<NodeId>,
    pub logits: NodeId,
}

impl<T: Scalar> Network<T> {
    /// Builds a network with freshly initialized parameters (He-style normal
    /// weights, zero biases) drawn from a stream seeded by `seed`.
    pub fn init(input_shape: [usize; 3], layers: Vec<LayerSpec>, seed: u64) -> Result<Network<T>> {
        let shapes = parameter_shapes(input_shape, &layers)?;
        let mut rng = rng_from(seed);
        let entries = shapes
            .into_iter()
            .map(|(name, shape, fan_in)| {
                let tensor = if name.ends_with(".bias") {
                    Tensor::zeros(&shape)
                } else {
                    let std = (2.0 / fan_in as f64).sqrt();
                    let data = (0..shape.iter().product::<usize>())
                        .map(|_| T::of_f64(next_gaussian(&mut rng) * std))
                        .collect();
                    Tensor::new(shape, data).expect("shape/data consistent by construction")
                };
                (name, tensor)
            })
            .collect();
        Ok(Network {
            input_shape,
            layers,
            params: Parameters::new(entries),
        })
    }

    /// Wraps existing parameters, validating names and shapes against the
    /// layer list.
    pub fn from_parameters(
        input_shape: [usize; 3],
        layers: Vec<LayerSpec>,
        params: Parameters<T>,
    ) -> Result<Network<T>> {
        let shapes = parameter_shapes(input_shape, &layers)?;
        if shapes.len() != params.len() {
            return Err(Error::shape(
                "network",
                format!("expected {} parameter tensors, got {}", shapes.len(), params.len()),
            ));
        }
        for ((name, shape, _), (got_name, got)) in shapes.iter().zip(params.iter()) {
            if name != got_name || shape.as_slice() != got.shape() {
                return Err(Error::shape(
                    "network",
                    format!(
                        "parameter {got_name} {:?} does not match layer plan {name} {:?}",
                        got.shape(),
                        shape
                    ),
                ));
            }
        }
        if !params.all_finite() {
            return Err(Error::Checkpoint(
                "parameters contain non-finite values".to_string(),
            ));
        }
        Ok(Network {
            input_shape,
            layers,
            params,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &Parameters<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters<T> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape,
            layers: self.layers.clone(),
            params: self.params.cast(),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let [_, c, h, w] = x.dims4("forward")?;
        if [c, h, w] != self.input_shape {
            return Err(Error::shape(
                "forward",
                format!(
                    "batch {:?} does not match network input {:?}",
                    x.shape(),
                    self.input_shape
                ),
            ));
        }
        Ok(())
    }

    /// Records a forward pass on `tape`. `input_grad` / `param_grad` control
    /// which leaves request gradients.
    pub fn forward_taped(
        &self,
        tape: &mut Tape<T>,
        x: Tensor<T>,
        input_grad: bool,
        param_grad: bool,
    ) -> Result<TapedForward> {
        self.check_input(&x)?;
        let input = tape.leaf(x, input_grad);
        let param_ids: Vec<NodeId> = self
            .params
            .iter()
            .map(|(_, t)| tape.leaf(t.clone(), param_grad))
            .collect();

        let mut cursor = input;
        let mut next_param = 0;
        for layer in &self.layers {
            cursor = match layer {
                LayerSpec::Conv {
                    stride, padding, ..
                } => {
                    let k = param_ids[next_param];
                    let b = param_ids[next_param + 1];
                    next_param += 2;
                    tape.conv2d(cursor, k, b, *stride, *padding)?
                }
                LayerSpec::Relu => tape.relu(cursor),
                LayerSpec::MaxPool { size, stride } => tape.maxpool2d(cursor, *size, *stride)?,
                LayerSpec::Flatten => tape.flatten(cursor)?,
                LayerSpec::Dense { .. } => {
                    let w = param_ids[next_param];
                    let b = param_ids[next_param + 1];
                    next_param += 2;
                    tape.dense(cursor, w, b)?
                }
            };
        }
        Ok(TapedForward {
            input,
            params: param_ids,
            logits: cursor,
        })
    }

    /// Inference-only forward pass returning logits `[B, classes]`.
    pub fn forward_logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut cursor = x.clone();
        let mut next_param = 0;
        for layer in &self.layers {
            cursor = match layer {
                LayerSpec::Conv {
                    stride, padding, ..
                } => {
                    let k = &self.params.entries[next_param].1;
                    let b = &self.params.entries[next_param + 1].1;
                    next_param += 2;
                    tape::conv2d_forward(&cursor, k, b, *stride, *padding)?
                }
                LayerSpec::Relu => tape::relu_forward(&cursor),
                LayerSpec::MaxPool { size, stride } => {
                    tape::maxpool_forward(&cursor, *size, *stride)?.0
                }
                LayerSpec::Flatten => tape::flatten_forward(&cursor)?,
                LayerSpec::Dense { .. } => {
                    let w = &self.params.entries[next_param].1;
                    let b = &self.params.entries[next_param + 1].1;
                    next_param += 2;
                    tape::dense_forward(&cursor, w, b)?
                }
            };
        }
        Ok(cursor)
    }

    /// Softmax class probabilities `[B, classes]`.
    pub fn predict_proba(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        tape::softmax_forward(&self.forward_logits(x)?)
    }

    /// Predicted labels for a batch; ties resolve to the lower class index.
    pub fn predict_batch(&self, images: &[&Tensor<T>]) -> Result<Vec<usize>> {
        let batch = stack(images)?;
        let probs = self.predict_proba(&batch)?;
        let [_, k_n] = probs.dims2("predict")?;
        Ok(probs
            .data()
            .chunks_exact(k_n)
            .map(argmax_row)
            .collect())
    }

    /// Mean cross-entropy loss and gradients for all parameters, in
    /// parameter order.
    pub fn loss_and_param_grads(
        &self,
        x: Tensor<T>,
        labels: &[usize],
    ) -> Result<(T, Vec<Tensor<T>>)> {
        let mut tape = Tape::new();
        let fwd = self.forward_taped(&mut tape, x, false, true)?;
        let loss = tape.softmax_cross_entropy(fwd.logits, labels)?;
        let loss_value = tape.value(loss).scalar().expect("loss is scalar");
        let mut grads = tape.backward(loss)?;
        let out = fwd
            .params
            .iter()
            .zip(self.params.tensors())
            .map(|(&id, t)| match grads.take(id) {
                Some(g) => g,
                None => Tensor::zeros(t.shape()),
            })
            .collect();
        Ok((loss_value, out))
    }
}

/// Lowest index of the maximal element in a probability row.
pub fn argmax_row<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Gradient of the mean cross-entropy loss with respect to the input batch.
///
/// Returns zeros if the loss happens not to depend on the input.
pub fn grad_wrt_input<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    labels: &[usize],
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let fwd = net.forward_taped(&mut tape, x.clone(), true, false)?;
    let loss = tape.softmax_cross_entropy(fwd.logits, labels)?;
    let grads = tape.backward(loss)?;
    Ok(grads.get_or_zeros(fwd.input, x.shape()))
}

/// Walks the layer list, producing `(name, shape, fan_in)` for every
/// parameter tensor and validating that activations stay well-formed.
fn parameter_shapes(
    input_shape: [usize; 3],
    layers: &[LayerSpec],
) -> Result<Vec<(String, Vec<usize>, usize)>> {
    #[derive(Clone, Copy)]
    enum Act {
        Image(usize, usize, usize),
        Flat(usize),
    }
    let mut act = Act::Image(input_shape[0], input_shape[1], input_shape[2]);
    let mut out = Vec::new();
    for (i, layer) in layers.iter().enumerate() {
        match (layer, act) {
            (
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                },
                Act::Image(c, h, w),
            ) => {
                let oh = conv_side(h, *kernel, *stride, *padding, "conv")?;
                let ow = conv_side(w, *kernel, *stride, *padding, "conv")?;
                let fan_in = c * kernel * kernel;
                out.push((
                    format!("layer{i}.weight"),
                    vec![*out_channels, c, *kernel, *kernel],
                    fan_in,
                ));
                out.push((format!("layer{i}.bias"), vec![*out_channels], fan_in));
                act = Act::Image(*out_channels, oh, ow);
            }
            (LayerSpec::Relu, _) => {}
            (LayerSpec::MaxPool { size, stride }, Act::Image(c, h, w)) => {
                let oh = conv_side(h, *size, *stride, 0, "maxpool")?;
                let ow = conv_side(w, *size, *stride, 0, "maxpool")?;
                act = Act::Image(c, oh, ow);
            }
            (LayerSpec::Flatten, Act::Image(c, h, w)) => {
                act = Act::Flat(c * h * w);
            }
            (LayerSpec::Dense { out_features }, Act::Flat(d)) => {
                out.push((format!("layer{i}.weight"), vec![d, *out_features], d));
                out.push((format!("layer{i}.bias"), vec![*out_features], d));
                act = Act::Flat(*out_features);
            }
            _ => {
                return Err(Error::shape(
                    "network",
                    format!("layer {i} ({layer:?}) does not fit the activation at that point"),
                ));
            }
        }
    }
    Ok(out)
}

/// Total scalar parameter count of a layer plan on the given input, without
/// materializing any tensors.
pub fn plan_param_count(input_shape: [usize; 3], layers: &[LayerSpec]) -> Result<usize> {
    Ok(parameter_shapes(input_shape, layers)?
        .iter()
        .map(|(_, shape, _)| shape.iter().product::<usize>())
        .sum())
}

fn conv_side(side: usize, k: usize, stride: usize, padding: usize, op: &'static str) -> Result<usize> {
    let padded = side + 2 * padding;
    if padded < k || stride == 0 {
        return Err(Error::shape(
            "network",
            format!("{op} window {k} stride {stride} too large for side {side}"),
        ));
    }
    Ok((padded - k) / stride + 1)
}

/// Per-image standard-normal noise tensor, for randomized attack starts.
pub fn gaussian_like<T: Scalar>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut rng = rng_from(seed);
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| T::of_f64(next_gaussian(&mut rng)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

/// Per-image uniform noise in `[-1, 1]`.
pub fn uniform_pm1_like<T: Scalar>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut rng = rng_from(seed);
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| T::of_f64(rng.gen_range(-1.0..=1.0)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}
