//! Reverse-mode gradients of scalar objectives with respect to the input.
//!
//! Weights are frozen here; the trainer keeps its own backward pass that
//! additionally accumulates parameter gradients through the same layer
//! rules.

use crate::error::{Error, Result};
use crate::forward::{forward, pool_argmax, ForwardTrace};
use crate::network::{Layer, Network};
use crate::tensor::{softmax_probs, Tensor};

/// Scalar objective over the logits, plus an optional L2 distance term on
/// the input itself.
#[derive(Debug, Clone)]
pub enum ObjectiveSpec {
    /// `Z(x)[class]`
    ClassLogit { class: usize },
    /// Cross-entropy of `softmax(Z(x))` against `class`.
    CrossEntropy { class: usize },
    /// `Z(x)[class] + weight * ||x - reference||_2`
    LogitPlusL2 {
        class: usize,
        weight: f64,
        reference: Tensor,
    },
    /// `weight * ||x - reference||_2 - Z(x)[class]`
    L2MinusLogit {
        class: usize,
        weight: f64,
        reference: Tensor,
    },
}

impl ObjectiveSpec {
    fn class(&self) -> usize {
        match self {
            ObjectiveSpec::ClassLogit { class }
            | ObjectiveSpec::CrossEntropy { class }
            | ObjectiveSpec::LogitPlusL2 { class, .. }
            | ObjectiveSpec::L2MinusLogit { class, .. } => *class,
        }
    }
}

/// Gradient of the objective with respect to the input, exact reverse-mode.
pub fn input_gradient(network: &Network, x: &Tensor, spec: &ObjectiveSpec) -> Result<Tensor> {
    let trace = forward(network, x)?;
    Ok(objective_with_gradient(network, &trace, x, spec)?.1)
}

/// Objective value and its input gradient at the point captured by `trace`.
///
/// `x` must be the input the trace was recorded from.
pub fn objective_with_gradient(
    network: &Network,
    trace: &ForwardTrace,
    x: &Tensor,
    spec: &ObjectiveSpec,
) -> Result<(f64, Tensor)> {
    network.check_class(spec.class())?;
    let logits = &trace.logits;
    let m = logits.len();
    let mut dlogits = vec![0.0; m];
    let mut value;
    match spec {
        ObjectiveSpec::ClassLogit { class } => {
            value = logits.data()[*class];
            dlogits[*class] = 1.0;
        }
        ObjectiveSpec::CrossEntropy { class } => {
            let max = logits
                .data()
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            let lse: f64 = logits
                .data()
                .iter()
                .map(|z| (z - max).exp())
                .sum::<f64>()
                .ln()
                + max;
            value = lse - logits.data()[*class];
            let probs = softmax_probs(logits)?;
            dlogits.copy_from_slice(probs.data());
            dlogits[*class] -= 1.0;
        }
        ObjectiveSpec::LogitPlusL2 { class, .. } => {
            value = logits.data()[*class];
            dlogits[*class] = 1.0;
        }
        ObjectiveSpec::L2MinusLogit { class, .. } => {
            value = -logits.data()[*class];
            dlogits[*class] = -1.0;
        }
    }

    let mut grad = backward_input(network, trace, &dlogits)?;

    // distance term: gradient of w * ||x - ref||_2, subgradient 0 at x = ref
    if let ObjectiveSpec::LogitPlusL2 {
        weight, reference, ..
    }
    | ObjectiveSpec::L2MinusLogit {
        weight, reference, ..
    } = spec
    {
        if !reference.same_shape(x) {
            return Err(Error::ShapeMismatch {
                expected: x.shape().to_vec(),
                got: reference.shape().to_vec(),
            });
        }
        let norm: f64 = x
            .data()
            .iter()
            .zip(reference.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        value += weight * norm;
        if norm > 0.0 {
            let scale = weight / norm;
            for ((g, a), b) in grad
                .data_mut()
                .iter_mut()
                .zip(x.data())
                .zip(reference.data())
            {
                *g += scale * (a - b);
            }
        }
    }
    Ok((value, grad))
}

/// Propagates `dlogits` back to the input through the cached activations.
pub fn backward_input(network: &Network, trace: &ForwardTrace, dlogits: &[f64]) -> Result<Tensor> {
    let mut grad = Tensor::new(trace.logits.shape().to_vec(), dlogits.to_vec())?;
    for (layer, input) in network.layers.iter().zip(&trace.inputs).rev() {
        grad = layer_backward_input(layer, input, &grad)?;
    }
    Ok(grad)
}

/// Accumulated parameter gradients for one layer. `w`/`b` mirror the
/// layer's weight and bias buffers (scale and shift for batchnorm); both
/// stay empty for parameter-free layers.
#[derive(Debug, Clone, Default)]
pub(crate) struct ParamGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl ParamGrad {
    pub(crate) fn zeros_for(layer: &Layer) -> Self {
        match layer {
            Layer::Dense { weights, bias, .. } | Layer::Conv2d { weights, bias, .. } => ParamGrad {
                w: vec![0.0; weights.len()],
                b: vec![0.0; bias.len()],
            },
            Layer::BatchNormAffine { scale, shift } => ParamGrad {
                w: vec![0.0; scale.len()],
                b: vec![0.0; shift.len()],
            },
            _ => ParamGrad::default(),
        }
    }
}

/// Gradient of one layer's output with respect to its input, applied to
/// `grad_out` (vector-Jacobian product).
pub(crate) fn layer_backward_input(
    layer: &Layer,
    input: &Tensor,
    grad_out: &Tensor,
) -> Result<Tensor> {
    layer_backward(layer, input, grad_out, None)
}

/// As `layer_backward_input`, additionally accumulating parameter
/// gradients into `params` when given (the trainer's path).
pub(crate) fn layer_backward(
    layer: &Layer,
    input: &Tensor,
    grad_out: &Tensor,
    mut params: Option<&mut ParamGrad>,
) -> Result<Tensor> {
    match layer {
        Layer::Dense {
            in_dim,
            out_dim,
            weights,
            ..
        } => {
            let mut grad_in = vec![0.0; *in_dim];
            for o in 0..*out_dim {
                let g = grad_out.data()[o];
                if let Some(p) = params.as_deref_mut() {
                    p.b[o] += g;
                    if g != 0.0 {
                        for (pw, x) in p.w[o * in_dim..(o + 1) * in_dim]
                            .iter_mut()
                            .zip(input.data())
                        {
                            *pw += g * x;
                        }
                    }
                }
                if g == 0.0 {
                    continue;
                }
                let row = &weights[o * in_dim..(o + 1) * in_dim];
                for (gi, w) in grad_in.iter_mut().zip(row) {
                    *gi += g * w;
                }
            }
            Tensor::new(input.shape().to_vec(), grad_in)
        }
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            weights,
            ..
        } => {
            let (h, w) = (input.shape()[1], input.shape()[2]);
            let (oh, ow) = (grad_out.shape()[1], grad_out.shape()[2]);
            let mut grad_in = vec![0.0; input.len()];
            let k_per_out = in_channels * kernel_h * kernel_w;
            for oc in 0..*out_channels {
                let kernel = &weights[oc * k_per_out..(oc + 1) * k_per_out];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = grad_out.data()[oc * oh * ow + oy * ow + ox];
                        if let Some(p) = params.as_deref_mut() {
                            p.b[oc] += g;
                        }
                        if g == 0.0 {
                            continue;
                        }
                        for ic in 0..*in_channels {
                            for ky in 0..*kernel_h {
                                let iy = oy * stride + ky;
                                let x_row = ic * h * w + iy * w + ox * stride;
                                let k_row = ic * kernel_h * kernel_w + ky * kernel_w;
                                for kx in 0..*kernel_w {
                                    grad_in[x_row + kx] += g * kernel[k_row + kx];
                                    if let Some(p) = params.as_deref_mut() {
                                        p.w[oc * k_per_out + k_row + kx] +=
                                            g * input.data()[x_row + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Tensor::new(input.shape().to_vec(), grad_in)
        }
        Layer::Relu => {
            let data = input
                .data()
                .iter()
                .zip(grad_out.data())
                .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
                .collect();
            Tensor::new(input.shape().to_vec(), data)
        }
        Layer::MaxPool2d {
            window_h,
            window_w,
            stride,
        } => {
            let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
            let (oh, ow) = (grad_out.shape()[1], grad_out.shape()[2]);
            let mut grad_in = vec![0.0; input.len()];
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = grad_out.data()[ch * oh * ow + oy * ow + ox];
                        if g == 0.0 {
                            continue;
                        }
                        let idx = pool_argmax(
                            input.data(),
                            h,
                            w,
                            ch,
                            oy,
                            ox,
                            *window_h,
                            *window_w,
                            *stride,
                        );
                        grad_in[idx] += g;
                    }
                }
            }
            Tensor::new(input.shape().to_vec(), grad_in)
        }
        Layer::Flatten => grad_out.reshape(input.shape()),
        Layer::Dropout { .. } => Ok(grad_out.clone()),
        Layer::BatchNormAffine { scale, .. } => {
            let channels = scale.len();
            let per_ch = input.len() / channels;
            let mut grad_in = vec![0.0; input.len()];
            for ch in 0..channels {
                for i in 0..per_ch {
                    let g = grad_out.data()[ch * per_ch + i];
                    grad_in[ch * per_ch + i] = scale[ch] * g;
                    if let Some(p) = params.as_deref_mut() {
                        p.w[ch] += g * input.data()[ch * per_ch + i];
                        p.b[ch] += g;
                    }
                }
            }
            Tensor::new(input.shape().to_vec(), grad_in)
        }
    }
}
