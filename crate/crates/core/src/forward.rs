//! Forward evaluation with cached per-layer activations.

use crate::error::Result;
use crate::network::{Layer, Network};
use crate::tensor::Tensor;

/// Activations recorded during one forward pass: the input and output of
/// every layer, in layer order, plus the final logits.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub inputs: Vec<Tensor>,
    pub outputs: Vec<Tensor>,
    pub logits: Tensor,
}

impl ForwardTrace {
    pub fn layer_count(&self) -> usize {
        self.inputs.len()
    }
}

/// Evaluates the network on `x`, caching every layer boundary.
///
/// Dropout layers act as identity here; they only matter during training.
pub fn forward(network: &Network, x: &Tensor) -> Result<ForwardTrace> {
    x.ensure_shape(&network.input_shape)?;
    let mut inputs = Vec::with_capacity(network.layers.len());
    let mut outputs = Vec::with_capacity(network.layers.len());
    let mut current = x.clone();
    for layer in &network.layers {
        let out = layer_forward(layer, &current)?;
        inputs.push(current);
        outputs.push(out.clone());
        current = out;
    }
    Ok(ForwardTrace {
        inputs,
        outputs,
        logits: current,
    })
}

/// Logits only, without keeping intermediate activations.
pub fn logits(network: &Network, x: &Tensor) -> Result<Tensor> {
    x.ensure_shape(&network.input_shape)?;
    let mut current = x.clone();
    for layer in &network.layers {
        current = layer_forward(layer, &current)?;
    }
    Ok(current)
}

pub(crate) fn layer_forward(layer: &Layer, x: &Tensor) -> Result<Tensor> {
    let out_shape = layer.output_shape(x.shape())?;
    match layer {
        Layer::Dense {
            in_dim,
            out_dim,
            weights,
            bias,
        } => {
            let xs = x.data();
            let mut out = vec![0.0; *out_dim];
            for o in 0..*out_dim {
                let row = &weights[o * in_dim..(o + 1) * in_dim];
                let mut acc = bias[o];
                for (w, v) in row.iter().zip(xs) {
                    acc += w * v;
                }
                out[o] = acc;
            }
            Tensor::new(out_shape, out)
        }
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            weights,
            bias,
        } => {
            let (h, w) = (x.shape()[1], x.shape()[2]);
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let xs = x.data();
            let mut out = vec![0.0; out_channels * oh * ow];
            let k_per_out = in_channels * kernel_h * kernel_w;
            for oc in 0..*out_channels {
                let kernel = &weights[oc * k_per_out..(oc + 1) * k_per_out];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[oc];
                        for ic in 0..*in_channels {
                            for ky in 0..*kernel_h {
                                let iy = oy * stride + ky;
                                let x_row = ic * h * w + iy * w + ox * stride;
                                let k_row = ic * kernel_h * kernel_w + ky * kernel_w;
                                for kx in 0..*kernel_w {
                                    acc += kernel[k_row + kx] * xs[x_row + kx];
                                }
                            }
                        }
                        out[oc * oh * ow + oy * ow + ox] = acc;
                    }
                }
            }
            Tensor::new(out_shape, out)
        }
        Layer::Relu => Tensor::new(out_shape, x.data().iter().map(|v| v.max(0.0)).collect()),
        Layer::MaxPool2d {
            window_h,
            window_w,
            stride,
        } => {
            let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let xs = x.data();
            let mut out = vec![0.0; c * oh * ow];
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        for ky in 0..*window_h {
                            for kx in 0..*window_w {
                                let iy = oy * stride + ky;
                                let ix = ox * stride + kx;
                                let v = xs[ch * h * w + iy * w + ix];
                                if v > best {
                                    best = v;
                                }
                            }
                        }
                        out[ch * oh * ow + oy * ow + ox] = best;
                    }
                }
            }
            Tensor::new(out_shape, out)
        }
        Layer::Flatten => x.reshape(&out_shape),
        Layer::Dropout { .. } => Ok(x.clone()),
        Layer::BatchNormAffine { scale, shift } => {
            let channels = scale.len();
            let per_ch = x.len() / channels;
            let mut out = vec![0.0; x.len()];
            for ch in 0..channels {
                for i in 0..per_ch {
                    out[ch * per_ch + i] = scale[ch] * x.data()[ch * per_ch + i] + shift[ch];
                }
            }
            Tensor::new(out_shape, out)
        }
    }
}

/// Flat index of the max element inside one pooling window; ties pick the
/// lowest index. Shared by gradient routing and relevance routing.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pool_argmax(
    xs: &[f64],
    h: usize,
    w: usize,
    ch: usize,
    oy: usize,
    ox: usize,
    window_h: usize,
    window_w: usize,
    stride: usize,
) -> usize {
    let mut best_idx = ch * h * w + (oy * stride) * w + ox * stride;
    let mut best = f64::NEG_INFINITY;
    for ky in 0..window_h {
        for kx in 0..window_w {
            let idx = ch * h * w + (oy * stride + ky) * w + (ox * stride + kx);
            if xs[idx] > best {
                best = xs[idx];
                best_idx = idx;
            }
        }
    }
    best_idx
}
