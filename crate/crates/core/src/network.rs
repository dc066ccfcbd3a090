//! Layer definitions, the layer stack, shape validation, and batchnorm folding.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One layer of the stack. Weights are row-major `f64`.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Fully connected: `out[o] = bias[o] + sum_i weights[o*in_dim + i] * x[i]`.
    Dense {
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    /// 2-D convolution, valid padding. Kernel layout `[out_ch][in_ch][kh][kw]`.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu,
    MaxPool2d {
        window_h: usize,
        window_w: usize,
        stride: usize,
    },
    Flatten,
    /// Identity at inference and attack time; active only during training.
    Dropout {
        rate: f64,
    },
    /// Per-channel affine `y = scale[c] * x + shift[c]`.
    BatchNormAffine {
        scale: Vec<f64>,
        shift: Vec<f64>,
    },
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::Flatten => "flatten",
            Layer::Dropout { .. } => "dropout",
            Layer::BatchNormAffine { .. } => "batchnorm-affine",
        }
    }

    /// Output shape for a given input shape, or an error when the layer
    /// cannot consume that shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let fail = |msg: String| Err(Error::Structure(msg));
        match self {
            Layer::Dense {
                in_dim, out_dim, ..
            } => {
                if input != [*in_dim] {
                    return fail(format!(
                        "dense layer expects input shape [{in_dim}], got {input:?}"
                    ));
                }
                Ok(vec![*out_dim])
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                ..
            } => {
                let [c, h, w] = three_d(input, "conv2d")?;
                if c != *in_channels {
                    return fail(format!(
                        "conv2d expects {in_channels} input channels, got {c}"
                    ));
                }
                if h < *kernel_h || w < *kernel_w || *stride == 0 {
                    return fail(format!(
                        "conv2d kernel {kernel_h}x{kernel_w} stride {stride} does not fit input {h}x{w}"
                    ));
                }
                Ok(vec![
                    *out_channels,
                    (h - kernel_h) / stride + 1,
                    (w - kernel_w) / stride + 1,
                ])
            }
            Layer::Relu | Layer::Dropout { .. } => Ok(input.to_vec()),
            Layer::MaxPool2d {
                window_h,
                window_w,
                stride,
            } => {
                let [c, h, w] = three_d(input, "maxpool2d")?;
                if h < *window_h || w < *window_w || *stride == 0 {
                    return fail(format!(
                        "maxpool2d window {window_h}x{window_w} stride {stride} does not fit input {h}x{w}"
                    ));
                }
                Ok(vec![
                    c,
                    (h - window_h) / stride + 1,
                    (w - window_w) / stride + 1,
                ])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::BatchNormAffine { scale, shift } => {
                if scale.len() != shift.len() {
                    return fail("batchnorm scale/shift length mismatch".into());
                }
                let channels = input[0];
                if scale.len() != channels {
                    return fail(format!(
                        "batchnorm has {} channels, input has {channels}",
                        scale.len()
                    ));
                }
                Ok(input.to_vec())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Structure(msg));
        match self {
            Layer::Dense {
                in_dim,
                out_dim,
                weights,
                bias,
            } => {
                if weights.len() != in_dim * out_dim {
                    return fail(format!(
                        "dense weight count {} != {out_dim}x{in_dim}",
                        weights.len()
                    ));
                }
                if bias.len() != *out_dim {
                    return fail(format!("dense bias count {} != {out_dim}", bias.len()));
                }
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                weights,
                bias,
                ..
            } => {
                let expected = out_channels * in_channels * kernel_h * kernel_w;
                if weights.len() != expected {
                    return fail(format!(
                        "conv2d kernel count {} != {expected}",
                        weights.len()
                    ));
                }
                if bias.len() != *out_channels {
                    return fail(format!(
                        "conv2d bias count {} != {out_channels}",
                        bias.len()
                    ));
                }
            }
            Layer::Dropout { rate } if !(0.0..1.0).contains(rate) => {
                return fail(format!("dropout rate {rate} outside [0,1)"));
            }
            _ => {}
        }
        Ok(())
    }
}

fn three_d(input: &[usize], ctx: &str) -> Result<[usize; 3]> {
    match input {
        [c, h, w] => Ok([*c, *h, *w]),
        other => Err(Error::Structure(format!(
            "{ctx} expects a [channels, height, width] input, got {other:?}"
        ))),
    }
}

/// Ordered layer stack mapping `input_shape` to `classes` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub layers: Vec<Layer>,
}

impl Network {
    /// Validates layer parameters and shape composition end to end.
    pub fn new(input_shape: Vec<usize>, classes: usize, layers: Vec<Layer>) -> Result<Self> {
        let net = Network {
            input_shape,
            classes,
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let mut shape = self.input_shape.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate().map_err(|e| Error::ModelValidation {
                layer: i,
                message: e.to_string(),
            })?;
            shape = layer
                .output_shape(&shape)
                .map_err(|e| Error::ModelValidation {
                    layer: i,
                    message: e.to_string(),
                })?;
        }
        if shape != [self.classes] {
            return Err(Error::Structure(format!(
                "final layer produces shape {shape:?}, expected [{}]",
                self.classes
            )));
        }
        Ok(())
    }

    /// Per-layer activation shapes, `layers.len() + 1` entries starting at
    /// the input shape.
    pub fn activation_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, Layer::BatchNormAffine { .. }))
    }

    /// Checks that `index` addresses a valid class.
    pub fn check_class(&self, index: usize) -> Result<()> {
        if index >= self.classes {
            return Err(Error::ClassIndex {
                index,
                classes: self.classes,
            });
        }
        Ok(())
    }
}

/// Folds every per-channel affine layer into the preceding dense/conv layer.
///
/// The returned network computes the same function (logit agreement to
/// ~1e-10 relative on random inputs; rounding differs because the affine is
/// applied to the weights instead of the activations). Relevance propagation
/// and attacks expect the folded form.
pub fn fold_batchnorm(network: &Network) -> Result<Network> {
    let mut layers: Vec<Layer> = Vec::with_capacity(network.layers.len());
    for (i, layer) in network.layers.iter().enumerate() {
        match layer {
            Layer::BatchNormAffine { scale, shift } => {
                let prev = layers.pop().ok_or_else(|| {
                    Error::Structure(format!(
                        "layer {i}: batchnorm-affine has no preceding layer to fold into"
                    ))
                })?;
                let folded = match prev {
                    Layer::Dense {
                        in_dim,
                        out_dim,
                        mut weights,
                        mut bias,
                    } => {
                        if scale.len() != out_dim {
                            return Err(Error::Structure(format!(
                                "layer {i}: batchnorm channels {} != dense outputs {out_dim}",
                                scale.len()
                            )));
                        }
                        for o in 0..out_dim {
                            for x in &mut weights[o * in_dim..(o + 1) * in_dim] {
                                *x *= scale[o];
                            }
                            bias[o] = scale[o] * bias[o] + shift[o];
                        }
                        Layer::Dense {
                            in_dim,
                            out_dim,
                            weights,
                            bias,
                        }
                    }
                    Layer::Conv2d {
                        in_channels,
                        out_channels,
                        kernel_h,
                        kernel_w,
                        stride,
                        mut weights,
                        mut bias,
                    } => {
                        if scale.len() != out_channels {
                            return Err(Error::Structure(format!(
                                "layer {i}: batchnorm channels {} != conv channels {out_channels}",
                                scale.len()
                            )));
                        }
                        let per_ch = in_channels * kernel_h * kernel_w;
                        for oc in 0..out_channels {
                            for x in &mut weights[oc * per_ch..(oc + 1) * per_ch] {
                                *x *= scale[oc];
                            }
                            bias[oc] = scale[oc] * bias[oc] + shift[oc];
                        }
                        Layer::Conv2d {
                            in_channels,
                            out_channels,
                            kernel_h,
                            kernel_w,
                            stride,
                            weights,
                            bias,
                        }
                    }
                    other => return Err(Error::Structure(format!(
                        "layer {i}: batchnorm-affine must follow a dense or conv2d layer, found {}",
                        other.kind_name()
                    ))),
                };
                layers.push(folded);
            }
            other => layers.push(other.clone()),
        }
    }
    Network::new(network.input_shape.clone(), network.classes, layers)
}

fn glorot_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// Flatten (when needed) -> Dense(hidden) -> ReLU -> Dense(classes), with
/// seeded uniform initialization.
pub fn dense_arch(
    input_shape: &[usize],
    hidden: usize,
    classes: usize,
    seed: u64,
) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = input_shape.iter().product();
    let mut layers = Vec::new();
    if input_shape.len() > 1 {
        layers.push(Layer::Flatten);
    }
    layers.push(Layer::Dense {
        in_dim: n,
        out_dim: hidden,
        weights: glorot_uniform(&mut rng, n, hidden, n * hidden),
        bias: vec![0.0; hidden],
    });
    layers.push(Layer::Relu);
    layers.push(Layer::Dense {
        in_dim: hidden,
        out_dim: classes,
        weights: glorot_uniform(&mut rng, hidden, classes, hidden * classes),
        bias: vec![0.0; classes],
    });
    Network::new(input_shape.to_vec(), classes, layers)
}

/// Small two-block convnet for [C,H,W] inputs:
/// Conv(C->8,3) ReLU Pool2 Conv(8->16,3) ReLU Pool2 Flatten Dense(classes).
pub fn convnet_arch(input_shape: &[usize], classes: usize, seed: u64) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [c, _, _] = three_d(input_shape, "convnet input")?;
    let conv = |in_ch: usize, out_ch: usize, k: usize, rng: &mut ChaCha8Rng| Layer::Conv2d {
        in_channels: in_ch,
        out_channels: out_ch,
        kernel_h: k,
        kernel_w: k,
        stride: 1,
        weights: glorot_uniform(rng, in_ch * k * k, out_ch * k * k, out_ch * in_ch * k * k),
        bias: vec![0.0; out_ch],
    };
    let mut layers = vec![
        conv(c, 8, 3, &mut rng),
        Layer::Relu,
        Layer::MaxPool2d {
            window_h: 2,
            window_w: 2,
            stride: 2,
        },
        conv(8, 16, 3, &mut rng),
        Layer::Relu,
        Layer::MaxPool2d {
            window_h: 2,
            window_w: 2,
            stride: 2,
        },
        Layer::Flatten,
    ];
    // resolve the flattened width before adding the classifier head
    let mut shape = input_shape.to_vec();
    for layer in &layers {
        shape = layer.output_shape(&shape)?;
    }
    let flat = shape[0];
    layers.push(Layer::Dense {
        in_dim: flat,
        out_dim: classes,
        weights: glorot_uniform(&mut rng, flat, classes, flat * classes),
        bias: vec![0.0; classes],
    });
    Network::new(input_shape.to_vec(), classes, layers)
}
