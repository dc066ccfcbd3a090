//! Relevance propagation by per-neuron Taylor decomposition, producing the
//! saliency map that orders features for the sparse attack.
//!
//! Rule assignment: the box rule (input domain [0,1]) at the first weighted
//! layer, the positive-share rule at every deeper weighted layer. ReLU is
//! transparent, maxpool routes to its argmax input, flatten reshapes.
//! Biases never enter the shares, so each layer redistributes its incoming
//! relevance exactly, except for neurons whose share denominator vanishes
//! (their relevance is dropped).

use crate::error::{Error, Result};
use crate::forward::{forward, pool_argmax};
use crate::grad::{input_gradient, ObjectiveSpec};
use crate::network::{Layer, Network};
use crate::tensor::Tensor;

/// Share denominators smaller than this drop their neuron's relevance.
const DENOM_EPS: f64 = 1e-12;

/// Per-input-feature contribution scores for one class logit.
#[derive(Debug, Clone)]
pub struct RelevanceMap {
    /// Scores, shaped like the input.
    pub scores: Tensor,
    pub class_index: usize,
    /// Relevance placed on the class logit at the start of propagation.
    pub start_relevance: f64,
    /// False when the positive-logit premise failed and the map fell back
    /// to |gradient * input| saliency.
    pub conservative: bool,
}

/// Input feature indices in descending relevance order, ties broken by
/// ascending index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureOrder {
    pub indices: Vec<usize>,
}

/// Decomposes `Z(x)[class_index]` into input-feature relevances.
///
/// Requires a batchnorm-folded network and an input in the [0,1] box. When
/// the selected logit is not positive the decomposition premise fails and
/// the map falls back to first-order Taylor magnitude saliency, flagged
/// non-conservative.
pub fn dtd_relevance(network: &Network, x: &Tensor, class_index: usize) -> Result<RelevanceMap> {
    network.check_class(class_index)?;
    if network.has_batchnorm() {
        return Err(Error::Structure(
            "relevance propagation needs a batchnorm-folded network; call fold_batchnorm first"
                .into(),
        ));
    }
    let trace = forward(network, x)?;
    let start = trace.logits.data()[class_index];

    if start <= 0.0 {
        let grad = input_gradient(
            network,
            x,
            &ObjectiveSpec::ClassLogit { class: class_index },
        )?;
        let scores: Vec<f64> = grad
            .data()
            .iter()
            .zip(x.data())
            .map(|(g, v)| (g * v).abs())
            .collect();
        return Ok(RelevanceMap {
            scores: Tensor::new(x.shape().to_vec(), scores)?,
            class_index,
            start_relevance: start,
            conservative: false,
        });
    }

    let (scores, _totals) = propagate(network, &trace, class_index, start)?;
    Ok(RelevanceMap {
        scores,
        class_index,
        start_relevance: start,
        conservative: true,
    })
}

/// Backward relevance pass. Returns the input-layer scores plus the total
/// relevance observed at every layer boundary, output end first (used to
/// check per-layer conservation).
pub(crate) fn propagate(
    network: &Network,
    trace: &crate::forward::ForwardTrace,
    class_index: usize,
    start: f64,
) -> Result<(Tensor, Vec<f64>)> {
    let first_weighted = network
        .layers
        .iter()
        .position(|l| matches!(l, Layer::Dense { .. } | Layer::Conv2d { .. }));

    let mut relevance = Tensor::zeros(trace.logits.shape());
    relevance.data_mut()[class_index] = start;
    let mut totals = vec![relevance.data().iter().sum::<f64>()];

    for (li, (layer, input)) in network.layers.iter().zip(&trace.inputs).enumerate().rev() {
        let box_rule = first_weighted == Some(li);
        relevance = match layer {
            Layer::Dense {
                in_dim,
                out_dim,
                weights,
                ..
            } => {
                let xs = input.data();
                let mut rin = vec![0.0; *in_dim];
                for o in 0..*out_dim {
                    let r = relevance.data()[o];
                    if r == 0.0 {
                        continue;
                    }
                    let row = &weights[o * in_dim..(o + 1) * in_dim];
                    let mut denom = 0.0;
                    for (x, w) in xs.iter().zip(row) {
                        denom += share(*x, *w, box_rule);
                    }
                    if denom.abs() < DENOM_EPS {
                        continue;
                    }
                    let factor = r / denom;
                    for ((ri, x), w) in rin.iter_mut().zip(xs).zip(row) {
                        *ri += share(*x, *w, box_rule) * factor;
                    }
                }
                Tensor::new(input.shape().to_vec(), rin)?
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
                let (oh, ow) = (relevance.shape()[1], relevance.shape()[2]);
                let xs = input.data();
                let mut rin = vec![0.0; input.len()];
                let k_per_out = in_channels * kernel_h * kernel_w;
                for oc in 0..*out_channels {
                    let kernel = &weights[oc * k_per_out..(oc + 1) * k_per_out];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let r = relevance.data()[oc * oh * ow + oy * ow + ox];
                            if r == 0.0 {
                                continue;
                            }
                            let mut denom = 0.0;
                            for ic in 0..*in_channels {
                                for ky in 0..*kernel_h {
                                    let x_row = ic * h * w + (oy * stride + ky) * w + ox * stride;
                                    let k_row = ic * kernel_h * kernel_w + ky * kernel_w;
                                    for kx in 0..*kernel_w {
                                        denom +=
                                            share(xs[x_row + kx], kernel[k_row + kx], box_rule);
                                    }
                                }
                            }
                            if denom.abs() < DENOM_EPS {
                                continue;
                            }
                            let factor = r / denom;
                            for ic in 0..*in_channels {
                                for ky in 0..*kernel_h {
                                    let x_row = ic * h * w + (oy * stride + ky) * w + ox * stride;
                                    let k_row = ic * kernel_h * kernel_w + ky * kernel_w;
                                    for kx in 0..*kernel_w {
                                        rin[x_row + kx] +=
                                            share(xs[x_row + kx], kernel[k_row + kx], box_rule)
                                                * factor;
                                    }
                                }
                            }
                        }
                    }
                }
                Tensor::new(input.shape().to_vec(), rin)?
            }
            Layer::Relu | Layer::Dropout { .. } => relevance,
            Layer::MaxPool2d {
                window_h,
                window_w,
                stride,
            } => {
                let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
                let (oh, ow) = (relevance.shape()[1], relevance.shape()[2]);
                let mut rin = vec![0.0; input.len()];
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let r = relevance.data()[ch * oh * ow + oy * ow + ox];
                            if r == 0.0 {
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
                            rin[idx] += r;
                        }
                    }
                }
                Tensor::new(input.shape().to_vec(), rin)?
            }
            Layer::Flatten => relevance.reshape(input.shape())?,
            Layer::BatchNormAffine { .. } => {
                return Err(Error::Structure(
                    "relevance propagation reached an unfolded batchnorm layer".into(),
                ))
            }
        };
        totals.push(relevance.data().iter().sum::<f64>());
    }
    Ok((relevance, totals))
}

/// Relevance share of one connection. Box rule (`z^B`, l=0, h=1):
/// `x*w - min(w,0)`; positive-share rule (`z+`): `x*max(w,0)`.
#[inline]
fn share(x: f64, w: f64, box_rule: bool) -> f64 {
    if box_rule {
        x * w - w.min(0.0)
    } else {
        x * w.max(0.0)
    }
}

/// Sorts the saliency map into a feature order: descending score, ties by
/// ascending feature index.
pub fn sort_saliency(map: &RelevanceMap) -> FeatureOrder {
    let scores = map.scores.data();
    let mut indices: Vec<usize> = (0..scores.len()).collect();
    indices.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite relevance scores")
            .then(a.cmp(&b))
    });
    FeatureOrder { indices }
}
