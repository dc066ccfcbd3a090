//! Plain and adversarial training on cross-entropy, with seeded
//! determinism end to end.
//!
//! Adversarial training is the Madry-style stand-in: every minibatch
//! example is replaced by its PGD perturbation (gradient ascent on the
//! loss inside the epsilon ball) against the current weights before the
//! gradient step.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attacks::{project_linf_box, sign};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forward::layer_forward;
use crate::grad::{input_gradient, layer_backward, ObjectiveSpec, ParamGrad};
use crate::network::{Layer, Network};
use crate::seeds::derive_seed;
use crate::tensor::{softmax_probs, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Inner-attack parameters for adversarial training.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct AdvTrainConfig {
    /// L-infinity radius of the training perturbation.
    pub eps_ball: f64,
    pub steps: usize,
    pub step_size: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub adversarial: Option<AdvTrainConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            adversarial: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let Some(adv) = &self.adversarial {
            if adv.eps_ball < 0.0 {
                return Err(Error::Config("adversarial eps ball must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Minimizes mean cross-entropy over the dataset. Deterministic for a
/// fixed seed; zero epochs return the network unchanged.
pub fn train(network: &Network, dataset: &Dataset, cfg: &TrainConfig) -> Result<Network> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for &label in &dataset.labels {
        if label >= network.classes {
            return Err(Error::ClassIndex {
                index: label,
                classes: network.classes,
            });
        }
    }

    let mut net = network.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizer = Optimizer::new(cfg, &net);
    let mut adv_counter: u64 = 0;

    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    for _epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size) {
            let mut grads: Vec<ParamGrad> = net.layers.iter().map(ParamGrad::zeros_for).collect();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let label = dataset.labels[i];
                let example;
                let x = match &cfg.adversarial {
                    Some(adv) if adv.eps_ball > 0.0 => {
                        adv_counter += 1;
                        let seed = derive_seed(cfg.seed ^ 0xAD7E_55ED, adv_counter);
                        example = pgd_ascent(&net, &dataset.examples[i], label, adv, seed)?;
                        &example
                    }
                    _ => &dataset.examples[i],
                };
                accumulate_example(&net, x, label, scale, &mut grads, &mut rng)?;
            }
            optimizer.step(&mut net, &grads, cfg.learning_rate);
        }
    }
    Ok(net)
}

/// `train` with the adversarial inner attack required.
pub fn adversarial_train(
    network: &Network,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<Network> {
    if cfg.adversarial.is_none() {
        return Err(Error::Config(
            "adversarial training needs eps ball, steps, and step size".into(),
        ));
    }
    train(network, dataset, cfg)
}

/// Fraction of examples whose predicted class (argmax of the logits)
/// equals the label.
pub fn evaluate_accuracy(network: &Network, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for (x, &label) in dataset.examples.iter().zip(&dataset.labels) {
        if crate::forward::logits(network, x)?.argmax() == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// One example's contribution to the batch gradient. Dropout layers draw
/// an inverted-dropout mask from `rng` and reuse it in the backward pass.
fn accumulate_example(
    net: &Network,
    x: &Tensor,
    label: usize,
    scale: f64,
    grads: &mut [ParamGrad],
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut inputs: Vec<Tensor> = Vec::with_capacity(net.layers.len());
    let mut masks: Vec<Option<Vec<f64>>> = Vec::with_capacity(net.layers.len());
    let mut current = x.clone();
    for layer in &net.layers {
        let (out, mask) = match layer {
            Layer::Dropout { rate } if *rate > 0.0 => {
                let keep = 1.0 - rate;
                let mask: Vec<f64> = (0..current.len())
                    .map(|_| {
                        if rng.gen::<f64>() < *rate {
                            0.0
                        } else {
                            1.0 / keep
                        }
                    })
                    .collect();
                let data = current
                    .data()
                    .iter()
                    .zip(&mask)
                    .map(|(v, m)| v * m)
                    .collect();
                (Tensor::new(current.shape().to_vec(), data)?, Some(mask))
            }
            other => (layer_forward(other, &current)?, None),
        };
        inputs.push(current);
        masks.push(mask);
        current = out;
    }

    let probs = softmax_probs(&current)?;
    let mut grad = Tensor::new(
        current.shape().to_vec(),
        probs
            .data()
            .iter()
            .enumerate()
            .map(|(k, p)| (if k == label { p - 1.0 } else { *p }) * scale)
            .collect(),
    )?;

    for (li, layer) in net.layers.iter().enumerate().rev() {
        grad = match &masks[li] {
            Some(mask) => {
                let data = grad.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                Tensor::new(inputs[li].shape().to_vec(), data)?
            }
            None => layer_backward(layer, &inputs[li], &grad, Some(&mut grads[li]))?,
        };
    }
    Ok(())
}

/// Full-strength PGD on the training loss: ascent steps on sign gradients,
/// projected into the ball and the [0,1] box, no early exit.
fn pgd_ascent(
    net: &Network,
    x: &Tensor,
    label: usize,
    adv: &AdvTrainConfig,
    seed: u64,
) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = x.clone();
    for v in current.data_mut().iter_mut() {
        *v += rng.gen_range(-adv.eps_ball..=adv.eps_ball);
    }
    project(x, &mut current, adv.eps_ball);
    for _ in 0..adv.steps {
        let grad = input_gradient(net, &current, &ObjectiveSpec::CrossEntropy { class: label })?;
        for (v, g) in current.data_mut().iter_mut().zip(grad.data()) {
            *v += adv.step_size * sign(*g);
        }
        project(x, &mut current, adv.eps_ball);
    }
    Ok(current)
}

fn project(x: &Tensor, v: &mut Tensor, eps: f64) {
    for (vi, xi) in v.data_mut().iter_mut().zip(x.data()) {
        *vi = project_linf_box(*xi, *vi, eps, 0.0, 1.0);
    }
}

struct Optimizer {
    kind: OptimizerKind,
    m: Vec<ParamGrad>,
    v: Vec<ParamGrad>,
    t: i32,
}

impl Optimizer {
    fn new(cfg: &TrainConfig, net: &Network) -> Optimizer {
        let zeros: Vec<ParamGrad> = net.layers.iter().map(ParamGrad::zeros_for).collect();
        Optimizer {
            kind: cfg.optimizer,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Network, grads: &[ParamGrad], lr: f64) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        for (li, layer) in net.layers.iter_mut().enumerate() {
            let Some((w, b)) = layer_params_mut(layer) else {
                continue;
            };
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, g) in w.iter_mut().zip(&grads[li].w) {
                        *p -= lr * g;
                    }
                    for (p, g) in b.iter_mut().zip(&grads[li].b) {
                        *p -= lr * g;
                    }
                }
                OptimizerKind::Adam => {
                    let bc1 = 1.0 - BETA1.powi(self.t);
                    let bc2 = 1.0 - BETA2.powi(self.t);
                    let update = |params: &mut [f64], gs: &[f64], m: &mut [f64], v: &mut [f64]| {
                        for i in 0..params.len() {
                            let g = gs[i];
                            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                            let m_hat = m[i] / bc1;
                            let v_hat = v[i] / bc2;
                            params[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
                        }
                    };
                    update(w, &grads[li].w, &mut self.m[li].w, &mut self.v[li].w);
                    update(b, &grads[li].b, &mut self.m[li].b, &mut self.v[li].b);
                }
            }
        }
    }
}

fn layer_params_mut(layer: &mut Layer) -> Option<(&mut Vec<f64>, &mut Vec<f64>)> {
    match layer {
        Layer::Dense { weights, bias, .. } | Layer::Conv2d { weights, bias, .. } => {
            Some((weights, bias))
        }
        Layer::BatchNormAffine { scale, shift } => Some((scale, shift)),
        _ => None,
    }
}
