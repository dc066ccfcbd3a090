//! White-box attacks: the saliency-guided sparse attack (relevance-ordered
//! outer loop over features, gradient inner loop on a logit + L2 objective)
//! and the FGSM/BIM/PGD epsilon-ball baselines.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dtd::{dtd_relevance, sort_saliency};
use crate::error::{Error, Result};
use crate::forward::{forward, logits};
use crate::grad::{input_gradient, objective_with_gradient, ObjectiveSpec};
use crate::metrics::lp_norms;
use crate::network::Network;
use crate::tensor::Tensor;

/// Attack parameters. `step`/`inner_iters`/`c` drive the sparse attack;
/// `epsilon_ball`/`baseline_steps`/`baseline_step` drive the baselines.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AttackConfig {
    /// Perturbation rate: inner-loop gradient step size.
    pub step: f64,
    /// Inner iterations T per enabled feature.
    pub inner_iters: usize,
    /// Weight of the L2 distance term in the objective, in (0,1].
    pub c: f64,
    pub clip_min: f64,
    pub clip_max: f64,
    /// Outer-loop bound on enabled features; `None` means every feature.
    pub max_features: Option<usize>,
    pub targeted: bool,
    pub target: usize,
    /// L-infinity radius for FGSM/BIM/PGD.
    pub epsilon_ball: f64,
    pub baseline_steps: usize,
    pub baseline_step: f64,
    /// Inner updates keep Adam moment state instead of plain steps.
    pub adam_update: bool,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            step: 0.0032,
            inner_iters: 21,
            c: 1.0,
            clip_min: 0.0,
            clip_max: 1.0,
            max_features: None,
            targeted: false,
            target: 0,
            epsilon_ball: 0.1,
            baseline_steps: 40,
            baseline_step: 0.01,
            adam_update: false,
            seed: 0,
        }
    }
}

impl AttackConfig {
    /// Checked at suite/CLI boundaries; the attack primitives themselves
    /// accept any parameters.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !self.step.is_finite() || self.step <= 0.0 {
            return fail(format!("step must be positive, got {}", self.step));
        }
        if self.inner_iters == 0 {
            return fail("inner iterations must be at least 1".into());
        }
        if !self.c.is_finite() || self.c <= 0.0 || self.c > 1.0 {
            return fail(format!("c must lie in (0,1], got {}", self.c));
        }
        if !self.clip_min.is_finite() || !self.clip_max.is_finite() || self.clip_min >= self.clip_max {
            return fail(format!(
                "clip bounds must satisfy min < max, got [{}, {}]",
                self.clip_min, self.clip_max
            ));
        }
        if self.epsilon_ball < 0.0 {
            return fail(format!(
                "epsilon ball must be >= 0, got {}",
                self.epsilon_ball
            ));
        }
        if self.baseline_steps == 0 {
            return fail("baseline steps must be at least 1".into());
        }
        Ok(())
    }

    fn objective_for(&self, reference: &Tensor, true_class: usize) -> ObjectiveSpec {
        if self.targeted {
            ObjectiveSpec::L2MinusLogit {
                class: self.target,
                weight: self.c,
                reference: reference.clone(),
            }
        } else {
            ObjectiveSpec::LogitPlusL2 {
                class: true_class,
                weight: self.c,
                reference: reference.clone(),
            }
        }
    }

    fn is_success(&self, logits: &Tensor, true_class: usize) -> bool {
        let predicted = logits.argmax();
        if self.targeted {
            predicted == self.target
        } else {
            predicted != true_class
        }
    }
}

/// Binary feature selector for the inner loop. Grows monotonically across
/// the outer loop; there is no way to disable a feature again.
#[derive(Debug, Clone)]
pub struct Mask {
    enabled: Vec<bool>,
    count: usize,
}

impl Mask {
    pub fn zeros(n: usize) -> Mask {
        Mask {
            enabled: vec![false; n],
            count: 0,
        }
    }

    pub fn enable(&mut self, index: usize) {
        if !self.enabled[index] {
            self.enabled[index] = true;
            self.count += 1;
        }
    }

    pub fn is_enabled(&self, index: usize) -> bool {
        self.enabled[index]
    }

    pub fn enabled_count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.enabled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.enabled.is_empty()
    }
}

/// One attack's result on one example.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub adversarial: Tensor,
    pub success: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub predicted_class: usize,
}

fn finish(
    network: &Network,
    x: &Tensor,
    x_prime: Tensor,
    true_class: usize,
    cfg: &AttackConfig,
    outer_iterations: usize,
    inner_iterations: usize,
) -> Result<AttackOutcome> {
    let z = logits(network, &x_prime)?;
    let (l0, l1, l2) = lp_norms(x, &x_prime)?;
    Ok(AttackOutcome {
        success: cfg.is_success(&z, true_class),
        predicted_class: z.argmax(),
        adversarial: x_prime,
        outer_iterations,
        inner_iterations,
        l0,
        l1,
        l2,
    })
}

/// Objective value and gradient at `x_prime`:
/// untargeted `Z(x')[true_class] + c*||x - x'||_2`,
/// targeted `c*||x - x'||_2 - Z(x')[target]`.
pub fn attack_objective(
    network: &Network,
    x: &Tensor,
    x_prime: &Tensor,
    true_class: usize,
    cfg: &AttackConfig,
) -> Result<(f64, Tensor)> {
    if !x.same_shape(x_prime) {
        return Err(Error::ShapeMismatch {
            expected: x.shape().to_vec(),
            got: x_prime.shape().to_vec(),
        });
    }
    let spec = cfg.objective_for(x, true_class);
    let trace = forward(network, x_prime)?;
    objective_with_gradient(network, &trace, x_prime, &spec)
}

/// Elementwise clamp into the legitimate range. Idempotent.
pub fn clip_box(x: &Tensor, clip_min: f64, clip_max: f64) -> Tensor {
    x.clamped(clip_min, clip_max)
}

/// Inner generation loop: up to T gradient steps on the masked coordinates,
/// clipping after every step. Success is tested before the first step and
/// after each one, so an already-misclassified iterate returns untouched.
/// Returns the updated iterate, the success flag, and the steps consumed.
pub fn ae_gen(
    x_prime: &Tensor,
    x: &Tensor,
    true_class: usize,
    network: &Network,
    cfg: &AttackConfig,
    mask: &Mask,
) -> Result<(Tensor, bool, usize)> {
    network.check_class(true_class)?;
    if cfg.targeted {
        network.check_class(cfg.target)?;
    }
    if mask.len() != x.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![x.len()],
            got: vec![mask.len()],
        });
    }
    let spec = cfg.objective_for(x, true_class);
    let mut current = x_prime.clone();
    let mut trace = forward(network, &current)?;
    if cfg.is_success(&trace.logits, true_class) {
        return Ok((current, true, 0));
    }

    let mut adam_m = vec![0.0; x.len()];
    let mut adam_v = vec![0.0; x.len()];
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const ADAM_EPS: f64 = 1e-8;

    for step_idx in 1..=cfg.inner_iters {
        let (_, grad) = objective_with_gradient(network, &trace, &current, &spec)?;
        let data = current.data_mut();
        if cfg.adam_update {
            let t = step_idx as i32;
            for i in 0..data.len() {
                if !mask.is_enabled(i) {
                    continue;
                }
                let g = grad.data()[i];
                adam_m[i] = BETA1 * adam_m[i] + (1.0 - BETA1) * g;
                adam_v[i] = BETA2 * adam_v[i] + (1.0 - BETA2) * g * g;
                let m_hat = adam_m[i] / (1.0 - BETA1.powi(t));
                let v_hat = adam_v[i] / (1.0 - BETA2.powi(t));
                data[i] -= cfg.step * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        } else {
            for (i, (v, g)) in data.iter_mut().zip(grad.data()).enumerate() {
                if mask.is_enabled(i) {
                    *v -= cfg.step * g;
                }
            }
        }
        current = clip_box(&current, cfg.clip_min, cfg.clip_max);
        trace = forward(network, &current)?;
        if cfg.is_success(&trace.logits, true_class) {
            return Ok((current, true, step_idx));
        }
    }
    Ok((current, false, cfg.inner_iters))
}

/// The full sparse attack: relevance-sorts the features of the clean input
/// once, enables them one per outer iteration, and runs the inner loop on
/// the growing mask, carrying the iterate forward. Stops at the first
/// success or after `max_features` outer iterations. Coordinates never
/// enabled stay bit-identical to `x`, so the L0 distance is bounded by the
/// number of outer iterations consumed.
pub fn di_aa(
    x: &Tensor,
    true_class: usize,
    network: &Network,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    network.check_class(true_class)?;
    if cfg.targeted {
        network.check_class(cfg.target)?;
    }
    let initial = forward(network, x)?;
    if cfg.is_success(&initial.logits, true_class) {
        return finish(network, x, x.clone(), true_class, cfg, 0, 0);
    }

    // saliency of the class whose logit the objective moves
    let saliency_class = if cfg.targeted { cfg.target } else { true_class };
    let map = dtd_relevance(network, x, saliency_class)?;
    let order = sort_saliency(&map);

    let n = x.len();
    let budget = cfg.max_features.unwrap_or(n).min(n);
    let mut mask = Mask::zeros(n);
    let mut current = x.clone();
    let mut inner_total = 0;
    let mut outer = 0;
    for &feature in order.indices.iter().take(budget) {
        mask.enable(feature);
        outer += 1;
        let (next, success, used) = ae_gen(&current, x, true_class, network, cfg, &mask)?;
        current = next;
        inner_total += used;
        if success {
            break;
        }
    }
    finish(network, x, current, true_class, cfg, outer, inner_total)
}

#[inline]
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Moves `v` into the L-infinity ball of radius `eps` around `x`,
/// intersected with `[lo, hi]`, such that the f64-computed difference
/// `v - x` itself never exceeds `eps` in magnitude. Plain clamping against
/// `x + eps` can overshoot by an ulp; the final nudge repairs that.
pub(crate) fn project_linf_box(x: f64, v: f64, eps: f64, lo: f64, hi: f64) -> f64 {
    let mut v = v.clamp(lo, hi).clamp(x - eps, x + eps);
    while v - x > eps {
        v = v.next_down();
    }
    while v - x < -eps {
        v = v.next_up();
    }
    v
}

fn project_all(x: &Tensor, v: &mut Tensor, eps: f64, lo: f64, hi: f64) {
    for (vi, xi) in v.data_mut().iter_mut().zip(x.data()) {
        *vi = project_linf_box(*xi, *vi, eps, lo, hi);
    }
}

/// Single-step epsilon-ball baseline:
/// `x' = clip(x + eps * sign(d CE / d x))`. Always untargeted.
pub fn fgsm(
    x: &Tensor,
    true_class: usize,
    network: &Network,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    network.check_class(true_class)?;
    let cfg = untargeted(cfg);
    let grad = input_gradient(
        network,
        x,
        &ObjectiveSpec::CrossEntropy { class: true_class },
    )?;
    let mut x_prime = x.clone();
    for (v, g) in x_prime.data_mut().iter_mut().zip(grad.data()) {
        *v += cfg.epsilon_ball * sign(*g);
    }
    project_all(
        x,
        &mut x_prime,
        cfg.epsilon_ball,
        cfg.clip_min,
        cfg.clip_max,
    );
    finish(network, x, x_prime, true_class, &cfg, 0, 1)
}

/// The epsilon-ball baselines misclassify, never retarget.
fn untargeted(cfg: &AttackConfig) -> AttackConfig {
    let mut cfg = cfg.clone();
    cfg.targeted = false;
    cfg
}

/// Iterated FGSM re-projected into the epsilon ball each step, with early
/// exit on success.
pub fn bim(
    x: &Tensor,
    true_class: usize,
    network: &Network,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    baseline_iterate(x, true_class, network, cfg, x.clone(), 0)
}

/// BIM from a uniformly random start inside the epsilon ball (seeded).
pub fn pgd(
    x: &Tensor,
    true_class: usize,
    network: &Network,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    network.check_class(true_class)?;
    if cfg.epsilon_ball == 0.0 {
        return finish(network, x, x.clone(), true_class, &untargeted(cfg), 0, 0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut start = x.clone();
    for v in start.data_mut().iter_mut() {
        *v += rng.gen_range(-cfg.epsilon_ball..=cfg.epsilon_ball);
    }
    project_all(x, &mut start, cfg.epsilon_ball, cfg.clip_min, cfg.clip_max);
    baseline_iterate(x, true_class, network, cfg, start, 0)
}

fn baseline_iterate(
    x: &Tensor,
    true_class: usize,
    network: &Network,
    cfg: &AttackConfig,
    mut current: Tensor,
    extra_inner: usize,
) -> Result<AttackOutcome> {
    network.check_class(true_class)?;
    let cfg = &untargeted(cfg);
    if cfg.epsilon_ball == 0.0 {
        return finish(network, x, x.clone(), true_class, cfg, 0, extra_inner);
    }
    for step_idx in 1..=cfg.baseline_steps {
        let grad = input_gradient(
            network,
            &current,
            &ObjectiveSpec::CrossEntropy { class: true_class },
        )?;
        for (v, g) in current.data_mut().iter_mut().zip(grad.data()) {
            *v += cfg.baseline_step * sign(*g);
        }
        project_all(
            x,
            &mut current,
            cfg.epsilon_ball,
            cfg.clip_min,
            cfg.clip_max,
        );
        let z = logits(network, &current)?;
        if z.argmax() != true_class {
            return finish(
                network,
                x,
                current,
                true_class,
                cfg,
                0,
                extra_inner + step_idx,
            );
        }
    }
    finish(
        network,
        x,
        current,
        true_class,
        cfg,
        0,
        extra_inner + cfg.baseline_steps,
    )
}
