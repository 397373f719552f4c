//! Diagonal-Gaussian actor-critic networks and tanh-squashed sampling.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::coopt::mlp::{MlpCache, MlpShape};
use crate::error::{Result, SdeError};

pub const LOG_STD_BOUNDS: (f64, f64) = (-5.0, 2.0);
/// Half-width of the latent design box.
pub const LATENT_RANGE: f64 = 2.0;
/// Pre-squash control actions are clipped here so excitations stay strictly
/// inside `(0, 1)`.
const CONTROL_PRESQUASH_LIMIT: f64 = 15.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Actor and critic MLPs plus a state-independent log-std, all stored in one
/// flat parameter vector `[actor.., critic.., log_std..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork {
    pub actor: MlpShape,
    pub critic: MlpShape,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
}

/// Forward caches for one sample.
#[derive(Debug, Clone, Default)]
pub struct PolicyCache {
    pub actor: MlpCache,
    pub critic: MlpCache,
}

impl PolicyNetwork {
    pub fn new<R: Rng>(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        init_log_std: f64,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        let actor = MlpShape::new([sizes.clone(), vec![act_dim]].concat());
        let critic = MlpShape::new([sizes, vec![1]].concat());
        let mut params = actor.init(rng, 0.01);
        params.extend(critic.init(rng, 1.0));
        params.extend(std::iter::repeat(init_log_std).take(act_dim));
        Self {
            actor,
            critic,
            params,
        }
    }

    pub fn from_parts(actor: MlpShape, critic: MlpShape, params: Vec<f64>) -> Result<Self> {
        if actor.input() != critic.input() || critic.output() != 1 {
            return Err(SdeError::domain("actor and critic shapes are incompatible"));
        }
        let expected = actor.num_params() + critic.num_params() + actor.output();
        if params.len() != expected {
            return Err(SdeError::domain(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            actor,
            critic,
            params,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn actor_params(&self) -> &[f64] {
        &self.params[..self.actor.num_params()]
    }

    pub fn critic_params(&self) -> &[f64] {
        let a = self.actor.num_params();
        &self.params[a..a + self.critic.num_params()]
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.actor.num_params() + self.critic.num_params()..]
    }

    /// Ranges of the three parameter groups within `params`.
    pub fn ranges(&self) -> [std::ops::Range<usize>; 3] {
        let a = self.actor.num_params();
        let c = a + self.critic.num_params();
        [0..a, a..c, c..self.params.len()]
    }

    pub fn clamp_log_std(&mut self) {
        let r = self.ranges()[2].clone();
        for v in &mut self.params[r] {
            *v = v.clamp(LOG_STD_BOUNDS.0, LOG_STD_BOUNDS.1);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    pub fn forward_cached(&self, input: &[f64], cache: &mut PolicyCache) -> PolicyOutput {
        self.actor
            .forward(self.actor_params(), input, &mut cache.actor);
        self.critic
            .forward(self.critic_params(), input, &mut cache.critic);
        PolicyOutput {
            mean: cache.actor.output().to_vec(),
            log_std: self.log_std().to_vec(),
            value: cache.critic.output()[0],
        }
    }

    pub fn value(&self, input: &[f64], cache: &mut PolicyCache) -> f64 {
        self.critic
            .forward(self.critic_params(), input, &mut cache.critic);
        cache.critic.output()[0]
    }
}

/// Mean action, log-std and value for `input`.
pub fn mlp_forward(net: &PolicyNetwork, input: &[f64]) -> Result<PolicyOutput> {
    if input.len() != net.obs_dim() {
        return Err(SdeError::domain(format!(
            "input of length {} for a network expecting {}",
            input.len(),
            net.obs_dim()
        )));
    }
    Ok(net.forward_cached(input, &mut PolicyCache::default()))
}

/// Log-density of `u` under the diagonal Gaussian.
pub fn gaussian_log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((u, m), ls)| {
            let z = (u - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum()
}

/// `ln(1 - tanh(u)^2)`, stable for large `|u|`.
fn log_sech2(u: f64) -> f64 {
    let a = u.abs();
    2.0 * (std::f64::consts::LN_2 - a - (-2.0 * a).exp().ln_1p())
}

/// Squashing of pre-activation design samples into the latent box.
pub fn design_squash(u: f64) -> f64 {
    LATENT_RANGE * u.tanh()
}

/// `ln |dz/du|` summed over the design action.
pub fn design_log_det(u: &[f64]) -> f64 {
    u.iter().map(|&v| LATENT_RANGE.ln() + log_sech2(v)).sum()
}

/// Squashing of pre-activation control samples into excitations.
pub fn control_squash(u: f64) -> f64 {
    let u = u.clamp(-CONTROL_PRESQUASH_LIMIT, CONTROL_PRESQUASH_LIMIT);
    0.5 * (u.tanh() + 1.0)
}

/// `ln |de/du|` summed over the control action.
pub fn control_log_det(u: &[f64]) -> f64 {
    u.iter()
        .map(|&v| log_sech2(v) - std::f64::consts::LN_2)
        .sum()
}

/// Sampled action together with its pre-squash value.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    /// Squashed action handed to the environment.
    pub action: Vec<f64>,
    /// Gaussian sample before squashing.
    pub raw: Vec<f64>,
    /// Log-density of `action`, including the change of variables.
    pub log_prob: f64,
    pub value: f64,
}

fn sample_raw<R: Rng>(out: &PolicyOutput, rng: &mut R, deterministic: bool) -> Vec<f64> {
    if deterministic {
        return out.mean.clone();
    }
    out.mean
        .iter()
        .zip(&out.log_std)
        .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Sample a latent design code `z = LATENT_RANGE * tanh(u)` from the
/// initial-state observation. `deterministic` uses the Gaussian mean.
pub fn design_act<R: Rng>(
    net: &PolicyNetwork,
    s0: &[f64],
    rng: &mut R,
    deterministic: bool,
) -> Result<Action> {
    let out = mlp_forward(net, s0)?;
    Ok(design_from_output(&out, rng, deterministic))
}

/// Sample per-muscle excitations `(tanh(u) + 1) / 2`.
pub fn control_act<R: Rng>(
    net: &PolicyNetwork,
    obs: &[f64],
    rng: &mut R,
    deterministic: bool,
) -> Result<Action> {
    let out = mlp_forward(net, obs)?;
    Ok(control_from_output(&out, rng, deterministic))
}

pub(crate) fn control_from_output<R: Rng>(
    out: &PolicyOutput,
    rng: &mut R,
    deterministic: bool,
) -> Action {
    let raw = sample_raw(out, rng, deterministic);
    let log_prob = gaussian_log_prob(&raw, &out.mean, &out.log_std) - control_log_det(&raw);
    Action {
        action: raw.iter().map(|&u| control_squash(u)).collect(),
        raw,
        log_prob,
        value: out.value,
    }
}

pub(crate) fn design_from_output<R: Rng>(
    out: &PolicyOutput,
    rng: &mut R,
    deterministic: bool,
) -> Action {
    let raw = sample_raw(out, rng, deterministic);
    let log_prob = gaussian_log_prob(&raw, &out.mean, &out.log_std) - design_log_det(&raw);
    Action {
        action: raw.iter().map(|&u| design_squash(u)).collect(),
        raw,
        log_prob,
        value: out.value,
    }
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / b1t) / ((*v / b2t).sqrt() + self.eps);
        }
    }
}
