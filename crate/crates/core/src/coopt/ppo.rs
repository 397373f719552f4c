//! Advantage estimation and the clipped-surrogate update.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coopt::policy::{gaussian_entropy, gaussian_log_prob, Adam, PolicyCache, PolicyNetwork};
use crate::error::{Result, SdeError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoParams {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Control steps gathered per update.
    pub rollout_steps: usize,
    pub normalize_advantages: bool,
}

impl Default for PpoParams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch: 256,
            learning_rate: 3e-4,
            entropy_coef: 1e-3,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            rollout_steps: 8192,
            normalize_advantages: true,
        }
    }
}

impl PpoParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(SdeError::config(format!("ppo: {what}")));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.rollout_steps == 0 {
            return bad("epochs, minibatch and rollout_steps must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("learning_rate and max_grad_norm must be positive");
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return bad("loss coefficients must be non-negative");
        }
        Ok(())
    }
}

/// Generalized advantage estimates. `values` has one more entry than
/// `rewards`: the bootstrap value after the last step (ignored when that
/// step is terminal).
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let t = rewards.len();
    assert_eq!(
        values.len(),
        t + 1,
        "values must include the bootstrap entry"
    );
    assert_eq!(dones.len(), t);
    let mut adv = vec![0.0; t];
    let mut next = 0.0;
    for i in (0..t).rev() {
        let live = if dones[i] { 0.0 } else { 1.0 };
        let delta = rewards[i] + gamma * values[i + 1] * live - values[i];
        next = delta + gamma * lambda * live * next;
        adv[i] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Flat storage of policy-gradient samples for one network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PpoBatch {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub obs: Vec<f64>,
    /// Pre-squash actions.
    pub raw: Vec<f64>,
    /// Gaussian log-density of `raw` under the behaviour policy.
    pub old_log_prob: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }

    pub fn push(&mut self, obs: &[f64], raw: &[f64], old_log_prob: f64, advantage: f64, ret: f64) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        debug_assert_eq!(raw.len(), self.act_dim);
        self.obs.extend_from_slice(obs);
        self.raw.extend_from_slice(raw);
        self.old_log_prob.push(old_log_prob);
        self.advantages.push(advantage);
        self.returns.push(ret);
    }

    pub fn obs(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn raw(&self, i: usize) -> &[f64] {
        &self.raw[i * self.act_dim..(i + 1) * self.act_dim]
    }

    /// Shift and scale advantages to zero mean and unit std.
    pub fn normalize_advantages(&mut self) {
        let n = self.len();
        if n < 2 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n as f64;
        let var = self
            .advantages
            .iter()
            .map(|a| (a - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt();
        if std > 1e-8 {
            self.advantages
                .iter_mut()
                .for_each(|a| *a = (*a - mean) / std);
        } else {
            self.advantages.iter_mut().for_each(|a| *a -= mean);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Total PPO loss over `indices` and its gradient with respect to every
/// network parameter (minimized: negated surrogate, weighted value error,
/// negated entropy bonus).
pub fn loss_and_grad(
    net: &PolicyNetwork,
    batch: &PpoBatch,
    indices: &[usize],
    p: &PpoParams,
) -> (LossStats, Vec<f64>) {
    let mut grad = vec![0.0; net.num_params()];
    let [ra, rc, rl] = net.ranges();
    let n = indices.len().max(1) as f64;
    let log_std = net.log_std().to_vec();
    let inv_var: Vec<f64> = log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    let mut cache = PolicyCache::default();
    let mut scratch = Default::default();
    let mut d_mean = vec![0.0; net.act_dim()];
    let mut stats = LossStats::default();
    let (lo, hi) = (1.0 - p.clip, 1.0 + p.clip);
    for &i in indices {
        let out = net.forward_cached(batch.obs(i), &mut cache);
        let u = batch.raw(i);
        let logp = gaussian_log_prob(u, &out.mean, &log_std);
        let log_ratio = logp - batch.old_log_prob[i];
        let ratio = log_ratio.exp();
        let a = batch.advantages[i];
        let unclipped = ratio * a;
        let clipped = ratio.clamp(lo, hi) * a;
        stats.policy -= unclipped.min(clipped) / n;
        stats.approx_kl += (ratio - 1.0 - log_ratio) / n;
        if ratio < lo || ratio > hi {
            stats.clip_fraction += 1.0 / n;
        }
        // The surrogate follows the ratio unless the clipped branch is the
        // strictly smaller one, where it is flat.
        let coef = if unclipped <= clipped { a } else { 0.0 };
        let d_logp = -coef * ratio / n;
        if d_logp != 0.0 {
            for j in 0..d_mean.len() {
                let diff = u[j] - out.mean[j];
                d_mean[j] = d_logp * diff * inv_var[j];
                grad[rl.start + j] += d_logp * (diff * diff * inv_var[j] - 1.0);
            }
            net.actor.backward(
                &net.params[ra.clone()],
                &cache.actor,
                &d_mean,
                &mut grad[ra.clone()],
                &mut scratch,
            );
        }
        let err = out.value - batch.returns[i];
        stats.value += err * err / n;
        let d_v = [2.0 * p.value_coef * err / n];
        net.critic.backward(
            &net.params[rc.clone()],
            &cache.critic,
            &d_v,
            &mut grad[rc.clone()],
            &mut scratch,
        );
    }
    stats.entropy = gaussian_entropy(&log_std);
    for g in &mut grad[rl] {
        *g -= p.entropy_coef;
    }
    stats.total = stats.policy + p.value_coef * stats.value - p.entropy_coef * stats.entropy;
    (stats, grad)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub loss: LossStats,
    pub minibatches: usize,
    /// A non-finite loss or gradient stopped the update and the previous
    /// parameters were restored.
    pub aborted: bool,
}

/// Run the configured epochs of minibatch updates on `batch`.
pub fn ppo_update<R: Rng>(
    net: &mut PolicyNetwork,
    opt: &mut Adam,
    batch: &PpoBatch,
    p: &PpoParams,
    rng: &mut R,
) -> UpdateStats {
    let mut stats = UpdateStats::default();
    if batch.is_empty() {
        return stats;
    }
    let mut batch_n;
    let batch = if p.normalize_advantages {
        batch_n = batch.clone();
        batch_n.normalize_advantages();
        &batch_n
    } else {
        batch
    };
    let saved = (net.params.clone(), opt.clone());
    let mut idx: Vec<usize> = (0..batch.len()).collect();
    let mut acc = LossStats::default();
    for _ in 0..p.epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(p.minibatch) {
            let (s, mut grad) = loss_and_grad(net, batch, chunk, p);
            if !s.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                net.params = saved.0;
                *opt = saved.1;
                stats.aborted = true;
                return stats;
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > p.max_grad_norm {
                let scale = p.max_grad_norm / norm;
                grad.iter_mut().for_each(|g| *g *= scale);
            }
            opt.step(&mut net.params, &grad);
            net.clamp_log_std();
            stats.minibatches += 1;
            acc.total += s.total;
            acc.policy += s.policy;
            acc.value += s.value;
            acc.entropy += s.entropy;
            acc.approx_kl += s.approx_kl;
            acc.clip_fraction += s.clip_fraction;
        }
    }
    let k = stats.minibatches as f64;
    stats.loss = LossStats {
        total: acc.total / k,
        policy: acc.policy / k,
        value: acc.value / k,
        entropy: acc.entropy / k,
        approx_kl: acc.approx_kl / k,
        clip_fraction: acc.clip_fraction / k,
    };
    stats
}
