//! Two-stage episodes: one design action at reset, then locomotion control.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::biomech::env::WalkerEnv;
use crate::coopt::mode::Mode;
use crate::coopt::policy::{
    control_from_output, control_log_det, design_from_output, design_log_det, PolicyCache,
    PolicyNetwork,
};
use crate::coopt::ppo::{compute_gae, PpoBatch};
use crate::error::{Result, SdeError};
use crate::spectral::morphology::{morphology_hash, MorphologyVector};
use crate::spectral::pca::{decode_morphology, SpectralBasis};

const ACTION_STREAM: u64 = 0xA5A5_5A5A_C3C3_3C3C;

/// Policies plus the design space they act in.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub mode: Mode,
    /// Spectral basis (SDE family) or identity basis (Direct); absent for
    /// Fixed.
    pub basis: Option<SpectralBasis>,
    pub design: Option<PolicyNetwork>,
    pub control: PolicyNetwork,
}

impl Agent {
    /// Groups of the design vector this agent produces.
    pub fn groups(&self, env: &WalkerEnv) -> usize {
        self.basis.as_ref().map_or(env.grouping().m(), |b| b.m())
    }

    pub fn validate_against(&self, env: &WalkerEnv) -> Result<()> {
        let m = env.grouping().m();
        if self.control.obs_dim() != env.observation_dim()
            || self.control.act_dim() != env.num_muscles()
        {
            return Err(SdeError::config(format!(
                "control network is {}->{}, environment needs {}->{}",
                self.control.obs_dim(),
                self.control.act_dim(),
                env.observation_dim(),
                env.num_muscles()
            )));
        }
        match (self.mode.has_design_stage(), &self.basis, &self.design) {
            (false, _, None) => Ok(()),
            (true, Some(b), Some(d)) => {
                if b.m() != m {
                    return Err(SdeError::config(format!(
                        "basis has M = {}, environment has {m} groups",
                        b.m()
                    )));
                }
                if d.act_dim() != self.mode.design_dim(b.k())
                    || d.obs_dim() != env.observation_dim()
                {
                    return Err(SdeError::config(
                        "design network shape does not match the basis",
                    ));
                }
                Ok(())
            }
            _ => Err(SdeError::config(format!(
                "{} agent has an inconsistent design stage",
                self.mode
            ))),
        }
    }
}

/// The single design-stage record of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRecord {
    pub obs: Vec<f64>,
    pub raw: Vec<f64>,
    pub latent: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Design,
    Control,
}

/// Per-step view of an episode for inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub stage: Stage,
    pub t: usize,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub seed: u64,
    pub design: Option<DesignRecord>,
    pub theta: MorphologyVector,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub obs: Vec<f64>,
    pub raw: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Hash of the applied muscle parameters after every control step.
    pub morphology_hashes: Vec<u64>,
    /// Critic value after the last step when the episode was cut by the
    /// horizon, zero otherwise.
    pub bootstrap: f64,
    pub fell: bool,
    pub fault: bool,
    pub distance: f64,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.rewards
            .iter()
            .rev()
            .fold(0.0, |acc, r| r + gamma * acc)
    }

    pub fn records(&self) -> Vec<Record> {
        let mut out = Vec::with_capacity(self.len() + 1);
        if let Some(d) = &self.design {
            out.push(Record {
                stage: Stage::Design,
                t: 0,
                log_prob: d.log_prob,
                reward: 0.0,
                value: d.value,
                done: false,
            });
        }
        let n = self.len();
        for t in 0..n {
            out.push(Record {
                stage: Stage::Control,
                t,
                log_prob: self.log_probs[t],
                reward: self.rewards[t],
                value: self.values[t],
                done: t + 1 == n,
            });
        }
        out
    }
}

/// Stage one: choose and apply the episode's morphology on a freshly reset
/// `env`. Modes without a design stage apply the default triad.
pub fn design_stage<R: Rng>(
    env: &mut WalkerEnv,
    agent: &Agent,
    rng: &mut R,
    deterministic: bool,
) -> Result<(MorphologyVector, Option<DesignRecord>)> {
    let m = env.grouping().m();
    let mut cache = PolicyCache::default();
    let mut design = None;
    let theta = match (&agent.design, &agent.basis) {
        (Some(net), Some(basis)) if agent.mode.has_design_stage() => {
            let s0 = env.observe_default_design();
            let out = net.forward_cached(&s0, &mut cache);
            let act = design_from_output(&out, rng, deterministic);
            let z = agent.mode.latent_from_action(&act.action, basis.k())?;
            let theta = decode_morphology(&z, basis)?;
            design = Some(DesignRecord {
                obs: s0,
                raw: act.raw,
                latent: z.as_slice().to_vec(),
                log_prob: act.log_prob,
                value: act.value,
            });
            theta
        }
        _ if agent.mode.has_design_stage() => {
            return Err(SdeError::config(format!(
                "{} agent has no design policy",
                agent.mode
            )));
        }
        _ => MorphologyVector::default_for(m),
    };
    env.set_morphology(theta.clone())?;
    Ok((theta, design))
}

/// Reset `env`, run the design stage, install the morphology and roll the
/// control policy to termination.
pub fn run_episode(
    env: &mut WalkerEnv,
    agent: &Agent,
    seed: u64,
    deterministic: bool,
) -> Result<Episode> {
    // Decorrelated from the reset perturbation, which also derives from `seed`.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ACTION_STREAM);
    env.reset(seed);
    let (theta, design) = design_stage(env, agent, &mut rng, deterministic)?;
    let mut cache = PolicyCache::default();

    let obs_dim = env.observation_dim();
    let act_dim = env.num_muscles();
    let mut ep = Episode {
        seed,
        design,
        theta,
        obs_dim,
        act_dim,
        obs: Vec::new(),
        raw: Vec::new(),
        log_probs: Vec::new(),
        values: Vec::new(),
        rewards: Vec::new(),
        morphology_hashes: Vec::new(),
        bootstrap: 0.0,
        fell: false,
        fault: false,
        distance: 0.0,
    };
    let x0 = env.state().x();
    let mut obs = Vec::with_capacity(obs_dim);
    loop {
        env.observe_into(&mut obs);
        let out = agent.control.forward_cached(&obs, &mut cache);
        let act = control_from_output(&out, &mut rng, deterministic);
        let step = env.step(&act.action)?;
        ep.obs.extend_from_slice(&obs);
        ep.raw.extend_from_slice(&act.raw);
        ep.log_probs.push(act.log_prob);
        ep.values.push(act.value);
        ep.rewards.push(step.reward);
        ep.morphology_hashes.push(morphology_hash(env.model()));
        if step.done {
            ep.fell = step.fell;
            ep.fault = step.fault;
            if !step.fell && !step.fault {
                env.observe_into(&mut obs);
                ep.bootstrap = agent.control.value(&obs, &mut cache);
            }
            break;
        }
    }
    ep.distance = env.state().x() - x0;
    Ok(ep)
}

/// Control and design training batches from finished episodes. Faulted
/// episodes are skipped.
pub fn build_batches(
    episodes: &[Episode],
    gamma: f64,
    lambda: f64,
    design_dim: usize,
) -> (PpoBatch, PpoBatch) {
    let obs_dim = episodes.first().map_or(0, |e| e.obs_dim);
    let act_dim = episodes.first().map_or(0, |e| e.act_dim);
    let mut control = PpoBatch::new(obs_dim, act_dim);
    let mut design = PpoBatch::new(obs_dim, design_dim);
    for ep in episodes.iter().filter(|e| !e.fault && !e.is_empty()) {
        let n = ep.len();
        let mut values = ep.values.clone();
        values.push(ep.bootstrap);
        let mut dones = vec![false; n];
        dones[n - 1] = ep.fell;
        let (adv, ret) = compute_gae(&ep.rewards, &values, &dones, gamma, lambda);
        for t in 0..n {
            let raw = &ep.raw[t * act_dim..(t + 1) * act_dim];
            let gauss = ep.log_probs[t] + control_log_det(raw);
            control.push(
                &ep.obs[t * obs_dim..(t + 1) * obs_dim],
                raw,
                gauss,
                adv[t],
                ret[t],
            );
        }
        if let Some(d) = &ep.design {
            let g = ep.discounted_return(gamma);
            let gauss = d.log_prob + design_log_det(&d.raw);
            design.push(&d.obs, &d.raw, gauss, g - d.value, g);
        }
    }
    (control, design)
}
