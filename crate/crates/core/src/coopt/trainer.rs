//! Rollout collection, joint updates and periodic evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::biomech::env::WalkerEnv;
use crate::biomech::model::WalkerModel;
use crate::biomech::terrain::{TerrainKind, TerrainProfile};
use crate::coopt::mode::Mode;
use crate::coopt::policy::{Adam, PolicyNetwork};
use crate::coopt::ppo::{ppo_update, PpoParams, UpdateStats};
use crate::coopt::rollout::{build_batches, run_episode, Agent, Episode};
use crate::error::{Result, SdeError};
use crate::spectral::morphology::{Block, MorphologyVector};
use crate::spectral::pca::SpectralBasis;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Retained spectral components (SDE family only).
    pub k: usize,
    pub terrain: TerrainKind,
    pub terrain_seed: u64,
    pub seed: u64,
    /// Control steps to train for.
    pub step_budget: u64,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Parallel rollout workers; 1 is bit-reproducible.
    pub workers: usize,
    pub control_hidden: Vec<usize>,
    pub design_hidden: Vec<usize>,
    pub ppo: PpoParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Sde,
            k: 5,
            terrain: TerrainKind::Walk,
            terrain_seed: 0,
            seed: 0,
            step_budget: 1_000_000,
            eval_every: 10,
            eval_episodes: 5,
            workers: 1,
            control_hidden: vec![128, 128],
            design_hidden: vec![64, 64],
            ppo: PpoParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        if self.workers == 0 || self.eval_every == 0 {
            return Err(SdeError::config("workers and eval_every must be positive"));
        }
        if self.control_hidden.is_empty() || self.design_hidden.is_empty() {
            return Err(SdeError::config("networks need at least one hidden layer"));
        }
        if self
            .control_hidden
            .iter()
            .chain(&self.design_hidden)
            .any(|h| *h == 0)
        {
            return Err(SdeError::config("hidden layer sizes must be positive"));
        }
        if self.mode.uses_spectral_basis() && self.k == 0 {
            return Err(SdeError::config("k must be at least 1"));
        }
        Ok(())
    }
}

/// One learning-curve row. Empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub iteration: usize,
    pub env_steps: u64,
    pub mean_return: Option<f64>,
    pub std_return: Option<f64>,
    pub eval_return: Option<f64>,
    pub mean_sigma: Option<f64>,
    pub mean_nu: Option<f64>,
    pub mean_kappa: Option<f64>,
    pub explained_variance_k: Option<f64>,
    pub faulted_episodes: usize,
    pub update_aborted: bool,
}

/// Deterministic-policy evaluation result.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSummary {
    pub returns: Vec<f64>,
    pub lengths: Vec<usize>,
    pub fell: Vec<bool>,
    pub thetas: Vec<MorphologyVector>,
}

impl EvalSummary {
    pub fn episodes(&self) -> usize {
        self.returns.len()
    }

    pub fn mean_return(&self) -> Option<f64> {
        mean(&self.returns)
    }

    pub fn std_return(&self) -> Option<f64> {
        std_dev(&self.returns)
    }

    pub fn fall_rate(&self) -> Option<f64> {
        let n = self.fell.len();
        (n > 0).then(|| self.fell.iter().filter(|f| **f).count() as f64 / n as f64)
    }

    /// Component-wise mean design vector.
    pub fn mean_theta(&self) -> Option<MorphologyVector> {
        let first = self.thetas.first()?;
        let mut acc = vec![0.0; first.as_slice().len()];
        for t in &self.thetas {
            for (a, v) in acc.iter_mut().zip(t.as_slice()) {
                *a += v;
            }
        }
        let n = self.thetas.len() as f64;
        MorphologyVector::new(acc.into_iter().map(|v| v / n).collect()).ok()
    }
}

pub(crate) fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Population standard deviation.
pub(crate) fn std_dev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt())
}

/// SplitMix64 finalizer over two words; used to derive per-episode seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const EVAL_STREAM: u64 = 0xE7A1;

/// Deterministic rollouts of `agent` on `episodes` fixed reset seeds.
pub fn evaluate_agent(
    agent: &Agent,
    env: &mut WalkerEnv,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    agent.validate_against(env)?;
    let mut out = EvalSummary::default();
    for i in 0..episodes {
        let ep = run_episode(
            env,
            agent,
            mix_seed(mix_seed(seed, EVAL_STREAM), i as u64),
            true,
        )?;
        out.returns.push(ep.total_reward());
        out.lengths.push(ep.len());
        out.fell.push(ep.fell);
        out.thetas.push(ep.theta);
    }
    Ok(out)
}

/// Everything produced by one training iteration.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub curve: CurveRow,
    pub episodes: Vec<Episode>,
    pub control_update: UpdateStats,
    pub design_update: Option<UpdateStats>,
    pub eval: Option<EvalSummary>,
}

/// Initial log-std of the design policy. Early designs stay close to the
/// reference body (latent spread about 0.27) instead of scattering across
/// the latent box while the controller is still untrained.
pub const DESIGN_INIT_LOG_STD: f64 = -2.0;

/// Build the initial agent for `config`. `basis` is required for the SDE
/// family and ignored otherwise.
pub fn init_agent(
    config: &TrainConfig,
    env: &WalkerEnv,
    basis: Option<SpectralBasis>,
) -> Result<Agent> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0x1417));
    let m = env.grouping().m();
    let basis = match config.mode {
        Mode::Fixed => None,
        Mode::Direct => Some(SpectralBasis::identity(m, config.mode.symmetry())),
        mode => {
            let b =
                basis.ok_or_else(|| SdeError::config(format!("{mode} needs a spectral basis")))?;
            if b.k() != config.k {
                return Err(SdeError::config(format!(
                    "basis retains {} components, config asks for {}",
                    b.k(),
                    config.k
                )));
            }
            if b.symmetry != mode.symmetry() || b.m() != m {
                return Err(SdeError::config(format!(
                    "basis over {} {:?} groups does not fit {mode}",
                    b.m(),
                    b.symmetry
                )));
            }
            Some(b)
        }
    };
    let obs_dim = env.observation_dim();
    let control = PolicyNetwork::new(
        obs_dim,
        env.num_muscles(),
        &config.control_hidden,
        0.0,
        &mut rng,
    );
    let design = basis.as_ref().map(|b| {
        PolicyNetwork::new(
            obs_dim,
            config.mode.design_dim(b.k()),
            &config.design_hidden,
            DESIGN_INIT_LOG_STD,
            &mut rng,
        )
    });
    let agent = Agent {
        mode: config.mode,
        basis,
        design,
        control,
    };
    agent.validate_against(env)?;
    Ok(agent)
}

pub struct Trainer {
    config: TrainConfig,
    envs: Vec<WalkerEnv>,
    agent: Agent,
    control_opt: Adam,
    design_opt: Option<Adam>,
    rng: ChaCha8Rng,
    pool: Option<rayon::ThreadPool>,
    iteration: usize,
    env_steps: u64,
}

impl Trainer {
    pub fn new(
        config: TrainConfig,
        model: WalkerModel,
        basis: Option<SpectralBasis>,
    ) -> Result<Self> {
        config.validate()?;
        let terrain = TerrainProfile::new(config.terrain, config.terrain_seed);
        let env = WalkerEnv::new(model, terrain, config.mode.symmetry())?;
        let agent = init_agent(&config, &env, basis)?;
        let lr = config.ppo.learning_rate;
        let control_opt = Adam::new(agent.control.num_params(), lr);
        let design_opt = agent.design.as_ref().map(|d| Adam::new(d.num_params(), lr));
        let pool = if config.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.workers)
                    .build()
                    .map_err(|e| SdeError::config(format!("worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0x0b7)),
            envs: vec![env; config.workers],
            config,
            agent,
            control_opt,
            design_opt,
            pool,
            iteration: 0,
            env_steps: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn finished(&self) -> bool {
        self.env_steps >= self.config.step_budget
    }

    pub fn env(&self) -> &WalkerEnv {
        &self.envs[0]
    }

    /// Gather whole episodes until the rollout target is met; workers'
    /// episodes are concatenated in worker order.
    pub fn collect(&mut self) -> Result<Vec<Episode>> {
        let remaining = self.config.step_budget.saturating_sub(self.env_steps);
        let target = (self.config.ppo.rollout_steps as u64).min(remaining).max(1) as usize;
        let workers = self.envs.len();
        let per_worker = target.div_ceil(workers);
        let base = mix_seed(self.config.seed, self.iteration as u64 + 1);
        let agent = &self.agent;
        let job = |(w, env): (usize, &mut WalkerEnv)| -> Result<Vec<Episode>> {
            let mut eps = Vec::new();
            let mut steps = 0;
            let wseed = mix_seed(base, w as u64);
            while steps < per_worker {
                let ep = run_episode(env, agent, mix_seed(wseed, eps.len() as u64), false)?;
                steps += ep.len();
                eps.push(ep);
            }
            Ok(eps)
        };
        let per: Vec<Result<Vec<Episode>>> = match &self.pool {
            Some(pool) => pool.install(|| self.envs.par_iter_mut().enumerate().map(job).collect()),
            None => self.envs.iter_mut().enumerate().map(job).collect(),
        };
        let mut out = Vec::new();
        for r in per {
            out.extend(r?);
        }
        Ok(out)
    }

    /// Update both policies from `episodes`.
    pub fn update(&mut self, episodes: &[Episode]) -> (UpdateStats, Option<UpdateStats>) {
        let p = &self.config.ppo;
        let design_dim = self.agent.design.as_ref().map_or(0, |d| d.act_dim());
        let (control, design) = build_batches(episodes, p.gamma, p.lambda, design_dim);
        let cs = ppo_update(
            &mut self.agent.control,
            &mut self.control_opt,
            &control,
            p,
            &mut self.rng,
        );
        let ds = match (&mut self.agent.design, &mut self.design_opt) {
            (Some(net), Some(opt)) => Some(ppo_update(net, opt, &design, p, &mut self.rng)),
            _ => None,
        };
        (cs, ds)
    }

    pub fn evaluate(&mut self, episodes: usize) -> Result<EvalSummary> {
        evaluate_agent(&self.agent, &mut self.envs[0], episodes, self.config.seed)
    }

    /// Collect, update and (on the evaluation cadence or at the end of the
    /// budget) evaluate.
    pub fn step(&mut self) -> Result<IterationReport> {
        let episodes = self.collect()?;
        self.iteration += 1;
        self.env_steps += episodes.iter().map(|e| e.len() as u64).sum::<u64>();
        let (control_update, design_update) = self.update(&episodes);
        let eval = if self.iteration % self.config.eval_every == 0 || self.finished() {
            Some(self.evaluate(self.config.eval_episodes)?)
        } else {
            None
        };
        let good: Vec<&Episode> = episodes.iter().filter(|e| !e.fault).collect();
        let returns: Vec<f64> = good.iter().map(|e| e.total_reward()).collect();
        let block_mean = |b: Block| -> Option<f64> {
            if !self.config.mode.has_design_stage() {
                return None;
            }
            mean(
                &good
                    .iter()
                    .map(|e| e.theta.block_mean(b))
                    .collect::<Vec<_>>(),
            )
        };
        let curve = CurveRow {
            iteration: self.iteration,
            env_steps: self.env_steps,
            mean_return: mean(&returns),
            std_return: std_dev(&returns),
            eval_return: eval.as_ref().and_then(EvalSummary::mean_return),
            mean_sigma: block_mean(Block::Sigma),
            mean_nu: block_mean(Block::Nu),
            mean_kappa: block_mean(Block::Kappa),
            explained_variance_k: self
                .agent
                .basis
                .as_ref()
                .filter(|_| self.config.mode.uses_spectral_basis())
                .map(SpectralBasis::explained_variance),
            faulted_episodes: episodes.len() - good.len(),
            update_aborted: control_update.aborted || design_update.is_some_and(|d| d.aborted),
        };
        Ok(IterationReport {
            curve,
            episodes,
            control_update,
            design_update,
            eval,
        })
    }
}

/// Train to the configured budget, calling `on_iteration` after each
/// iteration. Returns the learning curve and the final agent.
pub fn train(
    config: TrainConfig,
    model: WalkerModel,
    basis: Option<SpectralBasis>,
    mut on_iteration: impl FnMut(&IterationReport) -> Result<()>,
) -> Result<(Vec<CurveRow>, Agent)> {
    let mut trainer = Trainer::new(config, model, basis)?;
    let mut curve = Vec::new();
    while !trainer.finished() {
        let report = trainer.step()?;
        on_iteration(&report)?;
        curve.push(report.curve);
    }
    Ok((curve, trainer.agent))
}
