//! Browser bindings: muscle curves, latent decoding and an interactive
//! walker. Everything is also callable from Rust; the `wasm_bindgen`
//! wrappers only convert errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use sde_core::biomech::dynamics::pose;
use sde_core::biomech::{TerrainKind, TerrainProfile, WalkerEnv, WalkerModel};
use sde_core::coopt::{control_act, design_stage, Agent};
use sde_core::harness::persist::checkpoint_from_str;
use sde_core::muscle::{active_force_length, force_velocity, passive_force, DEFAULT_L_MAX};
use sde_core::spectral::{
    build_basis, collect_excitation_data, decode_morphology, LatentCode, SpectralBasis, Symmetry,
};
use sde_core::SdeError;

fn js(e: SdeError) -> JsError {
    JsError::new(&e.to_string())
}

/// `[L, F_L(L), F_P(L, kappa)]` triples for `samples` lengths spanning
/// `[0.4, l_max]`.
pub fn length_curves(kappa: f64, samples: usize) -> Result<Vec<f64>, SdeError> {
    let n = samples.max(2);
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        let l = 0.4 + (DEFAULT_L_MAX - 0.4) * i as f64 / (n - 1) as f64;
        out.extend([
            l,
            active_force_length(l),
            passive_force(l, kappa, DEFAULT_L_MAX)?,
        ]);
    }
    Ok(out)
}

/// `[v~, F_V(v~)]` pairs over normalized velocities `[-1, 1]`.
pub fn velocity_curve(samples: usize) -> Vec<f64> {
    let n = samples.max(2);
    (0..n)
        .flat_map(|i| {
            let v = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            [v, force_velocity(v)]
        })
        .collect()
}

#[wasm_bindgen(js_name = forceLengthCurves)]
pub fn force_length_curves(kappa: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    length_curves(kappa, samples).map_err(js)
}

#[wasm_bindgen(js_name = forceVelocityCurve)]
pub fn force_velocity_curve(samples: usize) -> Vec<f64> {
    velocity_curve(samples)
}

/// Spectral basis of the built-in walker.
#[wasm_bindgen]
pub struct Manifold {
    basis: SpectralBasis,
}

impl Manifold {
    pub fn build(steps: usize, seed: u64, k: usize) -> Result<Self, SdeError> {
        let model = WalkerModel::default_biped();
        let history = collect_excitation_data(&model, &TerrainProfile::flat(), steps, seed)?;
        Ok(Self {
            basis: build_basis(&history, k)?,
        })
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    /// Triad `[sigma.., nu.., kappa..]` for a latent code of length `3k`.
    pub fn decode_latent(&self, z: &[f64]) -> Result<Vec<f64>, SdeError> {
        let code = LatentCode::new(z.to_vec())?;
        Ok(decode_morphology(&code, &self.basis)?.as_slice().to_vec())
    }
}

#[wasm_bindgen]
impl Manifold {
    /// Collect `steps` rows of random-excitation data and keep `k`
    /// components.
    #[wasm_bindgen(constructor)]
    pub fn new(steps: usize, seed: u64, k: usize) -> Result<Manifold, JsError> {
        Self::build(steps, seed, k).map_err(js)
    }

    pub fn k(&self) -> usize {
        self.basis.k()
    }

    pub fn groups(&self) -> usize {
        self.basis.m()
    }

    #[wasm_bindgen(js_name = cumulativeExplainedVariance)]
    pub fn cumulative_explained_variance(&self) -> Vec<f64> {
        self.basis.cumulative_explained_variance()
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>, JsError> {
        self.decode_latent(z).map_err(js)
    }
}

/// A walker that is either driven by excitations from the page or by a
/// trained checkpoint.
#[wasm_bindgen]
pub struct WalkerDemo {
    env: WalkerEnv,
    agent: Option<Agent>,
    rng: ChaCha8Rng,
    last_reward: f64,
    total_reward: f64,
}

impl WalkerDemo {
    pub fn build(terrain: TerrainKind, seed: u64) -> Result<Self, SdeError> {
        let env = WalkerEnv::new(
            WalkerModel::default_biped(),
            TerrainProfile::new(terrain, seed),
            Symmetry::Bilateral,
        )?;
        let mut demo = Self {
            env,
            agent: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_reward: 0.0,
            total_reward: 0.0,
        };
        demo.restart(seed)?;
        Ok(demo)
    }

    /// Load a checkpoint written by `sde train`.
    pub fn build_from_checkpoint(text: &str, seed: u64) -> Result<Self, SdeError> {
        let cp = checkpoint_from_str(text, "checkpoint")?;
        let env = WalkerEnv::new(
            cp.model,
            TerrainProfile::new(cp.terrain, cp.terrain_seed),
            cp.agent.mode.symmetry(),
        )?;
        let mut demo = Self {
            env,
            agent: Some(cp.agent),
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_reward: 0.0,
            total_reward: 0.0,
        };
        demo.restart(seed)?;
        Ok(demo)
    }

    pub fn restart(&mut self, seed: u64) -> Result<(), SdeError> {
        self.env.reset(seed);
        self.last_reward = 0.0;
        self.total_reward = 0.0;
        if let Some(agent) = &self.agent {
            design_stage(&mut self.env, agent, &mut self.rng, true)?;
        }
        Ok(())
    }

    /// One control step. Without a checkpoint `excitations` drive the
    /// muscles (missing entries are zero); with one the policy acts.
    pub fn advance(&mut self, excitations: &[f64]) -> Result<bool, SdeError> {
        if self.env.state().done {
            return Ok(true);
        }
        let u = match &self.agent {
            Some(agent) => {
                control_act(&agent.control, &self.env.observe(), &mut self.rng, true)?.action
            }
            None => {
                let mut u = vec![0.0; self.env.num_muscles()];
                for (d, s) in u.iter_mut().zip(excitations) {
                    *d = s.clamp(0.0, 1.0);
                }
                u
            }
        };
        let out = self.env.step(&u)?;
        self.last_reward = out.reward;
        self.total_reward += out.reward;
        Ok(out.done)
    }

    pub fn random_excitations(&mut self) -> Vec<f64> {
        (0..self.env.num_muscles())
            .map(|_| self.rng.gen::<f64>())
            .collect()
    }

    /// `[hip, head, left knee/ankle/heel/toe, right knee/ankle/heel/toe]`
    /// as flattened `(x, z)` pairs.
    pub fn pose_points(&self) -> Vec<f64> {
        let p = pose(self.env.state(), self.env.model());
        let mut out = Vec::with_capacity(20);
        out.extend(p.hip);
        out.extend(p.head);
        for leg in p.legs {
            for pt in leg {
                out.extend(pt);
            }
        }
        out
    }
}

#[wasm_bindgen]
impl WalkerDemo {
    /// Terrain is one of `walk`, `rough`, `hilly`, `stair`.
    #[wasm_bindgen(constructor)]
    pub fn new(terrain: &str, seed: u64) -> Result<WalkerDemo, JsError> {
        let kind: TerrainKind = terrain.parse().map_err(js)?;
        Self::build(kind, seed).map_err(js)
    }

    #[wasm_bindgen(js_name = fromCheckpoint)]
    pub fn from_checkpoint(text: &str, seed: u64) -> Result<WalkerDemo, JsError> {
        Self::build_from_checkpoint(text, seed).map_err(js)
    }

    pub fn reset(&mut self, seed: u64) -> Result<(), JsError> {
        self.restart(seed).map_err(js)
    }

    /// Returns whether the episode has ended.
    pub fn step(&mut self, excitations: &[f64]) -> Result<bool, JsError> {
        self.advance(excitations).map_err(js)
    }

    #[wasm_bindgen(js_name = randomExcitations)]
    pub fn random_excitations_js(&mut self) -> Vec<f64> {
        self.random_excitations()
    }

    pub fn pose(&self) -> Vec<f64> {
        self.pose_points()
    }

    /// Terrain heights at `n` evenly spaced points of `[x0, x1]`.
    pub fn ground(&self, x0: f64, x1: f64, n: usize) -> Vec<f64> {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                self.env
                    .terrain()
                    .height(x0 + (x1 - x0) * i as f64 / (n - 1) as f64)
            })
            .collect()
    }

    pub fn muscles(&self) -> usize {
        self.env.num_muscles()
    }

    #[wasm_bindgen(js_name = isPolicyDriven)]
    pub fn is_policy_driven(&self) -> bool {
        self.agent.is_some()
    }

    /// Per-muscle triad in use, `[sigma.., nu.., kappa..]` by group.
    pub fn theta(&self) -> Vec<f64> {
        self.env.theta().as_slice().to_vec()
    }

    pub fn time(&self) -> f64 {
        self.env.state().t as f64 * self.env.model().control_dt()
    }

    pub fn distance(&self) -> f64 {
        self.env.state().x()
    }

    pub fn fell(&self) -> bool {
        self.env.state().fell
    }

    pub fn reward(&self) -> f64 {
        self.last_reward
    }

    #[wasm_bindgen(js_name = totalReward)]
    pub fn total_reward(&self) -> f64 {
        self.total_reward
    }
}
