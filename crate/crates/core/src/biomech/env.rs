//! Control-rate environment wrapper: reset, observation, reward, stepping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::biomech::dynamics::{
    self, clamped_leg_angles, muscle_length, muscle_velocity, SimState, IPITCH, IX, IZ, NQ,
};
use crate::biomech::model::{Side, WalkerModel};
use crate::biomech::terrain::TerrainProfile;
use crate::error::Result;
use crate::spectral::morphology::{apply_morphology, Grouping, MorphologyVector, Symmetry};

/// Default magnitude (rad) of the uniform reset perturbation.
pub const RESET_PERTURBATION: f64 = 0.02;
/// Terrain look-ahead offsets (m) ahead of the hip.
pub const LOOKAHEAD: [f64; 5] = [0.25, 0.5, 0.75, 1.0, 1.25];

const JOINT_RATE_SCALE: f64 = 0.1;
const LINEAR_RATE_SCALE: f64 = 0.5;
const MUSCLE_RATE_SCALE: f64 = 0.1;
const TERRAIN_SCALE: f64 = 5.0;

/// Upright pose at `x = 0` with seeded uniform joint and pitch offsets of at
/// most `perturbation`, lowered until the lowest foot point touches the
/// ground.
pub fn reset(
    model: &WalkerModel,
    terrain: &TerrainProfile,
    seed: u64,
    perturbation: f64,
) -> SimState {
    let mut q = [0.0; NQ];
    if perturbation > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        q[IPITCH] = rng.gen_range(-perturbation..=perturbation);
        for i in 3..NQ {
            let u: f64 = rng.gen_range(-perturbation..=perturbation);
            // Knees start inside their range.
            q[i] = if (i - 3) % 3 == 1 { u.abs() } else { u };
        }
    }
    let mut state = SimState {
        q,
        qdot: [0.0; NQ],
        activations: vec![0.0; model.num_muscles()],
        t: 0,
        done: false,
        fell: false,
        fault: false,
    };
    let lift = dynamics::contact_points(&state, model)
        .iter()
        .map(|p| terrain.height(p[0]) - p[1])
        .fold(f64::NEG_INFINITY, f64::max);
    state.q[IZ] = lift;
    state
}

/// Reward for one control step from `prev` to `next`.
pub fn reward(prev: &SimState, next: &SimState, excitations: &[f64], model: &WalkerModel) -> f64 {
    step_reward(prev.q[IX], prev.fell, next, excitations, model)
}

fn step_reward(
    prev_x: f64,
    prev_fell: bool,
    next: &SimState,
    excitations: &[f64],
    model: &WalkerModel,
) -> f64 {
    let w = &model.reward;
    let progress = (next.q[IX] - prev_x) / model.control_dt();
    let pitch = next.q[IPITCH];
    let balance = (-pitch * pitch / w.balance_width).exp();
    let effort = if excitations.is_empty() {
        0.0
    } else {
        excitations.iter().map(|u| u * u).sum::<f64>() / excitations.len() as f64
    };
    let mut r = w.forward * progress + w.balance * balance - w.effort * effort;
    if next.fell && !prev_fell {
        r -= w.fall_penalty;
    }
    r
}

pub fn observation_dim(num_muscles: usize, theta_len: usize) -> usize {
    17 + 3 * num_muscles + LOOKAHEAD.len() + theta_len
}

/// Observation vector; the final `theta_norm.len()` entries are the
/// normalized design vector.
pub fn observe(
    state: &SimState,
    theta_norm: &[f64],
    model: &WalkerModel,
    terrain: &TerrainProfile,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(observation_dim(model.num_muscles(), theta_norm.len()));
    observe_into(state, theta_norm, model, terrain, &mut out);
    out
}

pub fn observe_into(
    state: &SimState,
    theta_norm: &[f64],
    model: &WalkerModel,
    terrain: &TerrainProfile,
    out: &mut Vec<f64>,
) {
    out.clear();
    out.extend_from_slice(&state.q[3..NQ]);
    out.extend(state.qdot[3..NQ].iter().map(|v| v * JOINT_RATE_SCALE));
    let ground = terrain.height(state.q[IX]);
    out.push(state.q[IZ] - ground - model.standing_height());
    out.push(state.q[IPITCH]);
    out.push(state.qdot[IX] * LINEAR_RATE_SCALE);
    out.push(state.qdot[IZ] * LINEAR_RATE_SCALE);
    out.push(state.qdot[IPITCH] * JOINT_RATE_SCALE);
    let angles = [
        clamped_leg_angles(state, model, Side::Left),
        clamped_leg_angles(state, model, Side::Right),
    ];
    let rates = [state.leg_rates(Side::Left), state.leg_rates(Side::Right)];
    for (i, d) in model.muscles.iter().enumerate() {
        let s = d.side.index();
        out.push(muscle_length(&angles[s], d) - 1.0);
        out.push(muscle_velocity(&angles[s], &rates[s], d) * MUSCLE_RATE_SCALE);
        out.push(state.activations[i]);
    }
    for dx in LOOKAHEAD {
        out.push((terrain.height(state.q[IX] + dx) - ground) * TERRAIN_SCALE);
    }
    out.extend_from_slice(theta_norm);
}

/// Index map `p` such that the observation of a leg-mirrored state equals
/// `obs[p[i]]` at position `i`, for a design vector of `theta_groups` groups.
pub fn observation_mirror_permutation(model: &WalkerModel, theta_groups: usize) -> Vec<usize> {
    let n = model.num_muscles();
    let dim = observation_dim(n, 3 * theta_groups);
    let mut p: Vec<usize> = (0..dim).collect();
    for k in 0..3 {
        p.swap(k, k + 3);
        p.swap(6 + k, 9 + k);
    }
    let muscle_perm = model.mirror_permutation();
    for (i, &j) in muscle_perm.iter().enumerate() {
        for c in 0..3 {
            p[17 + 3 * i + c] = 17 + 3 * j + c;
        }
    }
    if theta_groups == n {
        let base = 17 + 3 * n + LOOKAHEAD.len();
        for b in 0..3 {
            for (i, &j) in muscle_perm.iter().enumerate() {
                p[base + b * n + i] = base + b * n + j;
            }
        }
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub fell: bool,
    pub fault: bool,
}

/// A walker instance with an installed morphology.
#[derive(Debug, Clone)]
pub struct WalkerEnv {
    base_model: WalkerModel,
    model: WalkerModel,
    terrain: TerrainProfile,
    grouping: Grouping,
    state: SimState,
    theta: MorphologyVector,
    theta_norm: Vec<f64>,
    pub perturbation: f64,
}

impl WalkerEnv {
    pub fn new(model: WalkerModel, terrain: TerrainProfile, symmetry: Symmetry) -> Result<Self> {
        model.validate()?;
        let grouping = Grouping::new(&model, symmetry)?;
        let theta = MorphologyVector::default_for(grouping.m());
        let state = reset(&model, &terrain, 0, RESET_PERTURBATION);
        let theta_norm = theta.normalized();
        let installed = apply_morphology(&theta, &model, &grouping)?;
        Ok(Self {
            base_model: model,
            model: installed,
            terrain,
            grouping,
            state,
            theta,
            theta_norm,
            perturbation: RESET_PERTURBATION,
        })
    }

    pub fn model(&self) -> &WalkerModel {
        &self.model
    }

    pub fn base_model(&self) -> &WalkerModel {
        &self.base_model
    }

    pub fn terrain(&self) -> &TerrainProfile {
        &self.terrain
    }

    pub fn grouping(&self) -> &Grouping {
        &self.grouping
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn set_state(&mut self, state: SimState) {
        self.state = state;
    }

    pub fn theta(&self) -> &MorphologyVector {
        &self.theta
    }

    pub fn num_muscles(&self) -> usize {
        self.model.num_muscles()
    }

    pub fn observation_dim(&self) -> usize {
        observation_dim(self.model.num_muscles(), self.theta_norm.len())
    }

    /// Install a design vector for subsequent steps.
    pub fn set_morphology(&mut self, theta: MorphologyVector) -> Result<()> {
        self.model = apply_morphology(&theta, &self.base_model, &self.grouping)?;
        self.theta_norm = theta.normalized();
        self.theta = theta;
        Ok(())
    }

    pub fn reset(&mut self, seed: u64) -> &SimState {
        self.state = reset(&self.model, &self.terrain, seed, self.perturbation);
        &self.state
    }

    pub fn observe(&self) -> Vec<f64> {
        observe(&self.state, &self.theta_norm, &self.model, &self.terrain)
    }

    pub fn observe_into(&self, out: &mut Vec<f64>) {
        observe_into(
            &self.state,
            &self.theta_norm,
            &self.model,
            &self.terrain,
            out,
        );
    }

    /// Observation of the current state with the design slice at the
    /// reference morphology.
    pub fn observe_default_design(&self) -> Vec<f64> {
        let reference = vec![0.0; self.theta_norm.len()];
        observe(&self.state, &reference, &self.model, &self.terrain)
    }

    /// Advance one control step (several physics steps).
    pub fn step(&mut self, excitations: &[f64]) -> Result<StepOutcome> {
        let prev_x = self.state.q[IX];
        let prev_fell = self.state.fell;
        for _ in 0..self.model.control_substeps {
            dynamics::step_in_place(
                &mut self.state,
                excitations,
                &self.model,
                &self.terrain,
                self.model.dt,
            )?;
            if self.state.done {
                break;
            }
        }
        let s = &self.state;
        let reward = if s.fault {
            0.0
        } else {
            step_reward(prev_x, prev_fell, s, excitations, &self.model)
        };
        Ok(StepOutcome {
            reward,
            done: s.done,
            fell: s.fell,
            fault: s.fault,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biomech::terrain::TerrainKind;

    fn env() -> WalkerEnv {
        WalkerEnv::new(
            WalkerModel::default_biped(),
            TerrainProfile::flat(),
            Symmetry::Bilateral,
        )
        .unwrap()
    }

    #[test]
    fn reset_is_seeded() {
        let model = WalkerModel::default_biped();
        let t = TerrainProfile::new(TerrainKind::Rough, 4);
        let a = reset(&model, &t, 9, 0.02);
        let b = reset(&model, &t, 9, 0.02);
        let c = reset(&model, &t, 10, 0.02);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(!a.done);
        assert!(a.activations.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_perturbation_is_nominal() {
        let model = WalkerModel::default_biped();
        let s = reset(&model, &TerrainProfile::flat(), 123, 0.0);
        let mut nominal = [0.0; NQ];
        nominal[IZ] = model.standing_height();
        assert_eq!(s.q, nominal);
        assert_eq!(s.qdot, [0.0; NQ]);
    }

    #[test]
    fn reward_terms() {
        let model = WalkerModel::default_biped();
        let s = reset(&model, &TerrainProfile::flat(), 0, 0.0);
        let zero = vec![0.0; 16];
        assert_eq!(reward(&s, &s, &zero, &model), 0.1);
        let mut moved = s.clone();
        moved.q[IX] += 0.02;
        let r = reward(&s, &moved, &zero, &model);
        assert!((r - (1.0 + 0.1)).abs() < 1e-12);
        let mut fallen = s.clone();
        fallen.fell = true;
        fallen.done = true;
        assert!((reward(&s, &fallen, &zero, &model) - (0.1 - 10.0)).abs() < 1e-12);
        // Penalty is charged only on the transition into the fall.
        assert!((reward(&fallen, &fallen, &zero, &model) - 0.1).abs() < 1e-12);
        let ones = vec![1.0; 16];
        assert!((reward(&s, &s, &ones, &model) - (0.1 - 0.05)).abs() < 1e-12);
    }

    #[test]
    fn env_step_reward_matches_free_function() {
        let mut e = env();
        e.reset(3);
        let prev = e.state().clone();
        let u = vec![0.3; 16];
        let out = e.step(&u).unwrap();
        let expected = reward(&prev, e.state(), &u, e.model());
        assert!((out.reward - expected).abs() < 1e-12);
    }

    #[test]
    fn observation_layout() {
        let mut e = env();
        e.reset(0);
        let obs = e.observe();
        assert_eq!(obs.len(), e.observation_dim());
        assert_eq!(obs.len(), 94);
        let tail = &obs[obs.len() - 24..];
        assert!(tail.iter().all(|v| *v == 0.0));
        for _ in 0..5 {
            e.step(&vec![0.5; 16]).unwrap();
            assert_eq!(e.observe().len(), 94);
        }
    }

    #[test]
    fn observation_mirror_layout() {
        let mut e = env();
        e.reset(5);
        for _ in 0..3 {
            e.step(&(0..16).map(|i| i as f64 / 16.0).collect::<Vec<_>>())
                .unwrap();
        }
        let model = e.model().clone();
        let obs = e.observe();
        let mirrored = e.state().mirrored(&model.mirror_permutation());
        e.set_state(mirrored);
        let obs_m = e.observe();
        let p = observation_mirror_permutation(&model, 8);
        for i in 0..obs.len() {
            assert_eq!(obs_m[i], obs[p[i]], "index {i}");
        }
    }

    #[test]
    fn design_slice_reflects_morphology() {
        let mut e = env();
        let mut raw = MorphologyVector::default_for(8).as_slice().to_vec();
        raw[0] = 1.5;
        e.set_morphology(MorphologyVector::new(raw).unwrap())
            .unwrap();
        e.reset(0);
        let obs = e.observe();
        assert_eq!(obs[obs.len() - 24], 1.0);
        let d = e.observe_default_design();
        assert_eq!(d[d.len() - 24], 0.0);
    }
}
