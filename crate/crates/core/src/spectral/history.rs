//! Muscle-length histories recorded under random excitation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::biomech::dynamics::{clamped_leg_angles, muscle_length, SimState};
use crate::biomech::env::WalkerEnv;
use crate::biomech::model::{Side, WalkerModel};
use crate::biomech::terrain::TerrainProfile;
use crate::error::{Result, SdeError};
use crate::spectral::linalg::Matrix;
use crate::spectral::morphology::{Grouping, Symmetry};

/// Minimum rows per column for a usable covariance estimate.
pub const MIN_ROWS_PER_GROUP: usize = 10;
pub const UNIFORM_SOURCE: &str = "uniform-excitation";

/// `T x M` matrix of group-averaged normalized muscle lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthHistory {
    pub data: Matrix,
    pub seed: u64,
    pub source: String,
    pub symmetry: Symmetry,
}

impl LengthHistory {
    pub fn new(
        data: Matrix,
        seed: u64,
        source: impl Into<String>,
        symmetry: Symmetry,
    ) -> Result<Self> {
        if data.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(SdeError::domain(
                "length history contains non-finite entries",
            ));
        }
        Ok(Self {
            data,
            seed,
            source: source.into(),
            symmetry,
        })
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn m(&self) -> usize {
        self.data.cols()
    }
}

/// Normalized length of every muscle in `state`.
pub fn muscle_lengths(state: &SimState, model: &WalkerModel) -> Vec<f64> {
    let angles = [
        clamped_leg_angles(state, model, Side::Left),
        clamped_leg_angles(state, model, Side::Right),
    ];
    model
        .muscles
        .iter()
        .map(|d| muscle_length(&angles[d.side.index()], d))
        .collect()
}

/// Bilateral history under i.i.d. `U(0, 1)` excitations.
pub fn collect_excitation_data(
    model: &WalkerModel,
    terrain: &TerrainProfile,
    steps: usize,
    seed: u64,
) -> Result<LengthHistory> {
    collect_grouped(model, terrain, steps, seed, Symmetry::Bilateral)
}

/// Drive the default-morphology walker with i.i.d. uniform excitations for
/// `steps` control steps, recording group-averaged lengths after each step.
/// Falls reset the walker and collection continues.
pub fn collect_grouped(
    model: &WalkerModel,
    terrain: &TerrainProfile,
    steps: usize,
    seed: u64,
    symmetry: Symmetry,
) -> Result<LengthHistory> {
    let grouping = Grouping::new(model, symmetry)?;
    let m = grouping.m();
    if steps < MIN_ROWS_PER_GROUP * m {
        return Err(SdeError::domain(format!(
            "{steps} steps is below the minimum of {} for {m} groups",
            MIN_ROWS_PER_GROUP * m
        )));
    }
    let mut env = WalkerEnv::new(model.clone(), terrain.clone(), symmetry)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episode = 0u64;
    env.reset(episode_seed(seed, episode));
    let n = model.num_muscles();
    let mut data = Vec::with_capacity(steps * m);
    let mut u = vec![0.0; n];
    for row in 0..steps {
        for x in u.iter_mut() {
            *x = rng.gen::<f64>();
        }
        let out = env.step(&u)?;
        if out.fault {
            return Err(SdeError::PartialData {
                rows: row,
                reason: format!("simulation fault in excitation episode {episode}"),
            });
        }
        data.extend(grouping.average(&muscle_lengths(env.state(), env.model())));
        if out.done {
            episode += 1;
            env.reset(episode_seed(seed, episode));
        }
    }
    LengthHistory::new(
        Matrix::from_vec(steps, m, data)?,
        seed,
        UNIFORM_SOURCE,
        symmetry,
    )
}

fn episode_seed(seed: u64, episode: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ episode
}
