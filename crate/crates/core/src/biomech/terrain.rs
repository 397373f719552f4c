use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdeError};

pub const TRACK_LENGTH: f64 = 200.0;

pub const HILL_AMPLITUDES: [f64; 2] = [0.15, 0.08];
pub const HILL_WAVELENGTHS: [f64; 2] = [6.0, 2.3];
pub const ROUGH_CELL: f64 = 0.2;
pub const ROUGH_AMPLITUDE: f64 = 0.05;
pub const STAIR_RISE: f64 = 0.1;
pub const STAIR_RUN: f64 = 0.4;

/// Window half-width (m) for the finite-difference contact normal.
const SLOPE_WINDOW: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerrainKind {
    Walk,
    Rough,
    Hilly,
    Stair,
}

impl TerrainKind {
    pub const ALL: [TerrainKind; 4] = [
        TerrainKind::Walk,
        TerrainKind::Rough,
        TerrainKind::Hilly,
        TerrainKind::Stair,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TerrainKind::Walk => "walk",
            TerrainKind::Rough => "rough",
            TerrainKind::Hilly => "hilly",
            TerrainKind::Stair => "stair",
        }
    }
}

impl std::str::FromStr for TerrainKind {
    type Err = SdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "walk" => Ok(TerrainKind::Walk),
            "rough" => Ok(TerrainKind::Rough),
            "hilly" => Ok(TerrainKind::Hilly),
            "stair" => Ok(TerrainKind::Stair),
            other => Err(SdeError::config(format!("unknown terrain kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for TerrainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground profile along the track. Heights outside `[0, TRACK_LENGTH]`
/// continue the boundary value.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainProfile {
    pub kind: TerrainKind,
    pub seed: u64,
    /// Cell heights for rough terrain, empty otherwise.
    pub cells: Vec<f64>,
}

impl TerrainProfile {
    pub fn new(kind: TerrainKind, seed: u64) -> Self {
        let cells = if kind == TerrainKind::Rough {
            let n = (TRACK_LENGTH / ROUGH_CELL).ceil() as usize + 1;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| rng.gen_range(-ROUGH_AMPLITUDE..=ROUGH_AMPLITUDE))
                .collect()
        } else {
            Vec::new()
        };
        Self { kind, seed, cells }
    }

    pub fn flat() -> Self {
        Self::new(TerrainKind::Walk, 0)
    }

    #[inline]
    pub fn height(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, TRACK_LENGTH);
        match self.kind {
            TerrainKind::Walk => 0.0,
            TerrainKind::Hilly => HILL_AMPLITUDES
                .iter()
                .zip(HILL_WAVELENGTHS)
                .map(|(a, w)| a * (std::f64::consts::TAU * x / w).sin())
                .sum(),
            TerrainKind::Rough => {
                let u = x / ROUGH_CELL;
                let i = (u.floor() as usize).min(self.cells.len() - 2);
                let frac = u - i as f64;
                self.cells[i] * (1.0 - frac) + self.cells[i + 1] * frac
            }
            TerrainKind::Stair => (x / STAIR_RUN).floor() * STAIR_RISE,
        }
    }

    /// Unit outward normal of the ground near `x`, from a central difference.
    #[inline]
    pub fn normal(&self, x: f64) -> [f64; 2] {
        if self.kind == TerrainKind::Walk {
            return [0.0, 1.0];
        }
        let slope =
            (self.height(x + SLOPE_WINDOW) - self.height(x - SLOPE_WINDOW)) / (2.0 * SLOPE_WINDOW);
        let norm = (1.0 + slope * slope).sqrt();
        [-slope / norm, 1.0 / norm]
    }
}

pub fn terrain_height(x: f64, profile: &TerrainProfile) -> f64 {
    profile.height(x)
}
