//! Training modes: the spectral method, its baselines and ablations.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdeError};
use crate::spectral::morphology::{Block, Symmetry};
use crate::spectral::pca::LatentCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Full triad on the bilateral spectral basis.
    #[serde(rename = "SDE")]
    Sde,
    /// Reference morphology, control only.
    #[serde(rename = "Fixed")]
    Fixed,
    /// Raw offsets over all `3M` parameters.
    #[serde(rename = "Direct")]
    Direct,
    #[serde(rename = "SDE-sigma")]
    SdeSigma,
    #[serde(rename = "SDE-nu")]
    SdeNu,
    #[serde(rename = "SDE-kappa")]
    SdeKappa,
    /// Per-muscle basis without bilateral sharing.
    #[serde(rename = "SDE-Asym")]
    SdeAsym,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Sde,
        Mode::Fixed,
        Mode::Direct,
        Mode::SdeSigma,
        Mode::SdeNu,
        Mode::SdeKappa,
        Mode::SdeAsym,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sde => "SDE",
            Mode::Fixed => "Fixed",
            Mode::Direct => "Direct",
            Mode::SdeSigma => "SDE-sigma",
            Mode::SdeNu => "SDE-nu",
            Mode::SdeKappa => "SDE-kappa",
            Mode::SdeAsym => "SDE-Asym",
        }
    }

    /// Whether a spectral basis file is required.
    pub fn uses_spectral_basis(self) -> bool {
        !matches!(self, Mode::Fixed | Mode::Direct)
    }

    pub fn has_design_stage(self) -> bool {
        self != Mode::Fixed
    }

    pub fn symmetry(self) -> Symmetry {
        if self == Mode::SdeAsym {
            Symmetry::PerMuscle
        } else {
            Symmetry::Bilateral
        }
    }

    /// The single evolved block of the single-parameter ablations.
    pub fn only_block(self) -> Option<Block> {
        match self {
            Mode::SdeSigma => Some(Block::Sigma),
            Mode::SdeNu => Some(Block::Nu),
            Mode::SdeKappa => Some(Block::Kappa),
            _ => None,
        }
    }

    /// Design action dimension for a basis with `k` columns.
    pub fn design_dim(self, k: usize) -> usize {
        match self {
            Mode::Fixed => 0,
            Mode::SdeSigma | Mode::SdeNu | Mode::SdeKappa => k,
            _ => 3 * k,
        }
    }

    /// Expand a design action into a full latent code; the blocks a mode does
    /// not evolve are zero.
    pub fn latent_from_action(self, action: &[f64], k: usize) -> Result<LatentCode> {
        if action.len() != self.design_dim(k) {
            return Err(SdeError::domain(format!(
                "{} design action of length {} (expected {})",
                self.as_str(),
                action.len(),
                self.design_dim(k)
            )));
        }
        match self.only_block() {
            Some(b) => {
                let mut z = vec![0.0; 3 * k];
                z[b.index() * k..(b.index() + 1) * k].copy_from_slice(action);
                LatentCode::new(z)
            }
            None if self == Mode::Fixed => Ok(LatentCode::zeros(k)),
            None => LatentCode::new(action.to_vec()),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = SdeError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str().to_ascii_lowercase() == lower)
            .ok_or_else(|| SdeError::config(format!("unknown mode '{s}'")))
    }
}
