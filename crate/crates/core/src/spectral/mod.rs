//! Spectral design space: excitation data, PCA basis and latent decoding.

pub mod history;
pub mod linalg;
pub mod morphology;
pub mod pca;

pub use history::{collect_excitation_data, collect_grouped, LengthHistory};
pub use linalg::{eigendecompose_symmetric, Eigen, Matrix};
pub use morphology::{
    apply_morphology, symmetry_group_average, Block, Grouping, MorphologyVector, Symmetry,
};
pub use pca::{
    build_basis, covariance, decode_morphology, expand_block_diagonal, project, standardize,
    LatentCode, SpectralBasis, Standardized,
};
