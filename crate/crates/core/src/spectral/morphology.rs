//! The full design vector and its application to a walker model.

use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::biomech::model::WalkerModel;
use crate::error::{Result, SdeError};
use crate::muscle::{KAPPA_BOUNDS, NU_BOUNDS, SIGMA_BOUNDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Sigma,
    Nu,
    Kappa,
}

impl Block {
    pub const ALL: [Block; 3] = [Block::Sigma, Block::Nu, Block::Kappa];

    pub fn index(self) -> usize {
        match self {
            Block::Sigma => 0,
            Block::Nu => 1,
            Block::Kappa => 2,
        }
    }

    pub fn bounds(self) -> (f64, f64) {
        match self {
            Block::Sigma => SIGMA_BOUNDS,
            Block::Nu => NU_BOUNDS,
            Block::Kappa => KAPPA_BOUNDS,
        }
    }

    /// Reference value of the parameter on the unmodified model.
    pub fn default_value(self) -> f64 {
        1.0
    }
}

/// Design vector laid out as `[sigma_1..sigma_M, nu_1..nu_M, kappa_1..kappa_M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphologyVector {
    theta: Vec<f64>,
    m: usize,
}

impl MorphologyVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || theta.len() % 3 != 0 {
            return Err(SdeError::domain(format!(
                "design vector length {} is not a positive multiple of 3",
                theta.len()
            )));
        }
        let m = theta.len() / 3;
        Ok(Self { theta, m })
    }

    /// Reference morphology for `m` groups.
    pub fn default_for(m: usize) -> Self {
        let mut theta = Vec::with_capacity(3 * m);
        for b in Block::ALL {
            theta.extend(std::iter::repeat(b.default_value()).take(m));
        }
        Self { theta, m }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn block(&self, b: Block) -> &[f64] {
        &self.theta[b.index() * self.m..(b.index() + 1) * self.m]
    }

    pub fn sigma(&self) -> &[f64] {
        self.block(Block::Sigma)
    }

    pub fn nu(&self) -> &[f64] {
        self.block(Block::Nu)
    }

    pub fn kappa(&self) -> &[f64] {
        self.block(Block::Kappa)
    }

    pub fn block_mean(&self, b: Block) -> f64 {
        self.block(b).iter().sum::<f64>() / self.m as f64
    }

    pub fn within_bounds(&self) -> bool {
        Block::ALL.iter().all(|&b| {
            let (lo, hi) = b.bounds();
            self.block(b).iter().all(|v| *v >= lo && *v <= hi)
        })
    }

    /// Clamp every component into its block's bounds.
    pub fn clamped(mut self) -> Self {
        for b in Block::ALL {
            let (lo, hi) = b.bounds();
            let r = b.index() * self.m..(b.index() + 1) * self.m;
            for v in &mut self.theta[r] {
                *v = v.clamp(lo, hi);
            }
        }
        self
    }

    /// Map each component to `[-1, 1]`: the lower bound goes to -1, the
    /// reference value to 0, the upper bound to +1, linearly in between.
    pub fn normalized(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.theta.len());
        for b in Block::ALL {
            let (lo, hi) = b.bounds();
            let d = b.default_value();
            for &v in self.block(b) {
                let n = if v < d {
                    (v - d) / (d - lo)
                } else {
                    (v - d) / (hi - d)
                };
                out.push(n.clamp(-1.0, 1.0));
            }
        }
        out
    }
}

/// Which muscles share one parameter triad.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    /// Bilateral partners share a triad.
    Bilateral,
    /// Every muscle carries its own triad.
    PerMuscle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub symmetry: Symmetry,
    /// Muscle indices of each group.
    pub members: Vec<Vec<usize>>,
}

impl Grouping {
    pub fn new(model: &WalkerModel, symmetry: Symmetry) -> Result<Self> {
        match symmetry {
            Symmetry::Bilateral => Self::bilateral(model),
            Symmetry::PerMuscle => Ok(Self::per_muscle(model)),
        }
    }

    pub fn bilateral(model: &WalkerModel) -> Result<Self> {
        let m = model.num_groups();
        let mut members = vec![Vec::new(); m];
        for (i, d) in model.muscles.iter().enumerate() {
            members[d.group_id].push(i);
        }
        if members.iter().any(|g| g.len() != 2) {
            return Err(SdeError::config(
                "bilateral grouping needs two muscles per group",
            ));
        }
        Ok(Self {
            symmetry: Symmetry::Bilateral,
            members,
        })
    }

    pub fn per_muscle(model: &WalkerModel) -> Self {
        Self {
            symmetry: Symmetry::PerMuscle,
            members: (0..model.num_muscles()).map(|i| vec![i]).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.members.len()
    }

    /// Mean of per-muscle values within each group.
    pub fn average(&self, per_muscle: &[f64]) -> Vec<f64> {
        self.members
            .iter()
            .map(|g| {
                if g.len() == 2 {
                    (per_muscle[g[0]] + per_muscle[g[1]]) / 2.0
                } else {
                    g.iter().map(|&i| per_muscle[i]).sum::<f64>() / g.len() as f64
                }
            })
            .collect()
    }
}

/// Average bilateral pairs; `pairs` must match every muscle exactly once.
pub fn symmetry_group_average(per_muscle: &[f64], pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    let mut seen = vec![false; per_muscle.len()];
    for &(l, r) in pairs {
        if l >= seen.len() || r >= seen.len() || l == r || seen[l] || seen[r] {
            return Err(SdeError::config(format!(
                "pair ({l}, {r}) breaks the matching"
            )));
        }
        seen[l] = true;
        seen[r] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(SdeError::config(format!("muscle {i} is unmatched")));
    }
    Ok(pairs
        .iter()
        .map(|&(l, r)| (per_muscle[l] + per_muscle[r]) / 2.0)
        .collect())
}

/// Install a design vector on a copy of `model`. Every muscle of group `g`
/// receives `(sigma_g, nu_g, kappa_g)`; all other constants are untouched.
pub fn apply_morphology(
    theta: &MorphologyVector,
    model: &WalkerModel,
    grouping: &Grouping,
) -> Result<WalkerModel> {
    if theta.m() != grouping.m() {
        return Err(SdeError::domain(format!(
            "design vector has {} groups, grouping has {}",
            theta.m(),
            grouping.m()
        )));
    }
    if !theta.within_bounds() {
        return Err(SdeError::domain(
            "design vector outside evolutionary bounds",
        ));
    }
    let mut out = model.clone();
    for (g, members) in grouping.members.iter().enumerate() {
        for &i in members {
            let p = &mut out.muscles[i].params;
            p.sigma = theta.sigma()[g];
            p.nu = theta.nu()[g];
            p.kappa = theta.kappa()[g];
        }
    }
    Ok(out)
}

/// Hash of every muscle's applied triad.
pub fn morphology_hash(model: &WalkerModel) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for m in &model.muscles {
        m.params.sigma.to_bits().hash(&mut h);
        m.params.nu.to_bits().hash(&mut h);
        m.params.kappa.to_bits().hash(&mut h);
    }
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_normalize_to_zero() {
        let t = MorphologyVector::default_for(8);
        assert!(t.normalized().iter().all(|v| *v == 0.0));
        let mut raw = t.as_slice().to_vec();
        raw[0] = 0.5;
        raw[8] = 1.5;
        raw[16] = 2.0;
        raw[17] = 0.5;
        let n = MorphologyVector::new(raw).unwrap().normalized();
        assert_eq!((n[0], n[8], n[16], n[17]), (-1.0, 1.0, 1.0, -1.0));
    }

    #[test]
    fn group_average_examples() {
        let pairs = [(0, 1)];
        assert_eq!(
            symmetry_group_average(&[0.9, 1.1], &pairs).unwrap(),
            vec![1.0]
        );
        assert_eq!(
            symmetry_group_average(&[0.7, 0.7], &pairs).unwrap(),
            vec![0.7]
        );
        assert!(symmetry_group_average(&[0.9, 1.1, 1.0], &pairs).is_err());
        assert!(symmetry_group_average(&[0.9, 1.1], &[(0, 0)]).is_err());

        let model = WalkerModel::default_biped();
        let solo = Grouping::per_muscle(&model);
        let vals: Vec<f64> = (0..16).map(|i| i as f64).collect();
        assert_eq!(solo.average(&vals), vals);
    }

    #[test]
    fn apply_broadcasts_to_both_sides() {
        let model = WalkerModel::default_biped();
        let g = Grouping::bilateral(&model).unwrap();
        let mut raw = MorphologyVector::default_for(8).as_slice().to_vec();
        raw[3] = 1.5;
        raw[8 + 2] = 0.6;
        raw[16 + 7] = 1.9;
        let theta = MorphologyVector::new(raw).unwrap();
        let out = apply_morphology(&theta, &model, &g).unwrap();
        assert_eq!(out.muscles[3].params.sigma, 1.5);
        assert_eq!(out.muscles[11].params.sigma, 1.5);
        assert_eq!(out.muscles[10].params.nu, 0.6);
        assert_eq!(out.muscles[15].params.kappa, 1.9);
        assert_eq!(out.muscles[0].params, model.muscles[0].params);
        assert_eq!(out.segments, model.segments);
    }

    #[test]
    fn apply_per_muscle_does_not_broadcast() {
        let model = WalkerModel::default_biped();
        let g = Grouping::per_muscle(&model);
        let mut raw = MorphologyVector::default_for(16).as_slice().to_vec();
        raw[3] = 1.4;
        let out = apply_morphology(&MorphologyVector::new(raw).unwrap(), &model, &g).unwrap();
        assert_eq!(out.muscles[3].params.sigma, 1.4);
        assert_eq!(out.muscles[11].params.sigma, 1.0);
    }

    #[test]
    fn apply_rejects_out_of_bounds() {
        let model = WalkerModel::default_biped();
        let g = Grouping::bilateral(&model).unwrap();
        let mut raw = MorphologyVector::default_for(8).as_slice().to_vec();
        raw[0] = 1.7;
        assert!(apply_morphology(&MorphologyVector::new(raw).unwrap(), &model, &g).is_err());
        let wrong = MorphologyVector::default_for(16);
        assert!(apply_morphology(&wrong, &model, &g).is_err());
    }

    #[test]
    fn hash_tracks_parameters() {
        let model = WalkerModel::default_biped();
        let mut other = model.clone();
        assert_eq!(morphology_hash(&model), morphology_hash(&other));
        other.muscles[5].params.kappa = 1.2;
        assert_ne!(morphology_hash(&model), morphology_hash(&other));
    }
}
