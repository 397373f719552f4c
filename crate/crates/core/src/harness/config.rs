//! Experiment configuration documents.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::biomech::model::WalkerModel;
use crate::biomech::terrain::TerrainKind;
use crate::coopt::mode::Mode;
use crate::coopt::ppo::PpoParams;
use crate::coopt::trainer::TrainConfig;
use crate::error::{Result, SdeError};

/// Published JSON schema for [`ExperimentConfig`].
pub const CONFIG_SCHEMA: &str = include_str!("../../../../docs/config.schema.json");

/// One experiment: a mode/terrain/k cell trained once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: Mode,
    pub terrain: TerrainKind,
    pub terrain_seed: u64,
    pub k: usize,
    pub seeds: Vec<u64>,
    pub step_budget: u64,
    /// Parent of the per-run directories.
    pub output_dir: PathBuf,
    /// Walker description; the built-in biped when absent.
    pub model: Option<PathBuf>,
    /// Basis file for the SDE family. Bases retaining more than `k`
    /// components are truncated.
    pub basis: Option<PathBuf>,
    /// Length history from which a basis is built when `basis` is absent.
    pub history: Option<PathBuf>,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub workers: usize,
    pub control_hidden: Vec<usize>,
    pub design_hidden: Vec<usize>,
    pub ppo: PpoParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            name: "experiment".into(),
            mode: t.mode,
            terrain: t.terrain,
            terrain_seed: t.terrain_seed,
            k: t.k,
            seeds: vec![0],
            step_budget: t.step_budget,
            output_dir: PathBuf::from("run"),
            model: None,
            basis: None,
            history: None,
            eval_every: t.eval_every,
            eval_episodes: t.eval_episodes,
            workers: t.workers,
            control_hidden: t.control_hidden,
            design_hidden: t.design_hidden,
            ppo: t.ppo,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SdeError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            SdeError::Json(j) => SdeError::Parse {
                path: path.display().to_string(),
                line: j.line(),
                reason: j.to_string(),
            },
            other => other,
        })
    }

    /// Checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(SdeError::config(
                "name must be non-empty and contain no path separators",
            ));
        }
        if self.seeds.is_empty() {
            return Err(SdeError::config("seeds must be non-empty"));
        }
        let distinct: HashSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(SdeError::config("seeds must be distinct"));
        }
        self.train_config(self.seeds[0]).validate()?;
        if self.mode.uses_spectral_basis() {
            let m = WalkerModel::default_biped().num_groups();
            let m = if self.mode == Mode::SdeAsym { 2 * m } else { m };
            if self.k == 0 || (self.model.is_none() && self.k > m) {
                return Err(SdeError::config(format!("k = {} outside [1, {m}]", self.k)));
            }
            if self.basis.is_none() && self.history.is_none() {
                return Err(SdeError::config(format!(
                    "{} needs a basis or a history file",
                    self.mode
                )));
            }
        }
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            k: self.k,
            terrain: self.terrain,
            terrain_seed: self.terrain_seed,
            seed,
            step_budget: self.step_budget,
            eval_every: self.eval_every,
            eval_episodes: self.eval_episodes,
            workers: self.workers,
            control_hidden: self.control_hidden.clone(),
            design_hidden: self.design_hidden.clone(),
            ppo: self.ppo.clone(),
        }
    }

    /// Run identifier for one seed.
    pub fn run_id(&self, seed: u64) -> String {
        if self.mode.uses_spectral_basis() {
            format!(
                "{}-{}-k{}-{}-s{seed}",
                self.name, self.mode, self.k, self.terrain
            )
        } else {
            format!("{}-{}-{}-s{seed}", self.name, self.mode, self.terrain)
        }
    }

    pub fn load_model(&self) -> Result<WalkerModel> {
        match &self.model {
            None => Ok(WalkerModel::default_biped()),
            Some(p) => load_model(p),
        }
    }
}

pub fn load_model(path: &Path) -> Result<WalkerModel> {
    let text = std::fs::read_to_string(path).map_err(|e| SdeError::io(path, e))?;
    WalkerModel::from_json(&text).map_err(|e| match e {
        SdeError::Json(j) => SdeError::Parse {
            path: path.display().to_string(),
            line: j.line(),
            reason: j.to_string(),
        },
        other => other,
    })
}
