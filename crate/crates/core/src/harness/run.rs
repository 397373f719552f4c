//! Running experiments to disk and re-evaluating checkpoints.
//!
//! A run directory holds `config.json`, `basis.txt` (modes with a basis),
//! `curve.csv` and `eval.csv` appended as training proceeds, and
//! `checkpoint_<iteration>.txt` written at every evaluation.

use std::path::{Path, PathBuf};

use crate::biomech::env::WalkerEnv;
use crate::biomech::model::WalkerModel;
use crate::biomech::terrain::TerrainProfile;
use crate::coopt::trainer::{evaluate_agent, CurveRow, EvalSummary, Trainer};
use crate::error::{Result, SdeError};
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::{curve_line, eval_lines, MetricLog, CURVE_COLUMNS, EVAL_COLUMNS};
use crate::harness::persist::{
    load_basis, load_history, save_basis, save_checkpoint, truncate_basis, write_atomic, Checkpoint,
};
use crate::spectral::pca::{build_basis, SpectralBasis};

/// Basis for `config`: a stored basis truncated to `k`, or one built from
/// a stored length history. `None` for modes without a spectral basis.
pub fn resolve_basis(
    config: &ExperimentConfig,
    model: &WalkerModel,
) -> Result<Option<SpectralBasis>> {
    if !config.mode.uses_spectral_basis() {
        return Ok(None);
    }
    let basis = match (&config.basis, &config.history) {
        (Some(p), _) => truncate_basis(&load_basis(p)?, config.k)?,
        (None, Some(p)) => build_basis(&load_history(p)?, config.k)?,
        (None, None) => {
            return Err(SdeError::config(format!(
                "{} needs a basis or a history file",
                config.mode
            )))
        }
    };
    let symmetry = config.mode.symmetry();
    if basis.symmetry != symmetry {
        return Err(SdeError::config(format!(
            "{} needs a {symmetry:?} basis, found {:?}",
            config.mode, basis.symmetry
        )));
    }
    let m = match symmetry {
        crate::spectral::morphology::Symmetry::Bilateral => model.num_groups(),
        crate::spectral::morphology::Symmetry::PerMuscle => model.num_muscles(),
    };
    if basis.m() != m {
        return Err(SdeError::config(format!(
            "basis covers {} groups, model has {m}",
            basis.m()
        )));
    }
    Ok(Some(basis))
}

/// Result of one seed of one experiment.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_id: String,
    pub dir: PathBuf,
    pub curve: Vec<CurveRow>,
    pub final_eval: Option<EvalSummary>,
}

/// Train every seed of `config`, one run directory each.
pub fn run_experiment(
    config: &ExperimentConfig,
    mut progress: impl FnMut(&str, &CurveRow),
) -> Result<Vec<RunOutcome>> {
    config.validate()?;
    let model = config.load_model()?;
    let basis = resolve_basis(config, &model)?;
    // Claim every directory up front so a clash fails before hours of training.
    let dirs: Vec<PathBuf> = config
        .seeds
        .iter()
        .map(|&s| config.output_dir.join(config.run_id(s)))
        .collect();
    for d in &dirs {
        if d.exists() {
            return Err(SdeError::config(format!(
                "run directory {} already exists",
                d.display()
            )));
        }
    }
    config
        .seeds
        .iter()
        .zip(dirs)
        .map(|(&seed, dir)| {
            let id = config.run_id(seed);
            run_single(config, seed, &model, basis.clone(), &dir, |row| {
                progress(&id, row)
            })
        })
        .collect()
}

/// Train one seed into `dir`, which must not exist yet.
pub fn run_single(
    config: &ExperimentConfig,
    seed: u64,
    model: &WalkerModel,
    basis: Option<SpectralBasis>,
    dir: &Path,
    mut progress: impl FnMut(&CurveRow),
) -> Result<RunOutcome> {
    if let Some(parent) = dir.parent() {
        std::fs::create_dir_all(parent).map_err(|e| SdeError::io(parent, e))?;
    }
    std::fs::create_dir(dir).map_err(|e| SdeError::io(dir, e))?;
    let run_config = ExperimentConfig {
        seeds: vec![seed],
        ..config.clone()
    };
    write_atomic(&dir.join("config.json"), &run_config.to_json()?)?;

    let mut trainer = Trainer::new(config.train_config(seed), model.clone(), basis)?;
    if let Some(b) = &trainer.agent().basis {
        save_basis(b, &dir.join("basis.txt"))?;
    }
    let checkpoint = |t: &Trainer| -> Result<()> {
        let cp = Checkpoint {
            terrain: config.terrain,
            terrain_seed: config.terrain_seed,
            seed,
            iteration: t.iteration(),
            env_steps: t.env_steps(),
            model: model.clone(),
            agent: t.agent().clone(),
        };
        save_checkpoint(&cp, &dir.join(format!("checkpoint_{}.txt", t.iteration())))
    };
    checkpoint(&trainer)?;

    let mut curve_log = MetricLog::create(&dir.join("curve.csv"), &CURVE_COLUMNS)?;
    let mut eval_log = MetricLog::create(&dir.join("eval.csv"), &EVAL_COLUMNS)?;
    let mut curve = Vec::new();
    let mut final_eval = None;
    while !trainer.finished() {
        let report = trainer.step()?;
        curve_log.append(&curve_line(&report.curve))?;
        if let Some(eval) = report.eval {
            for line in eval_lines(report.curve.iteration, report.curve.env_steps, &eval) {
                eval_log.append(&line)?;
            }
            checkpoint(&trainer)?;
            final_eval = Some(eval);
        }
        progress(&report.curve);
        curve.push(report.curve);
    }
    Ok(RunOutcome {
        run_id: config.run_id(seed),
        dir: dir.to_path_buf(),
        curve,
        final_eval,
    })
}

/// Environment matching a checkpoint's model, terrain and grouping.
pub fn checkpoint_env(cp: &Checkpoint) -> Result<WalkerEnv> {
    WalkerEnv::new(
        cp.model.clone(),
        TerrainProfile::new(cp.terrain, cp.terrain_seed),
        cp.agent.mode.symmetry(),
    )
}

/// Deterministic evaluation of a stored agent.
pub fn evaluate_checkpoint(cp: &Checkpoint, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let mut env = checkpoint_env(cp)?;
    evaluate_agent(&cp.agent, &mut env, episodes, seed)
}
