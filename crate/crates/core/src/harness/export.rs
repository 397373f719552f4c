//! Analysis exports: scree data, per-group parameter means, smoothed curves.

use std::fmt::Write as _;

use crate::coopt::trainer::{evaluate_agent, CurveRow};
use crate::error::{Result, SdeError};
use crate::harness::persist::Checkpoint;
use crate::harness::run::checkpoint_env;
use crate::spectral::morphology::{Grouping, Symmetry};
use crate::spectral::pca::SpectralBasis;

/// Minimum evaluation episodes behind a radar export.
pub const RADAR_MIN_EPISODES: usize = 20;
/// Trailing window of the smoothed learning-curve column.
pub const SMOOTHING_WINDOW: usize = 10;

/// `k, eigenvalue, cumulative_explained_variance` for `k = 1..=M`.
pub fn export_scree(basis: &SpectralBasis) -> String {
    let mut out = String::from("k,eigenvalue,cumulative_explained_variance\n");
    for (i, (ev, cum)) in basis
        .eigenvalues
        .iter()
        .zip(basis.cumulative_explained_variance())
        .enumerate()
    {
        let _ = writeln!(out, "{},{},{}", i + 1, ev, cum);
    }
    out
}

/// Per-group mean of the decoded triad over deterministic evaluation
/// episodes.
pub fn export_radar(cp: &Checkpoint, episodes: usize, seed: u64) -> Result<String> {
    if !cp.agent.mode.has_design_stage() {
        return Err(SdeError::UnsupportedMode(format!(
            "{} checkpoints have no evolved morphology",
            cp.agent.mode
        )));
    }
    let episodes = episodes.max(RADAR_MIN_EPISODES);
    let mut env = checkpoint_env(cp)?;
    let summary = evaluate_agent(&cp.agent, &mut env, episodes, seed)?;
    let mean = summary
        .mean_theta()
        .ok_or_else(|| SdeError::domain("no evaluation episodes"))?;
    let grouping = Grouping::new(&cp.model, cp.agent.mode.symmetry())?;
    let mut out = String::from("group,name,mean_sigma,mean_nu,mean_kappa\n");
    for (g, members) in grouping.members.iter().enumerate() {
        let name = &cp.model.muscles[members[0]].name;
        let label = match grouping.symmetry {
            Symmetry::Bilateral => name
                .rsplit_once('_')
                .map_or(name.as_str(), |(base, _)| base),
            Symmetry::PerMuscle => name.as_str(),
        };
        let _ = writeln!(
            out,
            "{g},{label},{},{},{}",
            mean.sigma()[g],
            mean.nu()[g],
            mean.kappa()[g]
        );
    }
    Ok(out)
}

/// Trailing moving average over at most `window` points.
pub fn smooth(values: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let vals: Vec<f64> = values[lo..=i].iter().flatten().copied().collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

/// Learning curve with a smoothed return column.
pub fn export_curve(rows: &[CurveRow]) -> String {
    let raw: Vec<Option<f64>> = rows.iter().map(|r| r.mean_return).collect();
    let smoothed = smooth(&raw, SMOOTHING_WINDOW);
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("iteration,env_steps,mean_return,smoothed_return,eval_return\n");
    for (r, s) in rows.iter().zip(smoothed) {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration,
            r.env_steps,
            cell(r.mean_return),
            cell(s),
            cell(r.eval_return)
        );
    }
    out
}
