//! Cross-run comparison of learning curves.
//!
//! Runs are grouped by mode label (spectral modes carry their `k`) and
//! terrain. Each run contributes the area under its training return curve
//! (return × control steps), its last evaluation return and the mean
//! training return over its last [`FINAL_WINDOW`] iterations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::coopt::trainer::CurveRow;
use crate::error::{Result, SdeError};
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::read_curve;

pub const FINAL_WINDOW: usize = 10;

pub const COMPARISON_COLUMNS: [&str; 10] = [
    "label",
    "terrain",
    "runs",
    "horizon_steps",
    "auc_mean",
    "auc_std",
    "final_eval_mean",
    "final_eval_std",
    "final_window_mean",
    "final_window_std",
];

/// Per-run figures.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub label: String,
    pub terrain: String,
    pub step_budget: u64,
    pub auc: Option<f64>,
    pub final_eval: Option<f64>,
    pub final_window: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub terrain: String,
    pub runs: usize,
    pub auc: Stat,
    pub final_eval: Stat,
    pub final_window: Stat,
}

/// Mean and sample standard deviation; `std` is absent below two samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Self {
            mean: Some(mean),
            std,
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Step horizon over which areas were integrated.
    pub horizon: u64,
    pub runs: Vec<RunSummary>,
    pub rows: Vec<ComparisonRow>,
    pub warnings: Vec<String>,
}

/// Mode label used for grouping.
pub fn mode_label(config: &ExperimentConfig) -> String {
    if config.mode.uses_spectral_basis() {
        format!("{}-k{}", config.mode, config.k)
    } else {
        config.mode.to_string()
    }
}

fn points(curve: &[CurveRow]) -> Vec<(f64, f64)> {
    curve
        .iter()
        .filter_map(|r| r.mean_return.map(|v| (r.env_steps as f64, v)))
        .collect()
}

/// Trapezoidal area under the return curve over `[0, horizon]` control
/// steps. The first observed value is held flat back to step 0 and the last
/// one forward to `horizon`.
pub fn curve_auc(curve: &[CurveRow], horizon: u64) -> Option<f64> {
    let pts = points(curve);
    let (&(x0, y0), _) = pts.split_first()?;
    let h = horizon as f64;
    if h <= 0.0 {
        return Some(0.0);
    }
    let mut area = x0.min(h) * y0;
    for w in pts.windows(2) {
        let ((xa, ya), (xb, yb)) = (w[0], w[1]);
        if xa >= h {
            break;
        }
        if xb > h {
            let yh = ya + (yb - ya) * (h - xa) / (xb - xa);
            area += 0.5 * (ya + yh) * (h - xa);
            break;
        }
        area += 0.5 * (ya + yb) * (xb - xa);
    }
    let (xl, yl) = *pts.last()?;
    if xl < h {
        area += (h - xl) * yl;
    }
    Some(area)
}

fn final_window(curve: &[CurveRow]) -> Option<f64> {
    let vals: Vec<f64> = curve.iter().filter_map(|r| r.mean_return).collect();
    let tail = &vals[vals.len().saturating_sub(FINAL_WINDOW)..];
    (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
}

struct LoadedRun {
    id: String,
    config: ExperimentConfig,
    curve: Vec<CurveRow>,
}

fn load_run(dir: &Path) -> Result<LoadedRun> {
    let config = ExperimentConfig::load(&dir.join("config.json"))?;
    let curve = read_curve(&dir.join("curve.csv"))?;
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(LoadedRun { id, config, curve })
}

/// Compare run directories. The result does not depend on the order of
/// `dirs`.
pub fn compare_runs(dirs: &[PathBuf]) -> Result<Comparison> {
    if dirs.is_empty() {
        return Err(SdeError::config("no runs to compare"));
    }
    let mut runs = dirs
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| a.id.cmp(&b.id));
    let mut warnings = Vec::new();
    for w in runs.windows(2) {
        if w[0].id == w[1].id {
            warnings.push(format!("run id {} appears more than once", w[0].id));
        }
    }
    let reached: Vec<u64> = runs
        .iter()
        .map(|r| r.curve.last().map_or(0, |c| c.env_steps))
        .collect();
    let horizon = reached.iter().copied().min().unwrap_or(0);
    let budgets: Vec<u64> = runs.iter().map(|r| r.config.step_budget).collect();
    if budgets.iter().any(|&b| b != budgets[0]) {
        warnings.push(format!(
            "step budgets differ; areas are integrated over the first {horizon} steps"
        ));
    }
    for r in runs.iter().filter(|r| r.curve.is_empty()) {
        warnings.push(format!("{} has an empty learning curve", r.id));
    }

    let summaries: Vec<RunSummary> = runs
        .iter()
        .map(|r| RunSummary {
            run_id: r.id.clone(),
            label: mode_label(&r.config),
            terrain: r.config.terrain.to_string(),
            step_budget: r.config.step_budget,
            auc: curve_auc(&r.curve, horizon),
            final_eval: r.curve.iter().rev().find_map(|c| c.eval_return),
            final_window: final_window(&r.curve),
        })
        .collect();

    let mut keys: Vec<(String, String)> = summaries
        .iter()
        .map(|s| (s.label.clone(), s.terrain.clone()))
        .collect();
    keys.sort();
    keys.dedup();
    let rows = keys
        .into_iter()
        .map(|(label, terrain)| {
            let members: Vec<&RunSummary> = summaries
                .iter()
                .filter(|s| s.label == label && s.terrain == terrain)
                .collect();
            let stat = |f: fn(&RunSummary) -> Option<f64>| {
                Stat::of(&members.iter().filter_map(|s| f(s)).collect::<Vec<_>>())
            };
            ComparisonRow {
                runs: members.len(),
                auc: stat(|s| s.auc),
                final_eval: stat(|s| s.final_eval),
                final_window: stat(|s| s.final_window),
                label,
                terrain,
            }
        })
        .collect();
    Ok(Comparison {
        horizon,
        runs: summaries,
        rows,
        warnings,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn num(v: f64) -> String {
    if v != 0.0 && !(1e-2..1e5).contains(&v.abs()) {
        format!("{v:.3e}")
    } else {
        format!("{v:.2}")
    }
}

fn pm(s: &Stat) -> String {
    match (s.mean, s.std) {
        (Some(m), Some(sd)) => format!("{} ± {}", num(m), num(sd)),
        (Some(m), None) => num(m),
        _ => "-".into(),
    }
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = COMPARISON_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.label,
                r.terrain,
                r.runs,
                self.horizon,
                cell(r.auc.mean),
                cell(r.auc.std),
                cell(r.final_eval.mean),
                cell(r.final_eval.std),
                cell(r.final_window.mean),
                cell(r.final_window.std)
            );
        }
        out
    }

    /// Fixed-width table for terminals.
    pub fn to_table(&self) -> String {
        let header = [
            "mode",
            "terrain",
            "runs",
            "auc",
            "final eval",
            "final window",
        ];
        let body: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.label.clone(),
                    r.terrain.clone(),
                    r.runs.to_string(),
                    pm(&r.auc),
                    pm(&r.final_eval),
                    pm(&r.final_window),
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for row in &body {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let fmt_row = |cells: &[String]| -> String {
            cells
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = fmt_row(&header.map(String::from));
        out.push('\n');
        for row in &body {
            out.push_str(&fmt_row(row));
            out.push('\n');
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(steps: u64, ret: f64) -> CurveRow {
        CurveRow {
            iteration: steps as usize,
            env_steps: steps,
            mean_return: Some(ret),
            std_return: None,
            eval_return: None,
            mean_sigma: None,
            mean_nu: None,
            mean_kappa: None,
            explained_variance_k: None,
            faulted_episodes: 0,
            update_aborted: false,
        }
    }

    #[test]
    fn auc_of_a_ramp() {
        // Flat 0 on [0, 10], ramp to 10 on [10, 20].
        let c = [row(10, 0.0), row(20, 10.0)];
        assert!((curve_auc(&c, 20).unwrap() - 50.0).abs() < 1e-12);
        assert!((curve_auc(&c, 15).unwrap() - 12.5).abs() < 1e-12);
        // Held flat past the last point.
        assert!((curve_auc(&c, 30).unwrap() - 150.0).abs() < 1e-12);
        assert_eq!(curve_auc(&[], 10), None);
    }

    #[test]
    fn constant_curve_auc_is_value_times_steps() {
        let c = [row(5, 3.0), row(9, 3.0), row(17, 3.0)];
        assert!((curve_auc(&c, 12).unwrap() - 36.0).abs() < 1e-12);
        assert!((curve_auc(&c, 17).unwrap() - 51.0).abs() < 1e-12);
    }

    #[test]
    fn stat_uses_sample_std() {
        let s = Stat::of(&[1.0, 3.0]);
        assert_eq!(s.mean, Some(2.0));
        assert!((s.std.unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(Stat::of(&[4.0]).std, None);
    }

    #[test]
    fn final_window_takes_the_tail() {
        let c: Vec<CurveRow> = (1..=15).map(|i| row(i, i as f64)).collect();
        assert_eq!(final_window(&c), Some(10.5));
    }
}
