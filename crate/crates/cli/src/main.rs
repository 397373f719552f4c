use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use sde_core::biomech::{TerrainKind, TerrainProfile};
use sde_core::harness::metrics::read_curve;
use sde_core::harness::persist::write_atomic;
use sde_core::harness::{
    compare_runs, evaluate_checkpoint, export_curve, export_radar, export_scree, load_basis,
    load_checkpoint, load_history, load_model, run_experiment, save_basis, save_history,
    ExperimentConfig,
};
use sde_core::spectral::{build_basis, collect_grouped, Symmetry};
use sde_core::SdeError;

/// Spectral morphology and control co-design for a planar muscle-driven
/// walker.
#[derive(Parser, Debug)]
#[command(name = "sde", version)]
struct Cli {
    /// JSON file supplying values for flags that are not given on the
    /// command line (keys: model, steps, seed, symmetry, terrain, k,
    /// episodes).
    #[arg(long, global = true, value_name = "FILE")]
    defaults: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Record muscle-length histories under uniform random excitation.
    Collect {
        /// Walker model JSON.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Control steps to record (one row each) [default: 20000].
        #[arg(long)]
        steps: Option<usize>,
        /// Excitation and reset seed [default: 0].
        #[arg(long)]
        seed: Option<u64>,
        /// Output history CSV.
        #[arg(long)]
        out: PathBuf,
        /// Muscle grouping [default: bilateral].
        #[arg(long, value_enum)]
        symmetry: Option<SymmetryArg>,
        /// Terrain walked during collection [default: walk].
        #[arg(long)]
        terrain: Option<TerrainKind>,
    },
    /// Build a spectral basis from a length history.
    Manifold {
        /// History CSV written by `collect`.
        #[arg(long)]
        history: PathBuf,
        /// Retained components [default: 5].
        #[arg(long)]
        k: Option<usize>,
        /// Output basis file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one run per seed of an experiment config.
    Train {
        /// Experiment config JSON.
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint with deterministic actions.
    Eval {
        /// Checkpoint file.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluation episodes [default: 5].
        #[arg(long)]
        episodes: Option<usize>,
        /// Reset seed stream [default: 0].
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write analysis CSVs.
    Export {
        /// What to export.
        #[arg(long, value_enum)]
        what: ExportWhat,
        /// Run directory.
        #[arg(long, required_unless_present = "history")]
        run: Option<PathBuf>,
        /// History CSV; scree only, instead of a run's basis.
        #[arg(long, conflicts_with = "run")]
        history: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Radar evaluation episodes, at least 20 [default: 20].
        #[arg(long)]
        episodes: Option<usize>,
        /// Radar reset seed stream [default: 0].
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the experiment once per latent dimension and compare.
    SweepK {
        /// Experiment config JSON for a spectral mode.
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated latent dimensions.
        #[arg(long, value_delimiter = ',', required = true)]
        k_list: Vec<usize>,
    },
    /// Compare finished runs.
    Compare {
        /// Run directories.
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Also write the comparison as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum SymmetryArg {
    Bilateral,
    PerMuscle,
}

impl From<SymmetryArg> for Symmetry {
    fn from(s: SymmetryArg) -> Self {
        match s {
            SymmetryArg::Bilateral => Symmetry::Bilateral,
            SymmetryArg::PerMuscle => Symmetry::PerMuscle,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExportWhat {
    Scree,
    Radar,
    Curve,
}

/// Contents of the `--defaults` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Defaults {
    model: Option<PathBuf>,
    steps: Option<usize>,
    seed: Option<u64>,
    symmetry: Option<SymmetryArg>,
    terrain: Option<TerrainKind>,
    k: Option<usize>,
    episodes: Option<usize>,
}

enum Failure {
    Usage(String),
    Runtime(SdeError),
}

impl From<SdeError> for Failure {
    fn from(e: SdeError) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = Result<(), Failure>;

fn kind(e: &SdeError) -> &'static str {
    match e {
        SdeError::Domain(_) => "domain",
        SdeError::Config(_) => "config",
        SdeError::SimulationFault { .. } => "simulation",
        SdeError::PartialData { .. } => "partial-data",
        SdeError::Parse { .. } => "parse",
        SdeError::UnsupportedMode(_) => "unsupported-mode",
        SdeError::Io { .. } => "io",
        SdeError::Json(_) => "json",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error[usage]: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error[{}]: {e}", kind(&e));
            ExitCode::from(1)
        }
    }
}

fn load_defaults(path: Option<&Path>) -> Result<Defaults, Failure> {
    let Some(path) = path else {
        return Ok(Defaults::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(p) => Ok(write_atomic(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let d = load_defaults(cli.defaults.as_deref())?;
    match cli.command {
        Command::Collect {
            model,
            steps,
            seed,
            out,
            symmetry,
            terrain,
        } => {
            let model_path = model
                .or(d.model)
                .ok_or_else(|| Failure::Usage("collect needs --model".into()))?;
            let steps = steps.or(d.steps).unwrap_or(20_000);
            let seed = seed.or(d.seed).unwrap_or(0);
            let symmetry: Symmetry = symmetry
                .or(d.symmetry)
                .unwrap_or(SymmetryArg::Bilateral)
                .into();
            let terrain =
                TerrainProfile::new(terrain.or(d.terrain).unwrap_or(TerrainKind::Walk), seed);
            let model = load_model(&model_path)?;
            let history = collect_grouped(&model, &terrain, steps, seed, symmetry)?;
            save_history(&history, &out)?;
            println!(
                "wrote {} rows x {} groups to {}",
                history.rows(),
                history.m(),
                out.display()
            );
        }
        Command::Manifold { history, k, out } => {
            let k = k.or(d.k).unwrap_or(5);
            let h = load_history(&history)?;
            let basis = build_basis(&h, k)?;
            save_basis(&basis, &out)?;
            println!(
                "basis over {} groups, k = {k}, cumulative explained variance {:.6}",
                basis.m(),
                basis.explained_variance()
            );
        }
        Command::Train { config } => {
            let c = ExperimentConfig::load(&config)?;
            let outcomes = run_experiment(&c, |id, row| {
                let ret = row.mean_return.map_or("-".into(), |r| format!("{r:.3}"));
                let eval = row
                    .eval_return
                    .map_or(String::new(), |r| format!(" eval {r:.3}"));
                eprintln!(
                    "{id} it {} steps {} return {ret}{eval}",
                    row.iteration, row.env_steps
                );
            })?;
            for o in &outcomes {
                let eval = o.final_eval.as_ref().and_then(|e| e.mean_return());
                println!(
                    "{} {} final eval {}",
                    o.run_id,
                    o.dir.display(),
                    eval.map_or("-".into(), |r| format!("{r:.3}"))
                );
            }
        }
        Command::Eval {
            checkpoint,
            episodes,
            seed,
        } => {
            let cp = load_checkpoint(&checkpoint)?;
            let episodes = episodes.or(d.episodes).unwrap_or(5);
            let s = evaluate_checkpoint(&cp, episodes, seed.or(d.seed).unwrap_or(0))?;
            let fmt = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.4}"));
            println!(
                "mode {} iteration {} env_steps {}",
                cp.agent.mode, cp.iteration, cp.env_steps
            );
            println!("episodes {}", s.episodes());
            println!("mean_return {}", fmt(s.mean_return()));
            println!("std_return {}", fmt(s.std_return()));
            println!("fall_rate {}", fmt(s.fall_rate()));
            if let Some(t) = s.mean_theta() {
                let join = |v: &[f64]| {
                    v.iter()
                        .map(|x| format!("{x:.4}"))
                        .collect::<Vec<_>>()
                        .join(" ")
                };
                println!("mean_sigma {}", join(t.sigma()));
                println!("mean_nu {}", join(t.nu()));
                println!("mean_kappa {}", join(t.kappa()));
            }
        }
        Command::Export {
            what,
            run,
            history,
            out,
            episodes,
            seed,
        } => {
            let text = match (what, run, history) {
                (ExportWhat::Scree, _, Some(h)) => {
                    let h = load_history(&h)?;
                    export_scree(&build_basis(&h, h.m())?)
                }
                (ExportWhat::Scree, Some(run), None) => {
                    let path = run.join("basis.txt");
                    if !path.exists() {
                        return Err(Failure::Usage(format!(
                            "{} has no basis.txt; pass --history instead",
                            run.display()
                        )));
                    }
                    export_scree(&load_basis(&path)?)
                }
                (ExportWhat::Radar, Some(run), None) => {
                    let cp = load_checkpoint(&latest_checkpoint(&run)?)?;
                    export_radar(
                        &cp,
                        episodes.or(d.episodes).unwrap_or(20),
                        seed.or(d.seed).unwrap_or(0),
                    )?
                }
                (ExportWhat::Curve, Some(run), None) => {
                    export_curve(&read_curve(&run.join("curve.csv"))?)
                }
                (_, _, _) => {
                    return Err(Failure::Usage(
                        "--history is only accepted with --what scree".into(),
                    ))
                }
            };
            emit(out.as_deref(), &text)?;
        }
        Command::SweepK { config, k_list } => {
            let base = ExperimentConfig::load(&config)?;
            if !base.mode.uses_spectral_basis() {
                return Err(Failure::Usage(format!(
                    "sweep-k needs a spectral mode, config has {}",
                    base.mode
                )));
            }
            let mut seen = k_list.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != k_list.len() {
                return Err(Failure::Usage("--k-list entries must be distinct".into()));
            }
            let configs = k_list
                .iter()
                .map(|&k| {
                    let c = ExperimentConfig { k, ..base.clone() };
                    c.validate().map(|_| c)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut dirs = Vec::new();
            for c in &configs {
                let outcomes = run_experiment(c, |id, row| {
                    eprintln!("{id} it {} steps {}", row.iteration, row.env_steps);
                })?;
                dirs.extend(outcomes.into_iter().map(|o| o.dir));
            }
            let cmp = compare_runs(&dirs)?;
            let table = base.output_dir.join(format!("{}-sweep-k.csv", base.name));
            write_atomic(&table, &cmp.to_csv())?;
            print!("{}", cmp.to_table());
            println!("comparison written to {}", table.display());
        }
        Command::Compare { runs, out } => {
            let cmp = compare_runs(&runs)?;
            if let Some(p) = out {
                write_atomic(&p, &cmp.to_csv())?;
            }
            print!("{}", cmp.to_table());
        }
    }
    Ok(())
}

/// Highest-iteration `checkpoint_<n>.txt` in a run directory.
fn latest_checkpoint(run: &Path) -> Result<PathBuf, Failure> {
    let entries = std::fs::read_dir(run).map_err(|e| SdeError::Io {
        path: run.to_path_buf(),
        source: e,
    })?;
    entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let n: usize = name
                .strip_prefix("checkpoint_")?
                .strip_suffix(".txt")?
                .parse()
                .ok()?;
            Some((n, e.path()))
        })
        .max_by_key(|(n, _)| *n)
        .map(|(_, p)| p)
        .ok_or_else(|| Failure::Usage(format!("no checkpoints in {}", run.display())))
}
