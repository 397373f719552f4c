//! Versioned text formats for bases, histories and checkpoints.
//!
//! Every reader is all-or-nothing: any malformed, truncated or inconsistent
//! input yields [`SdeError::Parse`] with the offending line.

use std::fmt::Write as _;
use std::path::Path;

use crate::biomech::model::WalkerModel;
use crate::biomech::terrain::TerrainKind;
use crate::coopt::mlp::MlpShape;
use crate::coopt::mode::Mode;
use crate::coopt::policy::PolicyNetwork;
use crate::coopt::rollout::Agent;
use crate::error::{Result, SdeError};
use crate::spectral::history::LengthHistory;
use crate::spectral::linalg::Matrix;
use crate::spectral::morphology::{MorphologyVector, Symmetry};
use crate::spectral::pca::SpectralBasis;

pub const BASIS_HEADER: &str = "sde-basis v1";
pub const HISTORY_HEADER: &str = "# sde-history v1";
pub const CHECKPOINT_HEADER: &str = "sde-checkpoint v1";
const LAYOUT: &str = "sigma,nu,kappa";
const VALUES_PER_LINE: usize = 8;

/// Write `contents` next to `path` and rename into place so readers never
/// observe a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| SdeError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| SdeError::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| SdeError::io(path, e))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| fmt_f64(*v))
        .collect::<Vec<_>>()
        .join(" ")
}

fn symmetry_tag(s: Symmetry) -> &'static str {
    match s {
        Symmetry::Bilateral => "bilateral",
        Symmetry::PerMuscle => "per-muscle",
    }
}

/// Line cursor producing located parse errors.
struct Cursor<'a> {
    source: &'a str,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, source: &'a str) -> Self {
        Self {
            source,
            lines: text.lines().enumerate(),
            last: 0,
        }
    }

    fn err(&self, line: usize, reason: impl Into<String>) -> SdeError {
        SdeError::Parse {
            path: self.source.to_string(),
            line,
            reason: reason.into(),
        }
    }

    fn next(&mut self) -> Result<(usize, &'a str)> {
        match self.lines.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l.trim_end()))
            }
            None => Err(self.err(self.last + 1, "unexpected end of file")),
        }
    }

    fn exact(&mut self, expected: &str) -> Result<usize> {
        let (n, l) = self.next()?;
        if l != expected {
            return Err(self.err(n, format!("expected '{expected}', found '{l}'")));
        }
        Ok(n)
    }

    /// `key rest` line; returns `rest`.
    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, l) = self.next()?;
        match l.split_once(' ') {
            Some((k, rest)) if k == key => Ok((n, rest.trim())),
            _ if l == key => Ok((n, "")),
            _ => Err(self.err(n, format!("expected '{key}' line, found '{l}'"))),
        }
    }

    /// `# key value` metadata line.
    fn meta(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, l) = self.next()?;
        match l.strip_prefix("# ").and_then(|r| r.split_once(' ')) {
            Some((k, v)) if k == key => Ok((n, v.trim())),
            _ => Err(self.err(n, format!("expected '# {key} <value>', found '{l}'"))),
        }
    }

    fn keyed_parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (n, rest) = self.keyed(key)?;
        rest.parse()
            .map_err(|_| self.err(n, format!("cannot parse {key} value '{rest}'")))
    }

    fn floats(&self, n: usize, text: &str, expected: Option<usize>) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for tok in text.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| self.err(n, format!("'{tok}' is not a number")))?;
            if !v.is_finite() {
                return Err(self.err(n, format!("non-finite value '{tok}'")));
            }
            out.push(v);
        }
        if let Some(e) = expected {
            if out.len() != e {
                return Err(self.err(n, format!("expected {e} values, found {}", out.len())));
            }
        }
        Ok(out)
    }

    fn keyed_floats(&mut self, key: &str, expected: usize) -> Result<Vec<f64>> {
        let (n, rest) = self.keyed(key)?;
        self.floats(n, rest, Some(expected))
    }

    /// `count` values spread over lines of at most `VALUES_PER_LINE`.
    fn value_block(&mut self, count: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let (n, l) = self.next()?;
            let vals = self.floats(n, l, None)?;
            if vals.is_empty() || out.len() + vals.len() > count {
                return Err(self.err(n, format!("value block of {count} entries is malformed")));
            }
            out.extend(vals);
        }
        Ok(out)
    }

    fn finish(&mut self) -> Result<()> {
        for (i, l) in self.lines.by_ref() {
            if !l.trim().is_empty() {
                return Err(SdeError::Parse {
                    path: self.source.to_string(),
                    line: i + 1,
                    reason: "trailing content after end marker".into(),
                });
            }
        }
        Ok(())
    }
}

fn write_block(out: &mut String, values: &[f64]) {
    for chunk in values.chunks(VALUES_PER_LINE) {
        out.push_str(&join(chunk));
        out.push('\n');
    }
}

fn basis_body(b: &SpectralBasis, out: &mut String) {
    let (m, k) = (b.m(), b.k());
    let _ = writeln!(out, "m {m}");
    let _ = writeln!(out, "k {k}");
    let _ = writeln!(out, "layout {LAYOUT}");
    let _ = writeln!(out, "symmetry {}", symmetry_tag(b.symmetry));
    let _ = writeln!(out, "mean_theta {}", join(b.mean_theta.as_slice()));
    let _ = writeln!(out, "feature_means {}", join(&b.feature_means));
    let _ = writeln!(out, "feature_stds {}", join(&b.feature_stds));
    let inert: Vec<&str> = b.inert.iter().map(|i| if *i { "1" } else { "0" }).collect();
    let _ = writeln!(out, "inert {}", inert.join(" "));
    let _ = writeln!(out, "eigenvalues {}", join(&b.eigenvalues));
    out.push_str("vectors\n");
    for r in 0..m {
        out.push_str(&join(b.vectors.row(r)));
        out.push('\n');
    }
}

pub fn basis_to_string(b: &SpectralBasis) -> String {
    let mut out = format!("{BASIS_HEADER}\n");
    basis_body(b, &mut out);
    out.push_str("end\n");
    out
}

fn parse_basis_body(c: &mut Cursor) -> Result<SpectralBasis> {
    let m: usize = c.keyed_parse("m")?;
    let kn = c.last + 1;
    let k: usize = c.keyed_parse("k")?;
    if m == 0 || k == 0 || k > m {
        return Err(c.err(kn, format!("k = {k} incompatible with m = {m}")));
    }
    let (n, layout) = c.keyed("layout")?;
    if layout != LAYOUT {
        return Err(c.err(n, format!("unsupported layout '{layout}'")));
    }
    let (n, sym) = c.keyed("symmetry")?;
    let symmetry = match sym {
        "bilateral" => Symmetry::Bilateral,
        "per-muscle" => Symmetry::PerMuscle,
        other => return Err(c.err(n, format!("unknown symmetry '{other}'"))),
    };
    let mean_theta = MorphologyVector::new(c.keyed_floats("mean_theta", 3 * m)?)?;
    let feature_means = c.keyed_floats("feature_means", m)?;
    let feature_stds = c.keyed_floats("feature_stds", m)?;
    let (n, inert_text) = c.keyed("inert")?;
    let inert: Vec<bool> = inert_text
        .split_whitespace()
        .map(|t| match t {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(c.err(n, format!("inert flag '{other}' is not 0 or 1"))),
        })
        .collect::<Result<_>>()?;
    if inert.len() != m {
        return Err(c.err(
            n,
            format!("expected {m} inert flags, found {}", inert.len()),
        ));
    }
    let en = c.last + 1;
    let eigenvalues = c.keyed_floats("eigenvalues", m)?;
    c.exact("vectors")?;
    let mut data = Vec::with_capacity(m * k);
    for _ in 0..m {
        let (n, l) = c.next()?;
        data.extend(c.floats(n, l, Some(k))?);
    }
    let basis = SpectralBasis {
        symmetry,
        mean_theta,
        feature_means,
        feature_stds,
        inert,
        eigenvalues,
        vectors: Matrix::from_vec(m, k, data)?,
    };
    basis.validate().map_err(|e| c.err(en, e.to_string()))?;
    Ok(basis)
}

pub fn basis_from_str(text: &str, source: &str) -> Result<SpectralBasis> {
    let mut c = Cursor::new(text, source);
    c.exact(BASIS_HEADER)?;
    let b = parse_basis_body(&mut c)?;
    c.exact("end")?;
    c.finish()?;
    Ok(b)
}

pub fn save_basis(b: &SpectralBasis, path: &Path) -> Result<()> {
    write_atomic(path, &basis_to_string(b))
}

pub fn load_basis(path: &Path) -> Result<SpectralBasis> {
    basis_from_str(&read(path)?, &path.display().to_string())
}

/// Keep the first `k` columns of a basis.
pub fn truncate_basis(b: &SpectralBasis, k: usize) -> Result<SpectralBasis> {
    if k == 0 || k > b.k() {
        return Err(SdeError::config(format!(
            "cannot keep {k} of {} basis columns",
            b.k()
        )));
    }
    let m = b.m();
    let mut v = Matrix::zeros(m, k);
    for r in 0..m {
        for c in 0..k {
            v[(r, c)] = b.vectors[(r, c)];
        }
    }
    Ok(SpectralBasis {
        vectors: v,
        ..b.clone()
    })
}

pub fn history_to_string(h: &LengthHistory) -> String {
    let m = h.m();
    let mut out = String::with_capacity(h.rows() * m * 20);
    let _ = writeln!(out, "{HISTORY_HEADER}");
    let _ = writeln!(out, "# seed {}", h.seed);
    let _ = writeln!(out, "# source {}", h.source);
    let _ = writeln!(out, "# symmetry {}", symmetry_tag(h.symmetry));
    let header: Vec<String> = (0..m).map(|g| format!("g{g}")).collect();
    let _ = writeln!(out, "{}", header.join(","));
    for r in 0..h.rows() {
        let row: Vec<String> = h.data.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn history_from_str(text: &str, source: &str) -> Result<LengthHistory> {
    let mut c = Cursor::new(text, source);
    c.exact(HISTORY_HEADER)?;
    let (n, seed) = c.meta("seed")?;
    let seed: u64 = seed
        .parse()
        .map_err(|_| c.err(n, format!("bad seed '{seed}'")))?;
    let (_, source_tag) = c.meta("source")?;
    let (n, sym) = c.meta("symmetry")?;
    let symmetry = match sym {
        "bilateral" => Symmetry::Bilateral,
        "per-muscle" => Symmetry::PerMuscle,
        other => return Err(c.err(n, format!("unknown symmetry '{other}'"))),
    };
    let (n, header) = c.next()?;
    let m = header.split(',').count();
    if header
        .split(',')
        .enumerate()
        .any(|(g, name)| name != format!("g{g}"))
    {
        return Err(c.err(n, "header must name columns g0, g1, ..."));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in c.lines.by_ref() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| SdeError::Parse {
                path: source.to_string(),
                line: i + 1,
                reason: "row contains a non-numeric or non-finite cell".into(),
            })?;
        if vals.len() != m {
            return Err(SdeError::Parse {
                path: source.to_string(),
                line: i + 1,
                reason: format!("expected {m} cells, found {}", vals.len()),
            });
        }
        data.extend(vals);
        rows += 1;
    }
    if rows == 0 {
        return Err(c.err(n + 1, "history has no rows"));
    }
    LengthHistory::new(Matrix::from_vec(rows, m, data)?, seed, source_tag, symmetry)
}

pub fn save_history(h: &LengthHistory, path: &Path) -> Result<()> {
    write_atomic(path, &history_to_string(h))
}

pub fn load_history(path: &Path) -> Result<LengthHistory> {
    history_from_str(&read(path)?, &path.display().to_string())
}

/// Trained agent plus the context needed to roll it out again.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub terrain: TerrainKind,
    pub terrain_seed: u64,
    pub seed: u64,
    pub iteration: usize,
    pub env_steps: u64,
    pub model: WalkerModel,
    pub agent: Agent,
}

fn write_network(out: &mut String, name: &str, net: &PolicyNetwork) {
    let sizes = |s: &MlpShape| {
        s.sizes
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(out, "network {name}");
    let _ = writeln!(out, "actor {}", sizes(&net.actor));
    let _ = writeln!(out, "critic {}", sizes(&net.critic));
    let _ = writeln!(out, "params {}", net.params.len());
    write_block(out, &net.params);
}

fn parse_network(c: &mut Cursor, name: &str) -> Result<PolicyNetwork> {
    let (n, got) = c.keyed("network")?;
    if got != name {
        return Err(c.err(n, format!("expected network '{name}', found '{got}'")));
    }
    let mut shape = |key: &str| -> Result<MlpShape> {
        let (n, rest) = c.keyed(key)?;
        let sizes: Vec<usize> = rest
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| c.err(n, format!("bad layer size '{t}'")))
            })
            .collect::<Result<_>>()?;
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(c.err(n, format!("invalid {key} layer sizes")));
        }
        Ok(MlpShape::new(sizes))
    };
    let actor = shape("actor")?;
    let critic = shape("critic")?;
    let pn = c.last + 1;
    let count: usize = c.keyed_parse("params")?;
    let params = c.value_block(count)?;
    PolicyNetwork::from_parts(actor, critic, params).map_err(|e| c.err(pn, e.to_string()))
}

pub fn checkpoint_to_string(cp: &Checkpoint) -> Result<String> {
    let mut out = format!("{CHECKPOINT_HEADER}\n");
    let _ = writeln!(out, "mode {}", cp.agent.mode);
    let _ = writeln!(out, "terrain {}", cp.terrain);
    let _ = writeln!(out, "terrain_seed {}", cp.terrain_seed);
    let _ = writeln!(out, "seed {}", cp.seed);
    let _ = writeln!(out, "iteration {}", cp.iteration);
    let _ = writeln!(out, "env_steps {}", cp.env_steps);
    let _ = writeln!(out, "model {}", serde_json::to_string(&cp.model)?);
    match &cp.agent.basis {
        Some(b) => {
            out.push_str("basis\n");
            basis_body(b, &mut out);
        }
        None => out.push_str("basis none\n"),
    }
    write_network(&mut out, "control", &cp.agent.control);
    match &cp.agent.design {
        Some(d) => write_network(&mut out, "design", d),
        None => out.push_str("network none\n"),
    }
    out.push_str("end\n");
    Ok(out)
}

pub fn checkpoint_from_str(text: &str, source: &str) -> Result<Checkpoint> {
    let mut c = Cursor::new(text, source);
    c.exact(CHECKPOINT_HEADER)?;
    let (n, mode) = c.keyed("mode")?;
    let mode: Mode = mode
        .parse()
        .map_err(|_| c.err(n, format!("unknown mode '{mode}'")))?;
    let (n, terrain) = c.keyed("terrain")?;
    let terrain: TerrainKind = terrain
        .parse()
        .map_err(|_| c.err(n, format!("unknown terrain '{terrain}'")))?;
    let terrain_seed = c.keyed_parse("terrain_seed")?;
    let seed = c.keyed_parse("seed")?;
    let iteration = c.keyed_parse("iteration")?;
    let env_steps = c.keyed_parse("env_steps")?;
    let (n, json) = c.keyed("model")?;
    let model = WalkerModel::from_json(json).map_err(|e| c.err(n, format!("model: {e}")))?;
    let (n, b) = c.keyed("basis")?;
    let basis = match b {
        "none" => None,
        "" => Some(parse_basis_body(&mut c)?),
        other => return Err(c.err(n, format!("unexpected basis marker '{other}'"))),
    };
    let control = parse_network(&mut c, "control")?;
    let design = if mode.has_design_stage() {
        Some(parse_network(&mut c, "design")?)
    } else {
        c.exact("network none")?;
        None
    };
    c.exact("end")?;
    c.finish()?;
    let agent = Agent {
        mode,
        basis,
        design,
        control,
    };
    Ok(Checkpoint {
        terrain,
        terrain_seed,
        seed,
        iteration,
        env_steps,
        model,
        agent,
    })
}

pub fn save_checkpoint(cp: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &checkpoint_to_string(cp)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_str(&read(path)?, &path.display().to_string())
}
