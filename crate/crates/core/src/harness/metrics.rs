//! Learning-curve and evaluation CSV logs.
//!
//! Cells that do not apply (no evaluation this iteration, no design stage)
//! are left empty; numeric cells are never NaN.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::coopt::trainer::{CurveRow, EvalSummary};
use crate::error::{Result, SdeError};
use crate::spectral::morphology::Block;

pub const CURVE_COLUMNS: [&str; 11] = [
    "iteration",
    "env_steps",
    "mean_return",
    "std_return",
    "eval_return",
    "mean_sigma",
    "mean_nu",
    "mean_kappa",
    "explained_variance_k",
    "faulted_episodes",
    "update_aborted",
];

pub const EVAL_COLUMNS: [&str; 9] = [
    "iteration",
    "env_steps",
    "episode",
    "return",
    "length",
    "fell",
    "mean_sigma",
    "mean_nu",
    "mean_kappa",
];

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => x.to_string(),
        _ => String::new(),
    }
}

pub fn curve_line(r: &CurveRow) -> String {
    [
        r.iteration.to_string(),
        r.env_steps.to_string(),
        cell(r.mean_return),
        cell(r.std_return),
        cell(r.eval_return),
        cell(r.mean_sigma),
        cell(r.mean_nu),
        cell(r.mean_kappa),
        cell(r.explained_variance_k),
        r.faulted_episodes.to_string(),
        u8::from(r.update_aborted).to_string(),
    ]
    .join(",")
}

pub fn curve_to_string(rows: &[CurveRow]) -> String {
    let mut out = CURVE_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&curve_line(r));
        out.push('\n');
    }
    out
}

fn parse_opt(s: &str) -> std::result::Result<Option<f64>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(format!("'{s}' is not a finite number")),
    }
}

/// Parse a learning curve. An unterminated final line (a row still being
/// written) is ignored.
pub fn curve_from_str(text: &str, source: &str) -> Result<Vec<CurveRow>> {
    let err = |line: usize, reason: String| SdeError::Parse {
        path: source.to_string(),
        line,
        reason,
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let mut lines = complete.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CURVE_COLUMNS.join(",") => {}
        _ => return Err(err(1, "missing or unexpected learning-curve header".into())),
    }
    let mut rows: Vec<CurveRow> = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != CURVE_COLUMNS.len() {
            return Err(err(
                n,
                format!(
                    "expected {} cells, found {}",
                    CURVE_COLUMNS.len(),
                    cells.len()
                ),
            ));
        }
        let int = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| err(n, format!("'{s}' is not an integer")))
        };
        let opt = |s: &str| parse_opt(s).map_err(|e| err(n, e));
        let row = CurveRow {
            iteration: int(cells[0])? as usize,
            env_steps: int(cells[1])?,
            mean_return: opt(cells[2])?,
            std_return: opt(cells[3])?,
            eval_return: opt(cells[4])?,
            mean_sigma: opt(cells[5])?,
            mean_nu: opt(cells[6])?,
            mean_kappa: opt(cells[7])?,
            explained_variance_k: opt(cells[8])?,
            faulted_episodes: int(cells[9])? as usize,
            update_aborted: match cells[10] {
                "0" => false,
                "1" => true,
                other => return Err(err(n, format!("'{other}' is not 0 or 1"))),
            },
        };
        if rows.last().is_some_and(|p| p.iteration >= row.iteration) {
            return Err(err(n, "iterations must be strictly increasing".into()));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_curve(path: &Path) -> Result<Vec<CurveRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| SdeError::io(path, e))?;
    curve_from_str(&text, &path.display().to_string())
}

/// One line per evaluation episode.
pub fn eval_lines(iteration: usize, env_steps: u64, s: &EvalSummary) -> Vec<String> {
    (0..s.episodes())
        .map(|i| {
            let t = &s.thetas[i];
            [
                iteration.to_string(),
                env_steps.to_string(),
                i.to_string(),
                s.returns[i].to_string(),
                s.lengths[i].to_string(),
                u8::from(s.fell[i]).to_string(),
                t.block_mean(Block::Sigma).to_string(),
                t.block_mean(Block::Nu).to_string(),
                t.block_mean(Block::Kappa).to_string(),
            ]
            .join(",")
        })
        .collect()
}

/// Append-only CSV log flushed line by line.
pub struct MetricLog {
    path: PathBuf,
    file: File,
}

impl MetricLog {
    /// Create `path` with `columns` as header; fails if it already exists.
    pub fn create(path: &Path, columns: &[&str]) -> Result<Self> {
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|e| SdeError::io(path, e))?;
        writeln!(file, "{}", columns.join(",")).map_err(|e| SdeError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, line: &str) -> Result<()> {
        writeln!(self.file, "{line}")
            .and_then(|_| self.file.flush())
            .map_err(|e| SdeError::io(&self.path, e))
    }
}
