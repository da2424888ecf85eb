//! File formats for run artifacts: step trace, field snapshots, JSON summary.
//!
//! Floats are written as `{:.17e}` (18 significant digits), which round-trips
//! f64 exactly, so a re-read snapshot reproduces the in-memory state bit for
//! bit. All formats are deterministic for a fixed config and seed except the
//! wall-clock fields (`seconds` in the trace, `wall_seconds` in the summary).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ScalarField, TorusGrid};
use crate::model::SystemKind;
use crate::monitor::{UniformityReport, CHECK_COLUMNS};
use crate::positivity::PositivityReport;
use crate::solver::PathTrace;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path} line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("summary at {path} has schema version {found}, this build reads {expected}")]
    SchemaVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:.17e}")
}

/// One step trace for any number of runs, one row per accepted step. Column
/// order is fixed: identification, corrector diagnostics, the ellipticity
/// minimum, the Laplacian sups, one margin column per named check (empty when
/// the check does not apply to the row's system), then the timing field.
pub fn write_trace(path: &Path, traces: &[&PathTrace]) -> Result<(), OutputError> {
    let mut out = String::new();
    out.push_str("system,t,dt,newton_iters,residual_f,residual_psi,kappa,compat_defect,det_a_min,sup_lap_f,sup_lap_psi");
    for name in CHECK_COLUMNS {
        out.push_str(",margin_");
        out.push_str(name);
    }
    out.push_str(",seconds\n");
    for trace in traces {
        for step in &trace.steps {
            let det_a_min = step
                .report
                .get("ellipticity")
                .map(|c| fmt_f(c.measured))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                trace.system,
                fmt_f(step.t),
                fmt_f(step.dt),
                step.newton_iters,
                fmt_f(step.residual_f),
                fmt_f(step.residual_psi),
                fmt_f(step.kappa),
                fmt_f(step.compat_defect),
                det_a_min,
                fmt_f(step.report.sup_lap_f),
                fmt_f(step.report.sup_lap_psi),
            ));
            for name in CHECK_COLUMNS {
                out.push(',');
                if let Some(m) = step.report.margin(name) {
                    out.push_str(&fmt_f(m));
                }
            }
            out.push(',');
            out.push_str(&fmt_f(step.seconds));
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

/// n rows by n columns of node values, row i = grid row i.
pub fn write_field(path: &Path, field: &ScalarField) -> Result<(), OutputError> {
    let n = field.grid().n();
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    let mut line = String::new();
    for i in 0..n {
        line.clear();
        for j in 0..n {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&fmt_f(field.get(i, j)));
        }
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(io_err(path))?;
    }
    Ok(())
}

pub fn read_field(path: &Path, grid: TorusGrid) -> Result<ScalarField, OutputError> {
    let n = grid.n();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut values = Vec::with_capacity(grid.node_count());
    let mut rows = 0usize;
    for (idx, line) in text.lines().enumerate() {
        rows += 1;
        let mut cols = 0usize;
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| OutputError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("bad float '{cell}'"),
            })?;
            values.push(v);
            cols += 1;
        }
        if cols != n {
            return Err(OutputError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("expected {n} columns, found {cols}"),
            });
        }
    }
    if rows != n {
        return Err(OutputError::Malformed {
            path: path.to_path_buf(),
            line: rows,
            message: format!("expected {n} rows, found {rows}"),
        });
    }
    Ok(ScalarField::from_values(grid, values))
}

/// `fields_<system>_<which>_t<requested>.csv`; the requested time uses the
/// shortest float form, so the defaults are `t0` and `t1`.
pub fn field_file_name(system: SystemKind, which: &str, requested: f64) -> String {
    format!("fields_{system}_{which}_t{requested}.csv")
}

/// Snapshot bookkeeping inside the summary: which file holds which time.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct SnapshotMeta {
    pub requested: f64,
    /// Accepted path time actually stored (first step at or past the request).
    pub t: f64,
    pub f_file: String,
    pub psi_file: String,
}

/// Per-system results. Fields that only exist after a completed path
/// (endpoint audits, uniformity) are options so a seed-only run shares the
/// schema.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct RunSummary {
    pub system: String,
    pub alpha: f64,
    pub epsilon: f64,
    /// Accepted records including the t = 0 row.
    pub steps: usize,
    pub final_t: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub psi_min: f64,
    pub psi_max: f64,
    pub m_max: f64,
    pub residual_f: f64,
    pub residual_psi: f64,
    /// ε · sup |ψ₀|, the ε-independence observable.
    pub eps_psi0_sup: f64,
    pub path_sup_lap_f: f64,
    pub path_sup_lap_psi: f64,
    pub root_oracle_mean: Option<f64>,
    pub root_oracle_sup: Option<f64>,
    pub det_factor_defect: Option<f64>,
    pub det_rhs_defect: Option<f64>,
    pub positivity: Option<PositivityReport>,
    pub uniformity_f: Option<UniformityReport>,
    pub uniformity_psi: Option<UniformityReport>,
    pub snapshots: Vec<SnapshotMeta>,
    pub wall_seconds: f64,
    pub pass: bool,
}

/// A structured failure: the module-level error name plus its rendered
/// message. `system` is absent for failures before any system ran.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct FailureRecord {
    pub system: Option<String>,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    /// Canonical key/value echo of the resolved configuration.
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub runs: Vec<RunSummary>,
    pub failures: Vec<FailureRecord>,
    pub wall_seconds: f64,
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<(), OutputError> {
    let mut text = serde_json::to_string_pretty(summary).map_err(|source| OutputError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_summary(path: &Path) -> Result<Summary, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let summary: Summary = serde_json::from_str(&text).map_err(|source| OutputError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if summary.schema_version != SUMMARY_SCHEMA_VERSION {
        return Err(OutputError::SchemaVersion {
            path: path.to_path_buf(),
            found: summary.schema_version,
            expected: SUMMARY_SCHEMA_VERSION,
        });
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn field_round_trip_is_exact() {
        let grid = TorusGrid::new(16, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let field = ScalarField::from_fn(grid, |_, _| rng.gen::<f64>() * 2e3 - 1e3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        write_field(&path, &field).unwrap();
        let back = read_field(&path, grid).unwrap();
        assert_eq!(field, back);
    }

    #[test]
    fn truncated_field_reports_row_count() {
        let grid = TorusGrid::new(16, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        write_field(&path, &ScalarField::zeros(grid)).unwrap();
        let wrong = TorusGrid::new(32, 1).unwrap();
        let err = read_field(&path, wrong).unwrap_err();
        assert!(matches!(err, OutputError::Malformed { .. }), "{err}");
    }

    #[test]
    fn snapshot_file_names_use_shortest_times() {
        assert_eq!(
            field_file_name(SystemKind::Sys1, "f", 0.0),
            "fields_sys1_f_t0.csv"
        );
        assert_eq!(
            field_file_name(SystemKind::Sys2, "psi", 0.5),
            "fields_sys2_psi_t0.5.csv"
        );
    }

    #[test]
    fn summary_schema_version_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.json");
        let summary = Summary {
            schema_version: SUMMARY_SCHEMA_VERSION + 1,
            config: BTreeMap::new(),
            seed: 0,
            runs: vec![],
            failures: vec![],
            wall_seconds: 0.0,
        };
        let text = serde_json::to_string(&summary).unwrap();
        fs::write(&path, text).unwrap();
        let err = read_summary(&path).unwrap_err();
        assert!(matches!(err, OutputError::SchemaVersion { found, .. } if found == 2));
    }
}
