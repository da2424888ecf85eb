//! Cross-run studies: ε-doubling on one grid, endpoint agreement across
//! grids. Both read only the stored artifacts, never re-solve.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::cli::outputs::{read_field, read_summary, OutputError, RunSummary, Summary};
use crate::geometry::TorusGrid;

#[derive(Debug, Error)]
pub enum CompareError {
    /// The two configs differ somewhere other than the one studied key.
    #[error("runs are not comparable; differing keys: {}", differing.join(", "))]
    IncompatibleRuns { differing: Vec<String> },
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("{0}")]
    Invalid(String),
}

/// Ratios and differences for one system present in both runs. Ratios are b
/// over a; `None` when the denominator is zero but the numerator is not.
#[derive(Clone, Debug, Serialize)]
pub struct SystemComparison {
    pub epsilon_a: f64,
    pub epsilon_b: f64,
    /// ‖εψ₀‖∞ ratio, the seed-level ε-independence observable.
    pub eps_psi0_ratio: Option<f64>,
    /// Ratio of the path-wide sup |Δψ|.
    pub path_sup_dpsi_ratio: Option<f64>,
    /// Endpoint sup differences on the common (coarse) nodes; present only
    /// when the grids differ.
    pub endpoint_sup_diff_f: Option<f64>,
    pub endpoint_sup_diff_psi: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub schema_version: u32,
    /// Which config keys the runs differ in (empty for identical configs).
    pub differing_keys: Vec<String>,
    pub systems: BTreeMap<String, SystemComparison>,
}

fn ratio(numerator: f64, denominator: f64) -> Option<f64> {
    if denominator == 0.0 {
        if numerator == 0.0 {
            Some(1.0)
        } else {
            None
        }
    } else {
        Some(numerator / denominator)
    }
}

fn config_usize(summary: &Summary, key: &str) -> Result<usize, CompareError> {
    summary
        .config
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CompareError::Invalid(format!("summary config lacks usable '{key}'")))
}

/// Loads both endpoint snapshots of one field and takes the sup difference on
/// the coarse grid's nodes; requires the fine grid to be a refinement.
fn endpoint_diff(
    run_a: (&Path, &RunSummary, TorusGrid),
    run_b: (&Path, &RunSummary, TorusGrid),
    which: &str,
) -> Result<f64, CompareError> {
    let (coarse, fine) = if run_a.2.n() <= run_b.2.n() {
        (run_a, run_b)
    } else {
        (run_b, run_a)
    };
    let (nc, nf) = (coarse.2.n(), fine.2.n());
    if nf % nc != 0 {
        return Err(CompareError::Invalid(format!(
            "grids {nc} and {nf} do not nest"
        )));
    }
    let stride = nf / nc;

    let pick = |(dir, run, grid): (&Path, &RunSummary, TorusGrid)| {
        let snap = run
            .snapshots
            .iter()
            .find(|s| s.requested == 1.0)
            .ok_or_else(|| {
                CompareError::Invalid(format!("{} stores no t = 1 snapshot", run.system))
            })?;
        let file = if which == "f" { &snap.f_file } else { &snap.psi_file };
        Ok::<_, CompareError>(read_field(&dir.join(file), grid)?)
    };
    let coarse_field = pick(coarse)?;
    let fine_field = pick(fine)?;

    let mut sup: f64 = 0.0;
    for i in 0..nc {
        for j in 0..nc {
            let d = (coarse_field.get(i, j) - fine_field.get(i * stride, j * stride)).abs();
            sup = sup.max(d);
        }
    }
    Ok(sup)
}

/// Compares two finished run directories. Accepts identical configs (all
/// ratios 1), an ε-only difference (the doubling study), or an n-only
/// difference (the refinement study); anything else is `IncompatibleRuns`.
/// `output_dir` is ignored in the diff so the runs can coexist on disk.
pub fn export_comparison(dir_a: &Path, dir_b: &Path) -> Result<CompareReport, CompareError> {
    let sa = read_summary(&dir_a.join("summary.json"))?;
    let sb = read_summary(&dir_b.join("summary.json"))?;

    let mut differing: Vec<String> = Vec::new();
    let keys: std::collections::BTreeSet<&String> =
        sa.config.keys().chain(sb.config.keys()).collect();
    for key in keys {
        if key == "output_dir" {
            continue;
        }
        if sa.config.get(key) != sb.config.get(key) {
            differing.push(key.to_string());
        }
    }
    let allowed = differing.is_empty()
        || differing == ["epsilon"]
        || differing == ["n"];
    if !allowed {
        return Err(CompareError::IncompatibleRuns { differing });
    }
    let grids_differ = differing == ["n"];

    let grid_a = TorusGrid::new(config_usize(&sa, "n")?, config_usize(&sa, "deg_l")? as u32)
        .map_err(|e| CompareError::Invalid(e.to_string()))?;
    let grid_b = TorusGrid::new(config_usize(&sb, "n")?, config_usize(&sb, "deg_l")? as u32)
        .map_err(|e| CompareError::Invalid(e.to_string()))?;

    let mut systems = BTreeMap::new();
    for run_a in &sa.runs {
        let Some(run_b) = sb.runs.iter().find(|r| r.system == run_a.system) else {
            continue;
        };
        let (diff_f, diff_psi) = if grids_differ {
            (
                Some(endpoint_diff(
                    (dir_a, run_a, grid_a),
                    (dir_b, run_b, grid_b),
                    "f",
                )?),
                Some(endpoint_diff(
                    (dir_a, run_a, grid_a),
                    (dir_b, run_b, grid_b),
                    "psi",
                )?),
            )
        } else {
            (None, None)
        };
        systems.insert(
            run_a.system.clone(),
            SystemComparison {
                epsilon_a: run_a.epsilon,
                epsilon_b: run_b.epsilon,
                eps_psi0_ratio: ratio(run_b.eps_psi0_sup, run_a.eps_psi0_sup),
                path_sup_dpsi_ratio: ratio(run_b.path_sup_lap_psi, run_a.path_sup_lap_psi),
                endpoint_sup_diff_f: diff_f,
                endpoint_sup_diff_psi: diff_psi,
            },
        );
    }
    if systems.is_empty() {
        return Err(CompareError::Invalid(
            "the runs share no completed system".to_string(),
        ));
    }
    Ok(CompareReport {
        schema_version: 1,
        differing_keys: differing,
        systems,
    })
}
