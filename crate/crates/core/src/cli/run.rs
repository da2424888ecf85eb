//! Run orchestration: seed the path, calibrate the constants, follow t to 1,
//! audit the endpoint, and leave a complete file trail either way.
//!
//! Exit discipline: 0 only when every requested system reached t = 1 and
//! passed every endpoint audit; 1 for any structured failure; the binary
//! reserves 2 for configuration problems.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cli::config::{parse_config, Calibrated, ConfigError, RunConfig, SectionChoice};
use crate::cli::outputs::{
    field_file_name, read_field, read_summary, write_field, write_summary, write_trace,
    FailureRecord, OutputError, RunSummary, SnapshotMeta, Summary, SUMMARY_SCHEMA_VERSION,
};
use crate::geometry::{build_theta_section, SectionData, TorusGrid, DEFAULT_TAIL_TOL};
use crate::model::{
    calibrate_alpha, calibrate_epsilon, compute_rhs_t0, curvature_coeffs, MetricState, ModelError,
    RhsData, ShiftConditions, SystemKind, VortexParams,
};
use crate::monitor::check_bounds;
use crate::positivity::{det_identity_check, positivity_check};
use crate::solver::{continue_path, pointwise_root_oracle, solve_t0, PathTrace, SolveError};

/// Directions sampled by the endpoint positivity audit.
pub const DIRECTION_SAMPLES: usize = 64;
/// Endpoint agreement gates, as multiples of the corrector tolerance.
const ROOT_SUP_FACTOR: f64 = 100.0;
const ROOT_MEAN_FACTOR: f64 = 1000.0;
const RHS_DEFECT_FACTOR: f64 = 10.0;
/// The factored/expanded determinant routes are pure algebra.
const FACTOR_DEFECT_TOL: f64 = 1e-12;
/// Auto-ε recalibrations before giving up.
const MAX_EPSILON_RESTARTS: usize = 8;

/// Stable name for a structured failure, used in the summary record.
pub fn error_kind(e: &SolveError) -> &'static str {
    match e {
        SolveError::NoConvergence { .. } => "NoConvergence",
        SolveError::SingularJacobian { .. } => "SingularJacobian",
        SolveError::PathStuck { .. } => "PathStuck",
        SolveError::BranchLost { .. } => "BranchLost",
        SolveError::EllipticityLost { .. } => "EllipticityLost",
        SolveError::EpsilonTooSmall { .. } => "EpsilonTooSmall",
        SolveError::NoRealRoot { .. } => "NoRealRoot",
        SolveError::Geometry(_) => "Geometry",
        SolveError::Model(ModelError::Calibration { .. }) => "Calibration",
        SolveError::Model(_) => "Model",
    }
}

fn failure(system: Option<SystemKind>, kind: &str, message: String) -> FailureRecord {
    FailureRecord {
        system: system.map(|s| s.to_string()),
        kind: kind.to_string(),
        message,
    }
}

/// Runs `init` (seed only) or `solve` (full path) for a validated config.
/// Returns the process exit code.
pub fn execute(config: &RunConfig, quiet: bool, t0_only: bool) -> i32 {
    match run_all(config, quiet, t0_only) {
        Ok(all_pass) => {
            if all_pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("vortexpath: {e}");
            1
        }
    }
}

fn build_section(config: &RunConfig, grid: TorusGrid) -> SectionData {
    match config.section {
        // Degree-1 restriction and tail convergence are enforced at parse
        // time, so a failure here is a programming error.
        SectionChoice::Theta => {
            build_theta_section(grid, DEFAULT_TAIL_TOL).expect("validated config")
        }
        SectionChoice::Zero => SectionData::zero(grid),
    }
}

fn run_all(config: &RunConfig, quiet: bool, t0_only: bool) -> Result<bool, OutputError> {
    let began = Instant::now();
    std::fs::create_dir_all(&config.output_dir).map_err(|source| OutputError::Io {
        path: config.output_dir.clone(),
        source,
    })?;
    let grid = TorusGrid::new(config.n, config.deg_l).expect("validated config");
    let section = build_section(config, grid);

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut traces = Vec::new();
    for system in config.system.systems() {
        let outcome = run_system(system, &section, config, quiet, t0_only)?;
        if let Some(summary) = outcome.summary {
            runs.push(summary);
        }
        if let Some(trace) = outcome.trace {
            traces.push(trace);
        }
        failures.extend(outcome.failures);
    }

    if !t0_only {
        let refs: Vec<&PathTrace> = traces.iter().collect();
        write_trace(&config.output_dir.join("trace.csv"), &refs)?;
    }

    let requested = config.system.systems().len();
    let all_pass = failures.is_empty() && runs.len() == requested && runs.iter().all(|r| r.pass);
    let summary = Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        config: config
            .key_values()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        seed: config.seed,
        runs,
        failures,
        wall_seconds: began.elapsed().as_secs_f64(),
    };
    write_summary(&config.output_dir.join("summary.json"), &summary)?;

    if !quiet {
        for fail in &summary.failures {
            let sys = fail.system.as_deref().unwrap_or("-");
            println!("[fail] {sys}: {} ({})", fail.message, fail.kind);
        }
        println!(
            "wrote {} ({} run record{}, {})",
            config.output_dir.join("summary.json").display(),
            summary.runs.len(),
            if summary.runs.len() == 1 { "" } else { "s" },
            if all_pass { "all pass" } else { "FAILED" },
        );
    }
    Ok(all_pass)
}

/// Everything one system produced: at most one summary record, at most one
/// trace, any number of structured failures.
struct SystemOutcome {
    summary: Option<RunSummary>,
    trace: Option<PathTrace>,
    failures: Vec<FailureRecord>,
}

/// Seed state, calibrated constants, and frozen right-hand side: the part
/// shared by `init` and `solve`.
struct Prepared {
    params: VortexParams,
    state0: MetricState,
    rhs: RhsData,
    eps_psi0_sup: f64,
}

fn resolve_alpha(
    state0: &MetricState,
    params: &VortexParams,
    config: &RunConfig,
) -> Result<f64, SolveError> {
    match config.alpha {
        Calibrated::Auto => Ok(calibrate_alpha(state0, params, config.solver.alpha_max)?),
        Calibrated::Fixed(a) => {
            let sc = ShiftConditions::measure(state0, params, a);
            if sc.pass() {
                Ok(a)
            } else {
                Err(SolveError::Model(ModelError::Calibration {
                    alpha_max: a,
                    branch: sc.branch,
                    factors: sc.factors,
                    surrogate: sc.surrogate,
                }))
            }
        }
    }
}

fn prepare(
    system: SystemKind,
    section: &SectionData,
    config: &RunConfig,
    eps: f64,
) -> Result<Prepared, SolveError> {
    let base = VortexParams::new(config.r1, config.r2, 0.0, eps, 0.0)?;
    let state0 = solve_t0(system, &base, section, &config.solver)?;
    let alpha = resolve_alpha(&state0, &base, config)?;
    let params = VortexParams::new(config.r1, config.r2, alpha, eps, 0.0)?;
    let rhs = compute_rhs_t0(&state0, &params)?;
    let eps_psi0_sup = eps * state0.psi().sup_norm();
    Ok(Prepared {
        params,
        state0,
        rhs,
        eps_psi0_sup,
    })
}

fn run_system(
    system: SystemKind,
    section: &SectionData,
    config: &RunConfig,
    quiet: bool,
    t0_only: bool,
) -> Result<SystemOutcome, OutputError> {
    let began = Instant::now();
    let scfg = &config.solver;
    let mut failures = Vec::new();
    let fail_outcome = |failures: Vec<FailureRecord>| SystemOutcome {
        summary: None,
        trace: None,
        failures,
    };

    // ε applies to system 2; system 1 always runs its seed equation at 1.
    let bootstrap = VortexParams::new(config.r1, config.r2, 0.0, 1.0, 0.0).expect("valid ranks");
    let auto_eps = system == SystemKind::Sys2 && config.epsilon == Calibrated::Auto;
    let mut eps = match (system, config.epsilon) {
        (SystemKind::Sys1, _) => 1.0,
        (SystemKind::Sys2, Calibrated::Fixed(e)) => e,
        (SystemKind::Sys2, Calibrated::Auto) => calibrate_epsilon(-1.0, &bootstrap, scfg.eps_min),
    };

    let attempts = if auto_eps { MAX_EPSILON_RESTARTS } else { 1 };
    let mut prepared_and_trace = None;
    let mut last_err = None;
    for attempt in 0..attempts {
        let prepared = match prepare(system, section, config, eps) {
            Ok(p) => p,
            Err(e) => {
                last_err = Some(e);
                break;
            }
        };
        if t0_only {
            let outcome = init_outcome(system, config, prepared, began.elapsed())?;
            return Ok(outcome);
        }
        // Abort threshold the ε choice can actually back: the ε-margin
        // quantity keeps half its budget as long as Δψ stays above this.
        let premise = 1.0 - eps * prepared.params.eps_weight() / 2.0;
        let premise = (system == SystemKind::Sys2).then_some(premise);
        match continue_path(
            system,
            &prepared.state0,
            &prepared.params,
            &prepared.rhs,
            section,
            scfg,
            premise,
            &config.snapshots,
        ) {
            Ok(trace) => {
                prepared_and_trace = Some((prepared, trace));
                break;
            }
            Err(SolveError::EpsilonTooSmall { observed, assumed })
                if auto_eps && attempt + 1 < attempts =>
            {
                let wider = calibrate_epsilon(observed, &bootstrap, scfg.eps_min);
                if !quiet {
                    println!(
                        "{system}: eps = {eps} assumed lap psi >= {assumed:.3}, observed {observed:.3}; retry with eps = {wider}"
                    );
                }
                last_err = Some(SolveError::EpsilonTooSmall { observed, assumed });
                eps = wider;
            }
            Err(e) => {
                last_err = Some(e);
                break;
            }
        }
    }

    let Some((prepared, trace)) = prepared_and_trace else {
        let e = last_err.expect("no trace implies an error");
        if !quiet {
            println!("{system}: failed: {e}");
        }
        failures.push(failure(Some(system), error_kind(&e), e.to_string()));
        return Ok(fail_outcome(failures));
    };

    let audit = audit_endpoint(system, section, config, &prepared, &trace, &mut failures);
    let snapshots = write_snapshots(system, config, &trace)?;
    let state = &trace.final_state;
    let summary = RunSummary {
        system: system.to_string(),
        alpha: trace.alpha,
        epsilon: trace.epsilon,
        steps: trace.steps.len(),
        final_t: trace.final_t(),
        f_min: state.f().min(),
        f_max: state.f().max(),
        psi_min: state.psi().min(),
        psi_max: state.psi().max(),
        m_max: state.phi_g2().max(),
        residual_f: trace.steps.last().map(|s| s.residual_f).unwrap_or(f64::NAN),
        residual_psi: trace.steps.last().map(|s| s.residual_psi).unwrap_or(f64::NAN),
        eps_psi0_sup: prepared.eps_psi0_sup,
        path_sup_lap_f: trace.uniformity_f.max,
        path_sup_lap_psi: trace.uniformity_psi.max,
        root_oracle_mean: audit.root_mean,
        root_oracle_sup: audit.root_sup,
        det_factor_defect: Some(audit.factor_defect),
        det_rhs_defect: Some(audit.rhs_defect),
        positivity: audit.positivity,
        uniformity_f: Some(trace.uniformity_f),
        uniformity_psi: Some(trace.uniformity_psi),
        snapshots,
        wall_seconds: began.elapsed().as_secs_f64(),
        pass: audit.pass,
    };
    if !quiet {
        println!(
            "{system}: t = 1 in {} steps (alpha = {}, eps = {}), endpoint {}",
            summary.steps,
            summary.alpha,
            summary.epsilon,
            if summary.pass { "pass" } else { "FAIL" },
        );
    }
    Ok(SystemOutcome {
        summary: Some(summary),
        trace: Some(trace),
        failures,
    })
}

fn init_outcome(
    system: SystemKind,
    config: &RunConfig,
    prepared: Prepared,
    elapsed: std::time::Duration,
) -> Result<SystemOutcome, OutputError> {
    let p0 = prepared.params.at_t(0.0);
    let report = check_bounds(&prepared.state0, &p0, &prepared.rhs, system, config.solver.report_tol);
    let mut failures = Vec::new();
    if let Some(fail) = report.first_failure() {
        failures.push(failure(
            Some(system),
            "BoundsViolation",
            format!(
                "seed check '{}' measured {:.6e} against {:.6e}",
                fail.name, fail.measured, fail.bound
            ),
        ));
    }

    let state = &prepared.state0;
    let f_file = field_file_name(system, "f", 0.0);
    let psi_file = field_file_name(system, "psi", 0.0);
    write_field(&config.output_dir.join(&f_file), state.f())?;
    write_field(&config.output_dir.join(&psi_file), state.psi())?;

    use crate::model::residual_psi;
    let residual_psi_sup = residual_psi(state, &p0, system).sup_norm();
    let residual_f_sup = match system {
        SystemKind::Sys1 => crate::model::residual_sys1_f(state, &p0, &prepared.rhs).sup_norm(),
        SystemKind::Sys2 => {
            let (rf, _) = crate::model::residual_sys2(state, &p0, &prepared.rhs);
            rf.sup_norm()
        }
    };
    let summary = RunSummary {
        system: system.to_string(),
        alpha: prepared.params.alpha,
        epsilon: prepared.params.epsilon,
        steps: 1,
        final_t: 0.0,
        f_min: state.f().min(),
        f_max: state.f().max(),
        psi_min: state.psi().min(),
        psi_max: state.psi().max(),
        m_max: state.phi_g2().max(),
        residual_f: residual_f_sup,
        residual_psi: residual_psi_sup,
        eps_psi0_sup: prepared.eps_psi0_sup,
        path_sup_lap_f: report.sup_lap_f,
        path_sup_lap_psi: report.sup_lap_psi,
        root_oracle_mean: None,
        root_oracle_sup: None,
        det_factor_defect: None,
        det_rhs_defect: None,
        positivity: None,
        uniformity_f: None,
        uniformity_psi: None,
        snapshots: vec![SnapshotMeta {
            requested: 0.0,
            t: 0.0,
            f_file,
            psi_file,
        }],
        wall_seconds: elapsed.as_secs_f64(),
        pass: report.all_pass(),
    };
    Ok(SystemOutcome {
        summary: Some(summary),
        trace: None,
        failures,
    })
}

struct EndpointAudit {
    root_mean: Option<f64>,
    root_sup: Option<f64>,
    factor_defect: f64,
    rhs_defect: f64,
    positivity: Option<crate::positivity::PositivityReport>,
    pass: bool,
}

/// Every endpoint claim re-measured at t = 1: bound audit of the recorded
/// steps, determinant identity against the frozen right side, the pointwise
/// root oracle against Δf, and sampled curvature positivity. Each failure
/// appends a structured record; nothing is silent.
fn audit_endpoint(
    system: SystemKind,
    section: &SectionData,
    config: &RunConfig,
    prepared: &Prepared,
    trace: &PathTrace,
    failures: &mut Vec<FailureRecord>,
) -> EndpointAudit {
    let scfg = &config.solver;
    let state = &trace.final_state;
    let p1 = prepared.params.at_t(1.0);
    let mut pass = true;

    if (trace.final_t() - 1.0).abs() > 1e-12 {
        pass = false;
        failures.push(failure(
            Some(system),
            "PathStuck",
            format!("trace ends at t = {}", trace.final_t()),
        ));
    }
    if let Some(bad) = trace.steps.iter().find(|s| !s.report.all_pass()) {
        pass = false;
        let name = bad.report.first_failure().map(|c| c.name).unwrap_or("?");
        failures.push(failure(
            Some(system),
            "BoundsViolation",
            format!("step at t = {} fails check '{name}'", bad.t),
        ));
    }

    let coeffs = curvature_coeffs(state, &p1, 0.0);
    let det = det_identity_check(&coeffs, &prepared.rhs);
    if det.factor_defect > FACTOR_DEFECT_TOL || det.rhs_defect > RHS_DEFECT_FACTOR * scfg.newton_tol
    {
        pass = false;
        failures.push(failure(
            Some(system),
            "DetIdentityMismatch",
            format!(
                "factor defect {:.3e}, rhs defect {:.3e}",
                det.factor_defect, det.rhs_defect
            ),
        ));
    }

    let (root_mean, root_sup) = match pointwise_root_oracle(state.psi(), section, &p1, &prepared.rhs)
    {
        Ok(u) => {
            let sup = u.sub(state.lap_f()).sup_norm();
            let mean = u.mean().abs();
            if sup > ROOT_SUP_FACTOR * scfg.newton_tol || mean > ROOT_MEAN_FACTOR * scfg.newton_tol
            {
                pass = false;
                failures.push(failure(
                    Some(system),
                    "RootOracleMismatch",
                    format!("sup disagreement {sup:.3e}, mean {mean:.3e}"),
                ));
            }
            (Some(mean), Some(sup))
        }
        Err(e) => {
            pass = false;
            failures.push(failure(Some(system), error_kind(&e), e.to_string()));
            (None, None)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let positivity = match positivity_check(&coeffs, DIRECTION_SAMPLES, &mut rng) {
        Ok(report) => Some(report),
        Err(e) => {
            pass = false;
            failures.push(failure(Some(system), "NotPositive", e.to_string()));
            None
        }
    };

    EndpointAudit {
        root_mean,
        root_sup,
        factor_defect: det.factor_defect,
        rhs_defect: det.rhs_defect,
        positivity,
        pass,
    }
}

fn write_snapshots(
    system: SystemKind,
    config: &RunConfig,
    trace: &PathTrace,
) -> Result<Vec<SnapshotMeta>, OutputError> {
    let mut metas = Vec::new();
    for snap in &trace.snapshots {
        let f_file = field_file_name(system, "f", snap.requested);
        let psi_file = field_file_name(system, "psi", snap.requested);
        write_field(&config.output_dir.join(&f_file), snap.state.f())?;
        write_field(&config.output_dir.join(&psi_file), snap.state.psi())?;
        metas.push(SnapshotMeta {
            requested: snap.requested,
            t: snap.t,
            f_file,
            psi_file,
        });
    }
    Ok(metas)
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("stored config does not parse: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Invalid(String),
}

/// Re-checks the endpoints stored in a run directory: rebuilds the section
/// and right-hand side deterministically from the summary's config echo,
/// loads the t = 1 snapshots, and re-runs every endpoint audit. Exit 0 only
/// if all stored runs still pass.
pub fn verify(dir: &Path, quiet: bool) -> i32 {
    match verify_inner(dir, quiet) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("vortexpath: {e}");
            2
        }
    }
}

fn verify_inner(dir: &Path, quiet: bool) -> Result<bool, VerifyError> {
    let summary = read_summary(&dir.join("summary.json"))?;
    let text: String = summary
        .config
        .iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect();
    let config = parse_config(&text)?;
    let grid = TorusGrid::new(config.n, config.deg_l)
        .map_err(|e| VerifyError::Invalid(e.to_string()))?;
    let section = build_section(&config, grid);
    let scfg = &config.solver;

    if summary.runs.is_empty() {
        return Err(VerifyError::Invalid(format!(
            "{} holds no completed runs",
            dir.display()
        )));
    }

    let mut all_ok = true;
    for run in &summary.runs {
        let system: SystemKind = run
            .system
            .parse()
            .map_err(|e: String| VerifyError::Invalid(e))?;
        let mut ok = true;
        let note = |label: &str, good: bool, detail: String| {
            if !quiet {
                println!("[{}] {system} {label}: {detail}", if good { "ok" } else { "fail" });
            }
        };

        if (run.final_t - 1.0).abs() > 1e-12 {
            note("endpoint", false, format!("stored run stops at t = {}", run.final_t));
            all_ok = false;
            continue;
        }
        let Some(snap) = run
            .snapshots
            .iter()
            .find(|s| s.requested == 1.0 && (s.t - 1.0).abs() < 1e-12)
        else {
            note("endpoint", false, "no t = 1 snapshot stored".to_string());
            all_ok = false;
            continue;
        };

        let params = VortexParams::new(config.r1, config.r2, run.alpha, run.epsilon, 0.0)
            .map_err(|e| VerifyError::Invalid(e.to_string()))?;
        let state0 = solve_t0(system, &params, &section, scfg)
            .map_err(|e| VerifyError::Invalid(format!("seed re-solve failed: {e}")))?;
        let rhs = compute_rhs_t0(&state0, &params)
            .map_err(|e| VerifyError::Invalid(e.to_string()))?;

        let f1 = read_field(&dir.join(&snap.f_file), grid)?;
        let psi1 = read_field(&dir.join(&snap.psi_file), grid)?;
        let state = MetricState::new(f1, psi1, &section)
            .map_err(|e| VerifyError::Invalid(e.to_string()))?;
        let p1 = params.at_t(1.0);

        let (rf, rp) = match system {
            SystemKind::Sys1 => (
                crate::model::residual_sys1_f(&state, &p1, &rhs).sup_norm(),
                crate::model::residual_sys1_psi(&state, &p1).sup_norm(),
            ),
            SystemKind::Sys2 => {
                let (a, b) = crate::model::residual_sys2(&state, &p1, &rhs);
                (a.sup_norm(), b.sup_norm())
            }
        };
        let res_ok = rf <= RHS_DEFECT_FACTOR * scfg.newton_tol
            && rp <= RHS_DEFECT_FACTOR * scfg.newton_tol;
        note("residuals", res_ok, format!("f {rf:.3e}, psi {rp:.3e}"));
        ok &= res_ok;

        let report = check_bounds(&state, &p1, &rhs, system, scfg.report_tol);
        let bounds_ok = report.all_pass();
        let detail = report
            .first_failure()
            .map(|c| format!("'{}' measured {:.6e}", c.name, c.measured))
            .unwrap_or_else(|| "all margins positive".to_string());
        note("bounds", bounds_ok, detail);
        ok &= bounds_ok;

        let coeffs = curvature_coeffs(&state, &p1, 0.0);
        let det = det_identity_check(&coeffs, &rhs);
        let det_ok = det.factor_defect <= FACTOR_DEFECT_TOL
            && det.rhs_defect <= RHS_DEFECT_FACTOR * scfg.newton_tol;
        note(
            "determinant",
            det_ok,
            format!("factor {:.3e}, rhs {:.3e}", det.factor_defect, det.rhs_defect),
        );
        ok &= det_ok;

        let oracle_ok = match pointwise_root_oracle(state.psi(), &section, &p1, &rhs) {
            Ok(u) => {
                let sup = u.sub(state.lap_f()).sup_norm();
                let mean = u.mean().abs();
                let good = sup <= ROOT_SUP_FACTOR * scfg.newton_tol
                    && mean <= ROOT_MEAN_FACTOR * scfg.newton_tol;
                note("root oracle", good, format!("sup {sup:.3e}, mean {mean:.3e}"));
                good
            }
            Err(e) => {
                note("root oracle", false, e.to_string());
                false
            }
        };
        ok &= oracle_ok;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let pos_ok = match positivity_check(&coeffs, DIRECTION_SAMPLES, &mut rng) {
            Ok(report) => {
                note(
                    "positivity",
                    true,
                    format!(
                        "min factor {:.3e}, min det H {:.3e}",
                        report
                            .min_a1
                            .min(report.min_c1)
                            .min(report.min_a2)
                            .min(report.min_c2),
                        report.min_h_det
                    ),
                );
                true
            }
            Err(e) => {
                note("positivity", false, e.to_string());
                false
            }
        };
        ok &= pos_ok;

        all_ok &= ok;
    }
    Ok(all_ok)
}
