//! Runtime enforcement of the a-priori bounds behind the continuity argument.
//!
//! Every accepted path step is scored against the pointwise inequalities the
//! scheme needs: section norm below one, potential bounds, branch margin,
//! positivity of the frozen right side, integral compatibility of the
//! ψ-equation, and ellipticity of the coupled symbol. A step that fails any
//! check is rejected by the path driver even if Newton converged, since a
//! converged state outside the bounds sits on the wrong solution branch.

use crate::geometry::integrate;
use crate::linearize::ellipticity_check;
use crate::model::{residual_psi, MetricState, RhsData, SystemKind, VortexParams};

/// Default slack accepted on any margin before a check counts as failed.
pub const REPORT_TOL: f64 = 1e-9;

/// Hard cap on the ω-integral of the ψ-equation residual at accepted states.
pub const PSI_INTEGRAL_TOL: f64 = 1e-10;

/// One named inequality: pass iff margin ≥ −report_tol.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub measured: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Everything measured at one state. `checks` holds the pass/fail
/// inequalities; the sup fields feed the end-of-path uniformity audit.
#[derive(Clone, Debug)]
pub struct BoundsReport {
    pub checks: Vec<CheckResult>,
    pub sup_lap_psi: f64,
    pub sup_lap_f: f64,
}

/// Fixed column order for serialized margins; absent checks serialize empty.
pub const CHECK_COLUMNS: [&str; 9] = [
    "m_max",
    "psi_upper",
    "psi_lower",
    "eps_psi_upper",
    "branch",
    "eps_margin",
    "a0_min",
    "psi_integral",
    "ellipticity",
];

impl BoundsReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn margin(&self, name: &str) -> Option<f64> {
        self.get(name).map(|c| c.margin)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.pass)
    }
}

fn check(name: &'static str, measured: f64, bound: f64, margin: f64, tol: f64) -> CheckResult {
    CheckResult {
        name,
        measured,
        bound,
        margin,
        pass: margin >= -tol,
    }
}

/// Scores `state` against every bound applicable to `system`.
///
/// The caller guarantees the state's residual is already at the Newton
/// tolerance; the ψ-integral check leans on that.
pub fn check_bounds(
    state: &MetricState,
    params: &VortexParams,
    rhs: &RhsData,
    system: SystemKind,
    report_tol: f64,
) -> BoundsReport {
    let k1 = params.k1();
    let k2 = params.k2();
    let mut checks = Vec::with_capacity(CHECK_COLUMNS.len());

    let m_max = state.phi_g2().max();
    checks.push(check("m_max", m_max, 1.0, 1.0 - m_max, report_tol));

    match system {
        SystemKind::Sys1 => {
            let upper = (f64::from(params.r2) * 2.0 + 1.0) / (k1 * k2);
            let lower = -k1 / (k1 * k2);
            let psi_max = state.psi().max();
            let psi_min = state.psi().min();
            checks.push(check("psi_upper", psi_max, upper, upper - psi_max, report_tol));
            checks.push(check("psi_lower", psi_min, lower, psi_min - lower, report_tol));
        }
        SystemKind::Sys2 => {
            let bound = 1.0 / (2.0 * k1);
            let measured = params.epsilon * state.psi().max();
            checks.push(check(
                "eps_psi_upper",
                measured,
                bound,
                bound - measured,
                report_tol,
            ));
        }
    }

    let branch = state.lap_f().min() + f64::from(params.r1) + params.shift() * k1;
    checks.push(check("branch", branch, 0.0, branch, report_tol));

    if system == SystemKind::Sys2 {
        let eps_margin = state.lap_psi().min() + 1.0 + params.eps_weight() * params.epsilon;
        checks.push(check("eps_margin", eps_margin, 0.0, eps_margin, report_tol));
    }

    let a0_min = rhs.a0().min();
    checks.push(check("a0_min", a0_min, 0.0, a0_min, report_tol));

    let psi_int = integrate(&residual_psi(state, params, system)).abs();
    checks.push(check(
        "psi_integral",
        psi_int,
        PSI_INTEGRAL_TOL,
        PSI_INTEGRAL_TOL - psi_int,
        report_tol,
    ));

    let det_min = ellipticity_check(state, params, 1.0).min();
    checks.push(check("ellipticity", det_min, 0.0, det_min, report_tol));

    BoundsReport {
        checks,
        sup_lap_psi: state.lap_psi().sup_norm(),
        sup_lap_f: state.lap_f().sup_norm(),
    }
}

/// End-of-path audit of the recorded sups: the bound constants are
/// existential in the underlying estimates, so the realized per-step sups
/// must stay t-uniform. Fails when any step exceeds ten times the path
/// median.
#[derive(Clone, Copy, Debug, serde::Deserialize, serde::Serialize)]
pub struct UniformityReport {
    pub median: f64,
    pub max: f64,
    pub ratio: f64,
    pub pass: bool,
}

pub fn uniformity_check(sups: &[f64]) -> UniformityReport {
    assert!(!sups.is_empty(), "uniformity audit needs at least one step");
    let mut sorted: Vec<f64> = sups.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let max = *sorted.last().unwrap();
    // Degenerate paths sit at exact zero; any max there is uniform.
    let ratio = if median > 0.0 { max / median } else { 1.0 };
    UniformityReport {
        median,
        max,
        ratio,
        pass: ratio <= 10.0,
    }
}

/// Convenience wrapper for ψ ≥ 0 states: the section norm check then holds
/// with margin at least one half.
pub fn m_half_margin(state: &MetricState) -> Option<f64> {
    if state.psi().min() >= 0.0 {
        Some(0.5 - state.phi_g2().max())
    } else {
        None
    }
}
