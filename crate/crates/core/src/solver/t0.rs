//! t=0 seeding by continuation in s from an exact constant solution.
//!
//! The seeding family L_s(ψ) = Δψ + 1 − s(1−m)(2r1+1)/(2r2+1) − 2(2r1+1)εψ
//! starts at the constant 1/(2(2r1+1)ε), which solves s=0 exactly, and walks
//! s to 1. System 1 runs the family at ε=1, where s=1 is its ψ-equation up
//! to the factor (2r2+1); system 2 runs it at the calibrated ε. The returned
//! state pairs ψ₀ with f₀ = −ψ₀/2.

use crate::geometry::{helmholtz_solve, ScalarField, SectionData};
use crate::linearize::{linearize, SystemTag};
use crate::model::{residual_s_path, MetricState, SystemKind, VortexParams};
use crate::solver::{cg_solve, newton, NewtonReport, SolveError, SolverConfig};

/// Halving floor for the s-step; the family is mild, so undershooting this
/// means the setup is wrong, not the step size.
const DS_MIN: f64 = 1e-3;

/// Newton-solves L_s(ψ) = 0 at fixed s from the given start.
fn corrector(
    psi0: ScalarField,
    section: &SectionData,
    params: &VortexParams,
    s: f64,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<(ScalarField, NewtonReport), SolveError> {
    let grid = psi0.grid();
    let state_of = |psi: &ScalarField| -> Result<MetricState, SolveError> {
        Ok(MetricState::new(
            ScalarField::zeros(grid),
            psi.clone(),
            section,
        )?)
    };
    let out = newton(
        psi0,
        cfg.corrector_tol(),
        cfg.newton_tol,
        cfg.max_newton,
        cfg.damping,
        |psi| Ok(residual_s_path(&state_of(psi)?, params, s, eps).sup_norm()),
        |psi| {
            let st = state_of(psi)?;
            let r = residual_s_path(&st, params, s, eps);
            let op = linearize(&st, params, SystemTag::SPath { s, eps });
            let parts = op.scalar_parts().expect("s-path operator is scalar");
            let c_lap = parts.lap.mean();
            let c_zero = parts.zeroth.mean();
            // (−J)δ = R is SPD: −J = −Δ + positive diagonal.
            let (delta, _) = cg_solve(
                |v| {
                    let field = ScalarField::from_values(grid, v.to_vec());
                    op.apply_scalar(&field).map(|x| -x).values().to_vec()
                },
                |v| {
                    let field = ScalarField::from_values(grid, v.to_vec());
                    helmholtz_solve(&field, -c_lap, -c_zero).values().to_vec()
                },
                r.values(),
                1e-13,
                1000,
                "t0 psi corrector",
            )?;
            Ok(ScalarField::from_values(grid, delta))
        },
    )?;
    Ok((out.x, out.report))
}

/// Returns the t=0 state (f₀ = −ψ₀/2, ψ₀) for the requested system.
///
/// For system 2 the ε in `params` must already be calibrated; system 1
/// ignores it and runs the family at ε = 1.
pub fn solve_t0(
    system: SystemKind,
    params: &VortexParams,
    section: &SectionData,
    cfg: &SolverConfig,
) -> Result<MetricState, SolveError> {
    let eps = match system {
        SystemKind::Sys1 => 1.0,
        SystemKind::Sys2 => params.epsilon,
    };
    let grid = section.grid();
    let mut psi = ScalarField::constant(grid, 1.0 / (2.0 * params.k1() * eps));
    let mut s = 0.0;
    let mut ds = cfg.ds0;

    while s < 1.0 {
        let s_next = (s + ds).min(1.0);
        match corrector(psi.clone(), section, params, s_next, eps, cfg) {
            Ok((next, _)) => {
                psi = next;
                s = s_next;
                ds = (ds * 2.0).min(cfg.ds0);
            }
            Err(e @ SolveError::NoConvergence { .. }) => {
                ds *= 0.5;
                if ds < DS_MIN {
                    return Err(e);
                }
            }
            Err(e) => return Err(e),
        }
    }

    let mut f0 = psi.clone();
    f0.scale(-0.5);
    Ok(MetricState::new(f0, psi, section)?)
}
