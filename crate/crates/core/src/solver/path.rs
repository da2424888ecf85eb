//! Continuity path in t with adaptive step control and monitored acceptance.
//!
//! Both systems share the driver on the pair (f, ψ): system 1 freezes ψ at
//! the seed (its ψ-equation has no t in it) and corrects f alone; system 2
//! corrects the pair through the reduced one-equation elimination. A trial
//! step is accepted only when the corrector converged and every monitored
//! bound holds. Failures halve dt; hitting the floor converts the last
//! rejection reason into the structured path error.

use crate::geometry::{laplacian, poisson_solve, helmholtz_solve, ScalarField, SectionData};
use crate::linearize::{linearize, SystemTag};
use crate::model::{
    residual_sys1_f, residual_sys1_psi, residual_sys2, MetricState, RhsData, SystemKind,
    VortexParams,
};
use crate::monitor::{check_bounds, uniformity_check, BoundsReport, UniformityReport};
use crate::solver::{gmres_solve, newton, NewtonReport, SolveError, SolverConfig};
use std::cell::Cell;
use std::time::Instant;

/// One accepted state on the path.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub newton_iters: usize,
    pub residual_f: f64,
    pub residual_psi: f64,
    /// Quadratic-convergence certificate from the corrector.
    pub kappa: f64,
    /// |ω-mean| of the Δδf right side before projection at the last Newton
    /// step: the discrete compatibility signal for ∫Δf ω = 0.
    pub compat_defect: f64,
    /// Wall-clock seconds of the accepted attempt. The only
    /// non-deterministic field in the whole trace.
    pub seconds: f64,
    pub report: BoundsReport,
}

/// State captured at the first accepted step at or past a requested time.
#[derive(Clone, Debug)]
pub struct Snapshot {
    /// The time the caller asked for.
    pub requested: f64,
    /// The accepted time actually stored (≥ requested).
    pub t: f64,
    pub state: MetricState,
}

/// Full audit of one continuity run that reached t = 1.
#[derive(Clone, Debug)]
pub struct PathTrace {
    pub system: SystemKind,
    pub alpha: f64,
    pub epsilon: f64,
    pub steps: Vec<StepRecord>,
    pub final_state: MetricState,
    pub snapshots: Vec<Snapshot>,
    pub uniformity_psi: UniformityReport,
    pub uniformity_f: UniformityReport,
}

impl PathTrace {
    pub fn final_t(&self) -> f64 {
        self.steps.last().map(|s| s.t).unwrap_or(0.0)
    }
}

enum Reject {
    Solve,
    Branch { margin: f64 },
    Ellipticity { min_det: f64 },
    Bounds,
}

enum StepFail {
    Fatal(SolveError),
    Retry(Reject),
}

struct Accepted {
    x: (ScalarField, ScalarField),
    state: MetricState,
    report: BoundsReport,
    newton: NewtonReport,
    defect: f64,
    residual_f: f64,
    residual_psi: f64,
}

fn residual_norms(
    state: &MetricState,
    params: &VortexParams,
    rhs: &RhsData,
    system: SystemKind,
) -> (f64, f64) {
    match system {
        SystemKind::Sys1 => (
            residual_sys1_f(state, params, rhs).sup_norm(),
            residual_sys1_psi(state, params).sup_norm(),
        ),
        SystemKind::Sys2 => {
            let (rf, rp) = residual_sys2(state, params, rhs);
            (rf.sup_norm(), rp.sup_norm())
        }
    }
}

/// Newton increment for system 1: pointwise division by the Δδf coefficient,
/// mean projection, Poisson solve. The pre-projection mean is the
/// compatibility defect.
fn sys1_increment(
    state: &MetricState,
    params: &VortexParams,
    rhs: &RhsData,
    cfg: &SolverConfig,
    defect_out: &Cell<f64>,
) -> Result<(ScalarField, ScalarField), SolveError> {
    let r = residual_sys1_f(state, params, rhs);
    let op = linearize(state, params, SystemTag::Sys1F);
    let a = &op.scalar_parts().expect("sys1_f is scalar").lap;
    let a_min = a.min();
    if a_min <= 1e-12 {
        return Err(SolveError::SingularJacobian {
            context: "sys1 pointwise coefficient vanished",
            rel_residual: a_min,
        });
    }
    let mut v = r.zip_with(a, |rv, av| -rv / av);
    let defect = v.mean();
    defect_out.set(defect.abs());
    v.add_scalar(-defect);
    let df = poisson_solve(&v, 0.0, cfg.compat_tol)?;
    Ok((df, ScalarField::zeros(state.grid())))
}

/// Newton increment for system 2 via the reduced elimination: the
/// ψ-equation row expresses Δδf through δψ, substitution leaves one
/// second-order equation for δψ (elliptic exactly when det(A) > 0), solved
/// by preconditioned GMRES; back-substitution recovers δf up to the mean
/// projection.
fn sys2_increment(
    state: &MetricState,
    params: &VortexParams,
    rhs: &RhsData,
    cfg: &SolverConfig,
    defect_out: &Cell<f64>,
) -> Result<(ScalarField, ScalarField), SolveError> {
    let grid = state.grid();
    let (r1, r2) = residual_sys2(state, params, rhs);
    let op = linearize(state, params, SystemTag::Sys2Coupled);
    let p = op.coupled_parts().expect("sys2 operator is coupled");

    let d_max = p.d.max();
    if d_max >= -1e-9 {
        return Err(SolveError::SingularJacobian {
            context: "sys2 elimination: section norm reached one",
            rel_residual: d_max,
        });
    }

    // Reduced equation M δψ = b with
    //   M = (wpsi − wf·w2/d)·Δ − ca·Δ(m·) + (z1 + wf·z2/d),
    //   b = −R₁ + (wf/d)·R₂.
    let n = grid.node_count();
    let mut lap_coeff = ScalarField::zeros(grid);
    let mut zeroth = ScalarField::zeros(grid);
    let mut b = ScalarField::zeros(grid);
    for k in 0..n {
        let wf = p.wf.values()[k];
        let d = p.d.values()[k];
        lap_coeff.values_mut()[k] = p.wpsi.values()[k] - wf * p.w2.values()[k] / d;
        zeroth.values_mut()[k] = p.z1.values()[k] + wf * p.z2.values()[k] / d;
        b.values_mut()[k] = -r1.values()[k] + wf / d * r2.values()[k];
    }
    // Principal symbol mean for the preconditioner; the zeroth mean is
    // clamped negative so the spectral inverse exists on every mode.
    let c_lap = lap_coeff
        .zip_with(&p.ca.mul(&p.m), |l, cm| l - cm)
        .mean();
    let c_zero = zeroth.mean().min(-1e-6);

    let apply = |v: &[f64]| -> Vec<f64> {
        let dpsi = ScalarField::from_values(grid, v.to_vec());
        let lap_dpsi = laplacian(&dpsi);
        let lap_mdpsi = laplacian(&p.m.mul(&dpsi));
        let mut out = vec![0.0; v.len()];
        for k in 0..v.len() {
            out[k] = lap_coeff.values()[k] * lap_dpsi.values()[k]
                - p.ca.values()[k] * lap_mdpsi.values()[k]
                + zeroth.values()[k] * v[k];
        }
        out
    };
    let precond = |v: &[f64]| -> Vec<f64> {
        let field = ScalarField::from_values(grid, v.to_vec());
        helmholtz_solve(&field, c_lap, c_zero).values().to_vec()
    };
    let (dpsi_flat, _) = gmres_solve(
        apply,
        precond,
        b.values(),
        1e-12,
        40,
        800,
        "sys2 reduced corrector",
    )?;
    let dpsi = ScalarField::from_values(grid, dpsi_flat);

    // Back-substitute Δδf = (−R₂ − w2·Δδψ + z2·δψ)/d, project, integrate.
    let lap_dpsi = laplacian(&dpsi);
    let mut v = ScalarField::zeros(grid);
    for k in 0..n {
        v.values_mut()[k] = (-r2.values()[k] - p.w2.values()[k] * lap_dpsi.values()[k]
            + p.z2.values()[k] * dpsi.values()[k])
            / p.d.values()[k];
    }
    let defect = v.mean();
    defect_out.set(defect.abs());
    v.add_scalar(-defect);
    let df = poisson_solve(&v, 0.0, cfg.compat_tol)?;
    Ok((df, dpsi))
}

#[allow(clippy::too_many_arguments)]
fn try_step(
    system: SystemKind,
    predictor: (ScalarField, ScalarField),
    params_t: &VortexParams,
    rhs: &RhsData,
    section: &SectionData,
    cfg: &SolverConfig,
    lap_psi_premise: Option<f64>,
) -> Result<Accepted, StepFail> {
    let defect_cell = Cell::new(0.0);
    let mk_state = |x: &(ScalarField, ScalarField)| -> Result<MetricState, SolveError> {
        Ok(MetricState::new(x.0.clone(), x.1.clone(), section)?)
    };

    let corrected = newton(
        predictor,
        cfg.corrector_tol(),
        cfg.newton_tol,
        cfg.max_newton,
        cfg.damping,
        |x| {
            let st = mk_state(x)?;
            let (rf, rp) = residual_norms(&st, params_t, rhs, system);
            Ok(match system {
                SystemKind::Sys1 => rf,
                SystemKind::Sys2 => rf.max(rp),
            })
        },
        |x| {
            let st = mk_state(x)?;
            match system {
                SystemKind::Sys1 => sys1_increment(&st, params_t, rhs, cfg, &defect_cell),
                SystemKind::Sys2 => sys2_increment(&st, params_t, rhs, cfg, &defect_cell),
            }
        },
    );

    let out = match corrected {
        Ok(out) => out,
        Err(
            SolveError::NoConvergence { .. }
            | SolveError::SingularJacobian { .. }
            | SolveError::Model(_),
        ) => return Err(StepFail::Retry(Reject::Solve)),
        Err(e) => return Err(StepFail::Fatal(e)),
    };

    let state = mk_state(&out.x).map_err(StepFail::Fatal)?;
    let report = check_bounds(&state, params_t, rhs, system, cfg.report_tol);

    if system == SystemKind::Sys2 {
        let observed = state.lap_psi().min();
        let assumed = lap_psi_premise.unwrap_or(f64::NEG_INFINITY);
        let eps_margin_ok = report.get("eps_margin").map(|c| c.pass).unwrap_or(true);
        if observed < assumed || !eps_margin_ok {
            return Err(StepFail::Fatal(SolveError::EpsilonTooSmall {
                observed,
                assumed: if assumed.is_finite() { assumed } else { -1.0 },
            }));
        }
    }

    if !report.all_pass() {
        let fail = report.first_failure().expect("failed report names a check");
        let reject = match fail.name {
            "branch" => Reject::Branch {
                margin: fail.margin,
            },
            "ellipticity" => Reject::Ellipticity {
                min_det: fail.measured,
            },
            _ => Reject::Bounds,
        };
        return Err(StepFail::Retry(reject));
    }

    let (residual_f, residual_psi) = residual_norms(&state, params_t, rhs, system);
    Ok(Accepted {
        x: (state.f().clone(), state.psi().clone()),
        state,
        report,
        newton: out.report,
        defect: defect_cell.get(),
        residual_f,
        residual_psi,
    })
}

/// Advances t from 0 to 1, recording every accepted state.
///
/// `lap_psi_premise` is the lower bound on Δψ the ε-calibration assumed
/// (system 2); observing anything below it aborts with `EpsilonTooSmall` so
/// the caller can recalibrate and restart. `snapshot_ts` lists times whose
/// state should be kept; each is satisfied by the first accepted step at or
/// past it (t = 0 by the seed, t = 1 by the endpoint).
pub fn continue_path(
    system: SystemKind,
    state0: &MetricState,
    params: &VortexParams,
    rhs: &RhsData,
    section: &SectionData,
    cfg: &SolverConfig,
    lap_psi_premise: Option<f64>,
    snapshot_ts: &[f64],
) -> Result<PathTrace, SolveError> {
    let p0 = params.at_t(0.0);
    let began = Instant::now();
    let report0 = check_bounds(state0, &p0, rhs, system, cfg.report_tol);
    if !report0.all_pass() {
        let fail = report0.first_failure().expect("failure is named");
        return Err(match fail.name {
            "branch" => SolveError::BranchLost {
                t: 0.0,
                margin: fail.margin,
            },
            "ellipticity" => SolveError::EllipticityLost {
                t: 0.0,
                min_det: fail.measured,
            },
            _ => SolveError::PathStuck { last_good_t: 0.0 },
        });
    }
    let (rf0, rp0) = residual_norms(state0, &p0, rhs, system);
    let mut steps = vec![StepRecord {
        t: 0.0,
        dt: 0.0,
        newton_iters: 0,
        residual_f: rf0,
        residual_psi: rp0,
        kappa: 0.0,
        compat_defect: 0.0,
        seconds: began.elapsed().as_secs_f64(),
        report: report0,
    }];

    let mut pending: Vec<f64> = snapshot_ts.iter().map(|t| t.clamp(0.0, 1.0)).collect();
    pending.sort_by(f64::total_cmp);
    pending.dedup();
    let mut snapshots = Vec::new();
    while pending.first().is_some_and(|&r| r <= 0.0) {
        snapshots.push(Snapshot {
            requested: pending.remove(0),
            t: 0.0,
            state: state0.clone(),
        });
    }

    let mut cur = (state0.f().clone(), state0.psi().clone());
    let mut cur_state = state0.clone();
    let mut prev: Option<((ScalarField, ScalarField), f64)> = None;
    let mut t = 0.0;
    let mut dt = cfg.dt0;

    while t < 1.0 - 1e-12 {
        let t_next = (t + dt).min(1.0);
        let params_t = params.at_t(t_next);
        let predictor = match (&prev, cfg.secant_predictor) {
            (Some((prev_x, prev_t)), true) if t > *prev_t => {
                let factor = (t_next - t) / (t - prev_t);
                let mut pred = cur.clone();
                let diff = (cur.0.sub(&prev_x.0), cur.1.sub(&prev_x.1));
                pred.0.axpy(factor, &diff.0);
                pred.1.axpy(factor, &diff.1);
                pred
            }
            _ => cur.clone(),
        };

        let attempt_began = Instant::now();
        match try_step(
            system,
            predictor,
            &params_t,
            rhs,
            section,
            cfg,
            lap_psi_premise,
        ) {
            Ok(acc) => {
                steps.push(StepRecord {
                    t: t_next,
                    dt,
                    newton_iters: acc.newton.iterations,
                    residual_f: acc.residual_f,
                    residual_psi: acc.residual_psi,
                    kappa: acc.newton.kappa,
                    compat_defect: acc.defect,
                    seconds: attempt_began.elapsed().as_secs_f64(),
                    report: acc.report,
                });
                prev = Some((cur, t));
                cur = acc.x;
                cur_state = acc.state;
                t = t_next;
                dt = (dt * 2.0).min(cfg.dt0);
                while pending.first().is_some_and(|&r| r <= t + 1e-12) {
                    snapshots.push(Snapshot {
                        requested: pending.remove(0),
                        t,
                        state: cur_state.clone(),
                    });
                }
            }
            Err(StepFail::Fatal(e)) => return Err(e),
            Err(StepFail::Retry(reason)) => {
                dt *= 0.5;
                if dt < cfg.dt_min {
                    return Err(match reason {
                        Reject::Branch { margin } => SolveError::BranchLost {
                            t: t_next,
                            margin,
                        },
                        Reject::Ellipticity { min_det } => SolveError::EllipticityLost {
                            t: t_next,
                            min_det,
                        },
                        Reject::Solve | Reject::Bounds => {
                            SolveError::PathStuck { last_good_t: t }
                        }
                    });
                }
            }
        }
    }

    let sup_psi: Vec<f64> = steps.iter().map(|s| s.report.sup_lap_psi).collect();
    let sup_f: Vec<f64> = steps.iter().map(|s| s.report.sup_lap_f).collect();
    Ok(PathTrace {
        system,
        alpha: params.alpha,
        epsilon: params.epsilon,
        steps,
        final_state: cur_state,
        snapshots,
        uniformity_psi: uniformity_check(&sup_psi),
        uniformity_f: uniformity_check(&sup_f),
    })
}
