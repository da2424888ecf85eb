//! t=0 seeding, damped Newton correctors, and the continuity paths in t.
//!
//! The driver advances t with a trivial predictor and a Newton corrector,
//! halving the step on any failure and regrowing it after acceptance. A step
//! is accepted only when Newton converged *and* every monitored bound holds;
//! a converged state outside the bounds counts as a wrong branch, not a
//! success. `PathStuck` is therefore a falsification signal, not a crash.

mod krylov;
mod newton;
mod oracle;
mod path;
mod t0;

pub use krylov::{cg_solve, gmres_solve, KrylovStats};
pub use newton::{newton, NewtonOutcome, NewtonReport};
pub use oracle::pointwise_root_oracle;
pub use path::{continue_path, PathTrace, Snapshot, StepRecord};
pub use t0::solve_t0;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("newton stalled at residual {residual:.3e} (tol {tol:.1e}) after {iters} iterations")]
    NoConvergence { residual: f64, tol: f64, iters: usize },
    #[error("linear solve stagnated in {context} at relative residual {rel_residual:.3e}")]
    SingularJacobian {
        context: &'static str,
        rel_residual: f64,
    },
    #[error("path stalled below the minimal step at t = {last_good_t:.6}")]
    PathStuck { last_good_t: f64 },
    #[error("branch margin {margin:.3e} at trial t = {t:.6}; positivity branch lost")]
    BranchLost { t: f64, margin: f64 },
    #[error("ellipticity lost at trial t = {t:.6}: min det(A) = {min_det:.3e}")]
    EllipticityLost { t: f64, min_det: f64 },
    #[error(
        "observed min Δψ = {observed:.4} undercuts the ε-calibration premise {assumed:.4}; \
         recalibrate and restart"
    )]
    EpsilonTooSmall { observed: f64, assumed: f64 },
    #[error("no real root at node {node}: discriminant {discriminant:.3e}")]
    NoRealRoot { node: usize, discriminant: f64 },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Tolerances and step-control knobs shared by every solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Sup-norm residual target for accepted states. The correctors aim two
    /// orders tighter (floor-limited) so integral-form checks at this level
    /// hold with slack.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Initial and maximal t-step.
    pub dt0: f64,
    /// Step-halving floor; undershooting it ends the path with `PathStuck`.
    pub dt_min: f64,
    /// Initial Newton damping; halved on residual increase, floor 2⁻⁸.
    pub damping: f64,
    /// Bound on the mean defect accepted when Poisson-solving Newton updates.
    pub compat_tol: f64,
    /// Invertibility floor for dense singular-value audits.
    pub sigma_min_tol: f64,
    /// Slack on monitor margins.
    pub report_tol: f64,
    /// Ladder cap for the automatic shift calibration.
    pub alpha_max: f64,
    /// Floor for the automatic ε calibration.
    pub eps_min: f64,
    /// Initial s-step for the t=0 seeding continuation.
    pub ds0: f64,
    /// Secant extrapolation in t instead of the trivial predictor.
    pub secant_predictor: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-10,
            max_newton: 30,
            dt0: 0.02,
            dt_min: 1e-4,
            damping: 1.0,
            compat_tol: 1e-8,
            sigma_min_tol: 1e-8,
            report_tol: 1e-9,
            alpha_max: 64.0,
            eps_min: 1.0,
            ds0: 0.25,
            secant_predictor: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("newton_tol", self.newton_tol),
            ("dt0", self.dt0),
            ("dt_min", self.dt_min),
            ("damping", self.damping),
            ("compat_tol", self.compat_tol),
            ("sigma_min_tol", self.sigma_min_tol),
            ("report_tol", self.report_tol),
            ("alpha_max", self.alpha_max),
            ("eps_min", self.eps_min),
            ("ds0", self.ds0),
        ];
        for (name, v) in positive {
            // NaN is rejected along with zero and negatives.
            if v.is_nan() || v <= 0.0 {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.max_newton == 0 {
            return Err("max_newton must be at least 1".into());
        }
        if self.dt_min > self.dt0 {
            return Err(format!(
                "dt_min ({}) must not exceed dt0 ({})",
                self.dt_min, self.dt0
            ));
        }
        Ok(())
    }

    /// Corrector target: two orders below `newton_tol`; the corrector also
    /// accepts floor stagnation anywhere under `newton_tol`.
    pub(crate) fn corrector_tol(&self) -> f64 {
        self.newton_tol * 1e-2
    }
}
