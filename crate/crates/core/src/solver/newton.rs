//! Damped Newton corrector, generic over the state vector.
//!
//! The caller supplies two closures: the residual sup-norm at a state and
//! the Newton increment δ with J·δ = −R. Damping starts at the configured
//! value, halves on residual increase down to 2⁻⁸, and a step that cannot
//! improve the residual ends the solve: success if the state already sits
//! under the acceptance tolerance (roundoff floor), failure otherwise.

use super::SolveError;

/// Minimal damping factor tried before declaring a step unproductive.
pub const MIN_DAMPING: f64 = 1.0 / 256.0;

pub trait NewtonVector: Clone {
    /// self += a·other.
    fn axpy(&mut self, a: f64, other: &Self);
}

impl NewtonVector for f64 {
    fn axpy(&mut self, a: f64, other: &Self) {
        *self += a * other;
    }
}

impl NewtonVector for crate::geometry::ScalarField {
    fn axpy(&mut self, a: f64, other: &Self) {
        crate::geometry::ScalarField::axpy(self, a, other);
    }
}

impl NewtonVector for (crate::geometry::ScalarField, crate::geometry::ScalarField) {
    fn axpy(&mut self, a: f64, other: &Self) {
        self.0.axpy(a, &other.0);
        self.1.axpy(a, &other.1);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonReport {
    pub iterations: usize,
    pub final_residual: f64,
    /// Last observed ‖R₊‖/‖R‖² over a full-damping step; the quadratic
    /// convergence certificate. Zero when no full step was taken.
    pub kappa: f64,
    /// Smallest damping factor that was accepted.
    pub min_damping_used: f64,
}

#[derive(Debug)]
pub struct NewtonOutcome<X> {
    pub x: X,
    pub report: NewtonReport,
}

/// Drives x from `x0` until the residual sup-norm is at most `target`, or
/// accepts a roundoff-floor stall anywhere at or under `accept`.
///
/// `target ≤ accept` is the intended calling pattern: the corrector aims
/// lower than the acceptance contract so downstream integral-form checks
/// hold with slack.
pub fn newton<X: NewtonVector>(
    x0: X,
    target: f64,
    accept: f64,
    max_iter: usize,
    damping0: f64,
    mut residual_norm: impl FnMut(&X) -> Result<f64, SolveError>,
    mut step: impl FnMut(&X) -> Result<X, SolveError>,
) -> Result<NewtonOutcome<X>, SolveError> {
    debug_assert!(target <= accept);
    let mut x = x0;
    let mut r_norm = residual_norm(&x)?;
    let mut kappa = 0.0;
    let mut min_damping_used = damping0;

    for it in 0..max_iter {
        if r_norm <= target {
            return Ok(NewtonOutcome {
                x,
                report: NewtonReport {
                    iterations: it,
                    final_residual: r_norm,
                    kappa,
                    min_damping_used,
                },
            });
        }
        let delta = step(&x)?;
        let mut lam = damping0;
        let mut accepted = false;
        while lam >= MIN_DAMPING {
            let mut trial = x.clone();
            trial.axpy(lam, &delta);
            let trial_norm = residual_norm(&trial)?;
            if trial_norm < r_norm {
                if lam == damping0 && r_norm > 0.0 {
                    kappa = trial_norm / (r_norm * r_norm);
                }
                min_damping_used = min_damping_used.min(lam);
                x = trial;
                r_norm = trial_norm;
                accepted = true;
                break;
            }
            lam *= 0.5;
        }
        if !accepted {
            // No damping improves: either the roundoff floor or divergence.
            if r_norm <= accept {
                return Ok(NewtonOutcome {
                    x,
                    report: NewtonReport {
                        iterations: it + 1,
                        final_residual: r_norm,
                        kappa,
                        min_damping_used,
                    },
                });
            }
            return Err(SolveError::NoConvergence {
                residual: r_norm,
                tol: target,
                iters: it + 1,
            });
        }
    }

    if r_norm <= accept {
        Ok(NewtonOutcome {
            x,
            report: NewtonReport {
                iterations: max_iter,
                final_residual: r_norm,
                kappa,
                min_damping_used,
            },
        })
    } else {
        Err(SolveError::NoConvergence {
            residual: r_norm,
            tol: target,
            iters: max_iter,
        })
    }
}
