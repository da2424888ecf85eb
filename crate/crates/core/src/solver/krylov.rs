//! Hand-rolled Krylov solvers sized for this crate's operators.
//!
//! The scalar ψ-correctors are symmetric negative definite, so CG runs on
//! the negated system. The reduced coupled corrector is non-symmetric and
//! goes through restarted GMRES. Both take a preconditioner closure; the
//! callers build it from the constant-coefficient spectral inverse, which
//! keeps iteration counts in the tens even at n = 128.

use super::SolveError;

/// Iteration count and final relative residual of a linear solve.
#[derive(Clone, Copy, Debug)]
pub struct KrylovStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned conjugate gradients for SPD `apply`.
///
/// `precond` must be SPD as well; identity is always safe. Stagnation over a
/// window of iterations raises `SingularJacobian` with `context`.
pub fn cg_solve(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
    context: &'static str,
) -> Result<(Vec<f64>, KrylovStats), SolveError> {
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            KrylovStats {
                iterations: 0,
                rel_residual: 0.0,
            },
        ));
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;

    for it in 0..max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // Not SPD on this subspace: the operator the caller promised is
            // broken, which surfaces as a singular-Jacobian failure.
            return Err(SolveError::SingularJacobian {
                context,
                rel_residual: norm(&r) / b_norm,
            });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rel = norm(&r) / b_norm;
        if rel <= rel_tol {
            return Ok((
                x,
                KrylovStats {
                    iterations: it + 1,
                    rel_residual: rel,
                },
            ));
        }
        if rel < best * 0.999 {
            best = rel;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 50 {
                return Err(SolveError::SingularJacobian {
                    context,
                    rel_residual: rel,
                });
            }
        }
        z = precond(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(SolveError::SingularJacobian {
        context,
        rel_residual: norm(&r) / b_norm,
    })
}

/// Left-preconditioned restarted GMRES.
///
/// Solves apply(x) = b by iterating on precond∘apply; the convergence test
/// runs on the preconditioned residual, with a final unpreconditioned
/// residual reported in the stats.
pub fn gmres_solve(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rel_tol: f64,
    restart: usize,
    max_iter: usize,
    context: &'static str,
) -> Result<(Vec<f64>, KrylovStats), SolveError> {
    let n = b.len();
    let pb = precond(b);
    let pb_norm = norm(&pb);
    if pb_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            KrylovStats {
                iterations: 0,
                rel_residual: 0.0,
            },
        ));
    }
    let mut x = vec![0.0; n];
    let mut total_iters = 0usize;
    let mut last_rel = f64::INFINITY;
    let mut prev_cycle_rel = f64::INFINITY;

    while total_iters < max_iter {
        // r = precond(b − apply(x))
        let ax = apply(&x);
        let raw: Vec<f64> = b.iter().zip(&ax).map(|(bv, av)| bv - av).collect();
        let r = precond(&raw);
        let beta = norm(&r);
        last_rel = beta / pb_norm;
        if last_rel <= rel_tol {
            break;
        }
        if last_rel > prev_cycle_rel * 0.9999 && total_iters > 0 {
            return Err(SolveError::SingularJacobian {
                context,
                rel_residual: last_rel,
            });
        }
        prev_cycle_rel = last_rel;

        let m = restart.min(max_iter - total_iters);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // Hessenberg in column-major (h[j] holds column j, length j+2).
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs = Vec::with_capacity(m);
        let mut sn = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut inner = 0usize;

        for j in 0..m {
            let w_raw = apply(&basis[j]);
            let mut w = precond(&w_raw);
            let mut col = vec![0.0; j + 2];
            for (i, q) in basis.iter().enumerate() {
                let hij = dot(&w, q);
                col[i] = hij;
                for k in 0..n {
                    w[k] -= hij * q[k];
                }
            }
            // One re-orthogonalization pass keeps the basis clean at tight
            // tolerances.
            for (i, q) in basis.iter().enumerate() {
                let corr = dot(&w, q);
                col[i] += corr;
                for k in 0..n {
                    w[k] -= corr * q[k];
                }
            }
            let wnorm = norm(&w);
            col[j + 1] = wnorm;

            // Apply accumulated Givens rotations to the new column.
            for i in 0..j {
                let (c, s): (f64, f64) = (cs[i], sn[i]);
                let tmp = c * col[i] + s * col[i + 1];
                col[i + 1] = -s * col[i] + c * col[i + 1];
                col[i] = tmp;
            }
            let denom = (col[j] * col[j] + col[j + 1] * col[j + 1]).sqrt();
            let (c, s) = if denom == 0.0 {
                (1.0, 0.0)
            } else {
                (col[j] / denom, col[j + 1] / denom)
            };
            cs.push(c);
            sn.push(s);
            col[j] = denom;
            col[j + 1] = 0.0;
            let tmp = c * g[j];
            g[j + 1] = -s * g[j];
            g[j] = tmp;
            h.push(col);
            inner = j + 1;

            let rel = g[j + 1].abs() / pb_norm;
            if rel <= rel_tol || wnorm == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wnorm).collect());
        }

        // Back-substitute y from the triangularized Hessenberg. A vanishing
        // pivot means the operator is singular on this Krylov space; leave
        // that component at zero and let the stagnation check surface it.
        let mut y = vec![0.0; inner];
        for i in (0..inner).rev() {
            let mut s = g[i];
            for j in (i + 1)..inner {
                s -= h[j][i] * y[j];
            }
            y[i] = if h[i][i].abs() > 1e-300 { s / h[i][i] } else { 0.0 };
        }
        for (j, yj) in y.iter().enumerate() {
            for k in 0..n {
                x[k] += yj * basis[j][k];
            }
        }
        total_iters += inner;
        if inner == 0 {
            break;
        }
    }

    // Final check on the true (unpreconditioned-direction) residual.
    let ax = apply(&x);
    let raw: Vec<f64> = b.iter().zip(&ax).map(|(bv, av)| bv - av).collect();
    let rel = norm(&precond(&raw)) / pb_norm;
    if rel <= rel_tol * 10.0 {
        Ok((
            x,
            KrylovStats {
                iterations: total_iters,
                rel_residual: rel,
            },
        ))
    } else {
        Err(SolveError::SingularJacobian {
            context,
            rel_residual: rel.min(last_rel),
        })
    }
}
