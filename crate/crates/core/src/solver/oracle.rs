//! Independent endpoint validation: at fixed ψ, the determinant equation is
//! a per-node quadratic in u = Δf. Solving it nodewise needs no PDE solve at
//! all, and the ω-mean of the root field must vanish exactly when a genuine
//! potential f with Δf = u exists. The path solver never sees this code.

use crate::geometry::{laplacian, ScalarField, SectionData};
use crate::model::{grad_term, phi_g2, RhsData, VortexParams};
use crate::solver::SolveError;

/// Larger root of p·u² + b·u + c = 0; `None` when the discriminant is
/// negative. The larger root is the one on the branch where the factor pair
/// stays positive.
fn larger_root(p: f64, b: f64, c: f64) -> Option<f64> {
    let disc = b * b - 4.0 * p * c;
    if disc < 0.0 {
        return None;
    }
    Some((-b + disc.sqrt()) / (2.0 * p))
}

/// Per-node branch root u(x) of the determinant equation at fixed ψ.
///
/// The caller inspects the ω-mean of the result: a genuine solution f has
/// ∫Δf ω = 0, so a far-from-zero mean falsifies the endpoint.
pub fn pointwise_root_oracle(
    psi: &ScalarField,
    section: &SectionData,
    params: &VortexParams,
    rhs: &RhsData,
) -> Result<ScalarField, SolveError> {
    let grid = psi.grid();
    let r1 = f64::from(params.r1);
    let r2 = f64::from(params.r2);
    let shift = params.shift();
    let sk1 = shift * params.k1();
    let sk2 = shift * params.k2();

    let m = phi_g2(psi, section);
    let g = grad_term(psi, section)?;
    let lap_psi = laplacian(psi);

    let mut out = ScalarField::zeros(grid);
    for k in 0..grid.node_count() {
        let mv = m.values()[k];
        let gv = g.values()[k];
        let lp = lap_psi.values()[k];
        let a0 = rhs.a0().values()[k];

        let c1 = 2.0 * r2 + mv + sk2;
        let c2 = (2.0 * r2 + 2.0) - mv + sk2;
        // c1·(u + r1 + σk1)·((u + lp + r1 + 1 + σk1)·c2 + g) = a0, as a
        // quadratic p·u² + b·u + (c − a0).
        let p = c1 * c2;
        let b = c1 * (c2 * (lp + 2.0 * (r1 + sk1) + 1.0) + gv);
        let c = c1 * (r1 + sk1) * ((lp + r1 + 1.0 + sk1) * c2 + gv);
        match larger_root(p, b, c - a0) {
            Some(u) => out.values_mut()[k] = u,
            None => {
                return Err(SolveError::NoRealRoot {
                    node: k,
                    discriminant: b * b - 4.0 * p * (c - a0),
                })
            }
        }
    }
    Ok(out)
}
