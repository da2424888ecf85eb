//! Oracles shared by the integration suites. Everything here recomputes
//! library quantities by a deliberately different route: the raw Fourier
//! series instead of the completed square, stencil derivatives instead of
//! spectral ones, dense LU instead of pointwise/Krylov solves.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use vortexpath::geometry::{laplacian, poisson_solve, ScalarField, SectionData};
use vortexpath::linearize::{assemble_dense, linearize, LinearOperator, SystemTag};
use vortexpath::model::{residual_sys1_f, residual_sys2, MetricState, RhsData, VortexParams};

const PI: f64 = std::f64::consts::PI;

/// |θ(x+iy)|² e^{−2πy²} summed as the plain series Σ e^{−πm²} e^{2πimz},
/// weight applied once at the end. Terms stay below e^{π} for y ∈ [−1, 2),
/// and m = ±12 puts the tail far under 1e-15.
pub fn theta_sq_raw(x: f64, y: f64) -> f64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for m in -12i64..=12 {
        let m = m as f64;
        let mag = (-PI * m * m - 2.0 * PI * m * y).exp();
        let (s, c) = (2.0 * PI * m * x).sin_cos();
        re += mag * c;
        im += mag * s;
    }
    (re * re + im * im) * (-2.0 * PI * y * y).exp()
}

/// Sixth-order centered stencil for the euclidean Laplacian at node (i, j),
/// periodic wrap, spacing 1/n. Exact to O(h⁶) for smooth fields.
pub fn stencil_lap_euc(u: &ScalarField, i: usize, j: usize) -> f64 {
    const C: [f64; 4] = [-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0];
    let grid = u.grid();
    let n = grid.n() as isize;
    let (i, j) = (i as isize, j as isize);
    let at = |a: isize, b: isize| u.values()[grid.idx(a.rem_euclid(n), b.rem_euclid(n))];
    let mut acc = 2.0 * C[0] * at(i, j);
    for (k, &c) in C.iter().enumerate().skip(1) {
        let k = k as isize;
        acc += c * (at(i + k, j) + at(i - k, j) + at(i, j + k) + at(i, j - k));
    }
    let h = grid.h();
    acc / (h * h)
}

/// Shortest periodic distance between torus points.
pub fn torus_dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    let wrap = |d: f64| {
        let d = (d - d.floor()).abs();
        d.min(1.0 - d)
    };
    let dx = wrap(a.0 - b.0);
    let dy = wrap(a.1 - b.1);
    (dx * dx + dy * dy).sqrt()
}

pub fn sup_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    a.sub(b).sup_norm()
}

fn mean_removed(u: &ScalarField) -> ScalarField {
    let mut v = u.clone();
    v.add_scalar(-u.mean());
    v
}

/// One dense Newton update for the scalar f-equation: solve the bordered
/// system [A, −W·1; mean, 0]·[δf; κ] = [−R; 0] by LU, where A is the
/// assembled operator and the κ column absorbs the one-dimensional
/// incompatibility exactly as the solver's mean projection does.
fn dense_step_sys1_f(
    state: &MetricState,
    params: &VortexParams,
    rhs: &RhsData,
    section: &SectionData,
) -> MetricState {
    let grid = state.grid();
    let nn = grid.node_count();
    let op = linearize(state, params, SystemTag::Sys1F);
    let a = assemble_dense(&op).expect("n within dense limit");
    let w = op.scalar_parts().expect("scalar tag").lap.clone();
    let r = residual_sys1_f(state, params, rhs);

    let mut m = DMatrix::<f64>::zeros(nn + 1, nn + 1);
    m.view_mut((0, 0), (nn, nn)).copy_from(&a);
    for k in 0..nn {
        m[(k, nn)] = -w.values()[k];
        m[(nn, k)] = 1.0 / nn as f64;
    }
    let mut b = DVector::<f64>::zeros(nn + 1);
    for k in 0..nn {
        b[k] = -r.values()[k];
    }
    let sol = m.lu().solve(&b).expect("bordered system is regular");
    let df = ScalarField::from_values(grid, sol.as_slice()[..nn].to_vec());
    let f = state.f().add(&df);
    MetricState::new(f, state.psi().clone(), section).unwrap()
}

/// One dense Newton update for the coupled system, same bordering in the
/// Δδf direction: column [w_f; d] takes the projected mean, final row pins
/// mean δf = 0.
fn dense_step_sys2(
    state: &MetricState,
    params: &VortexParams,
    rhs: &RhsData,
    section: &SectionData,
) -> MetricState {
    let grid = state.grid();
    let nn = grid.node_count();
    let op = linearize(state, params, SystemTag::Sys2Coupled);
    let a = assemble_dense(&op).expect("n within dense limit");
    let parts = op.coupled_parts().expect("coupled tag");
    let (rf, rp) = residual_sys2(state, params, rhs);

    let dim = 2 * nn;
    let mut m = DMatrix::<f64>::zeros(dim + 1, dim + 1);
    m.view_mut((0, 0), (dim, dim)).copy_from(&a);
    for k in 0..nn {
        m[(k, dim)] = -parts.wf.values()[k];
        m[(nn + k, dim)] = -parts.d.values()[k];
        m[(dim, k)] = 1.0 / nn as f64;
    }
    let mut b = DVector::<f64>::zeros(dim + 1);
    for k in 0..nn {
        b[k] = -rf.values()[k];
        b[nn + k] = -rp.values()[k];
    }
    let sol = m.lu().solve(&b).expect("bordered system is regular");
    let df = ScalarField::from_values(grid, sol.as_slice()[..nn].to_vec());
    let dpsi = ScalarField::from_values(grid, sol.as_slice()[nn..dim].to_vec());
    let f = state.f().add(&df);
    let psi = state.psi().add(&dpsi);
    MetricState::new(f, psi, section).unwrap()
}

/// Full-step dense Newton. Runs until the residual drops below `tol` or
/// stops improving (the evaluation floor of the residual products, a few
/// hundred ulps at typical coefficient magnitudes). A stagnated residual
/// above 1e-10 is treated as failure to converge.
pub fn dense_newton(
    system_f_only: bool,
    start: MetricState,
    params: &VortexParams,
    rhs: &RhsData,
    section: &SectionData,
    tol: f64,
) -> MetricState {
    let mut state = start;
    let mut prev = f64::INFINITY;
    for iter in 0..40 {
        let res = if system_f_only {
            residual_sys1_f(&state, params, rhs).sup_norm()
        } else {
            let (rf, rp) = residual_sys2(&state, params, rhs);
            rf.sup_norm().max(rp.sup_norm())
        };
        if res <= tol {
            return state;
        }
        if iter >= 4 && res > 0.25 * prev {
            assert!(
                res <= 1e-10,
                "dense newton stagnated at {res:.3e}, above the 1e-10 floor"
            );
            return state;
        }
        prev = res;
        state = if system_f_only {
            dense_step_sys1_f(&state, params, rhs, section)
        } else {
            dense_step_sys2(&state, params, rhs, section)
        };
    }
    panic!("dense newton did not reach {tol:.1e}");
}

/// Smallest singular value of the dense coupled operator restricted to the
/// complement of its constant-in-f null direction (appended unit row).
pub fn restricted_sigma_min(op: &LinearOperator) -> f64 {
    let a = assemble_dense(op).expect("n within dense limit");
    let nn = op.grid().node_count();
    let dim = a.nrows();
    let mut m = DMatrix::<f64>::zeros(dim + 1, dim);
    m.view_mut((0, 0), (dim, dim)).copy_from(&a);
    let unit = 1.0 / (nn as f64).sqrt();
    for k in 0..nn {
        m[(dim, k)] = unit;
    }
    m.svd(false, false)
        .singular_values
        .as_slice()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// f recovered from a mean-zero Laplacian by the library's Poisson solve;
/// thin wrapper so suites don't repeat the compat plumbing.
pub fn potential_of(lap: &ScalarField) -> ScalarField {
    poisson_solve(&mean_removed(lap), 0.0, 1e-8).expect("mean removed")
}

/// Sup-norm residual of the stencil Laplacian against the spectral one on a
/// smooth field; used to certify the stencil itself before it judges the
/// library.
pub fn stencil_vs_spectral(u: &ScalarField) -> f64 {
    let grid = u.grid();
    let spectral = laplacian(u);
    let scale = 4.0 * PI * f64::from(grid.deg());
    let mut worst = 0.0f64;
    for i in 0..grid.n() {
        for j in 0..grid.n() {
            let s = stencil_lap_euc(u, i, j) / scale;
            worst = worst.max((s - spectral.get(i, j)).abs());
        }
    }
    worst
}
