//! Fourier-side Laplacian, Poisson inverse, and Green convolution.
//!
//! With ω = 2π·deg·dx∧dy the geometric Laplacian is Δ = Δ_euc / (4π·deg), so
//! the plane wave e^{2πi(px+qy)} is an eigenfunction with eigenvalue
//! −π(p²+q²)/deg. All three operators act through the full 2d FFT; plans are
//! cached per grid size and shared across threads.

use super::grid::{ScalarField, TorusGrid};
use super::GeometryError;
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Default bound on |ω-mean(rhs)| accepted by `poisson_solve`.
pub const DEFAULT_COMPAT_TOL: f64 = 1e-8;

struct FftPair {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn plans_for(n: usize) -> Arc<FftPair> {
    static PLANS: OnceLock<Mutex<HashMap<usize, Arc<FftPair>>>> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(FftPair {
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

/// Signed integer frequency for DFT bin p of an n-point transform.
fn freq(n: usize, p: usize) -> i64 {
    if p <= n / 2 {
        p as i64
    } else {
        p as i64 - n as i64
    }
}

fn transpose(n: usize, data: &mut [Complex<f64>]) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

fn fft2(n: usize, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex<f64>]) {
    // rows, transpose, rows, transpose: both axes transformed, layout kept.
    for row in data.chunks_exact_mut(n) {
        plan.process(row);
    }
    transpose(n, data);
    for row in data.chunks_exact_mut(n) {
        plan.process(row);
    }
    transpose(n, data);
}

/// Unnormalized forward transform; bin [p*n+q] pairs with e^{-2πi(pi+qj)/n}.
fn forward(u: &ScalarField) -> Vec<Complex<f64>> {
    let n = u.grid().n();
    let plans = plans_for(n);
    let mut data: Vec<Complex<f64>> = u.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2(n, &plans.fwd, &mut data);
    data
}

/// Inverse of `forward` (applies the 1/n² normalization), real part only.
fn inverse_real(grid: TorusGrid, mut data: Vec<Complex<f64>>) -> ScalarField {
    let n = grid.n();
    let plans = plans_for(n);
    fft2(n, &plans.inv, &mut data);
    let scale = 1.0 / (n * n) as f64;
    ScalarField::from_values(grid, data.iter().map(|c| c.re * scale).collect())
}

/// Eigenvalue of the geometric Laplacian on the (p, q) Fourier bin.
fn eigenvalue(grid: TorusGrid, p: usize, q: usize) -> f64 {
    let n = grid.n();
    let fp = freq(n, p) as f64;
    let fq = freq(n, q) as f64;
    -PI * (fp * fp + fq * fq) / f64::from(grid.deg())
}

/// Geometric Laplacian Δu = Δ_euc u / (4π·deg), exact on resolved modes.
///
/// The output has mean zero up to roundoff: the constant mode maps to zero.
pub fn laplacian(u: &ScalarField) -> ScalarField {
    let grid = u.grid();
    let n = grid.n();
    let mut spec = forward(u);
    for p in 0..n {
        for q in 0..n {
            spec[p * n + q] *= eigenvalue(grid, p, q);
        }
    }
    inverse_real(grid, spec)
}

/// Solves Δu = rhs − mean(rhs) with the requested mean on u.
///
/// Errors with `Compatibility` when |ω-mean(rhs)| exceeds `compat_tol`; the
/// removed mean is never silently large.
pub fn poisson_solve(
    rhs: &ScalarField,
    target_mean: f64,
    compat_tol: f64,
) -> Result<ScalarField, GeometryError> {
    let mean = rhs.mean();
    if mean.abs() > compat_tol {
        return Err(GeometryError::Compatibility {
            mean,
            tol: compat_tol,
        });
    }
    let grid = rhs.grid();
    let n = grid.n();
    let mut spec = forward(rhs);
    for p in 0..n {
        for q in 0..n {
            let k = p * n + q;
            if k == 0 {
                // DC bin of the result carries the requested mean.
                spec[0] = Complex::new(target_mean * (n * n) as f64, 0.0);
            } else {
                spec[k] /= eigenvalue(grid, p, q);
            }
        }
    }
    Ok(inverse_real(grid, spec))
}

/// Solves (c_lap·Δ + c_zero)·u = rhs exactly on the grid modes.
///
/// The symbol c_lap·λ + c_zero must stay away from zero on every mode; with
/// c_lap > 0 and c_zero < 0 that holds automatically (λ ≤ 0). Panics on a
/// (near-)vanishing symbol: callers pick the constants, so that is a bug,
/// not data.
pub fn helmholtz_solve(rhs: &ScalarField, c_lap: f64, c_zero: f64) -> ScalarField {
    let grid = rhs.grid();
    let n = grid.n();
    let mut spec = forward(rhs);
    for p in 0..n {
        for q in 0..n {
            let sym = c_lap * eigenvalue(grid, p, q) + c_zero;
            assert!(
                sym.abs() > 1e-300,
                "vanishing symbol at mode ({p},{q}): c_lap={c_lap}, c_zero={c_zero}"
            );
            spec[p * n + q] /= sym;
        }
    }
    inverse_real(grid, spec)
}

/// Nodal samples of the mean-zero Green kernel g(x) with Δ(g∗·) = id − mean.
///
/// Fourier series g(x) = Σ_{f≠0} −1/(2π²|f|²) · e^{2πif·x}; independent of
/// the bundle degree because the 2π·deg of the ω-weight cancels against the
/// degree in the Laplacian eigenvalue.
fn green_kernel(n: usize) -> Arc<Vec<f64>> {
    static KERNELS: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = KERNELS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry(n)
        .or_insert_with(|| {
            let plans = plans_for(n);
            let mut spec = vec![Complex::new(0.0, 0.0); n * n];
            for p in 0..n {
                for q in 0..n {
                    if p == 0 && q == 0 {
                        continue;
                    }
                    let fp = freq(n, p) as f64;
                    let fq = freq(n, q) as f64;
                    let coeff = -1.0 / (2.0 * PI * PI * (fp * fp + fq * fq));
                    spec[p * n + q] = Complex::new(coeff, 0.0);
                }
            }
            // Unnormalized inverse evaluates the Fourier series at the nodes.
            fft2(n, &plans.inv, &mut spec);
            Arc::new(spec.iter().map(|c| c.re).collect())
        })
        .clone()
}

/// f(x) = ∫ G(x, y)·rhs(y) ω(y) by direct cyclic convolution with the
/// mean-zero Green kernel. Deliberately not routed through `poisson_solve`:
/// the O(n⁴) quadrature is the independent second route for Δf = rhs − mean.
pub fn green_solve(rhs: &ScalarField) -> ScalarField {
    let grid = rhs.grid();
    let n = grid.n();
    let kernel = green_kernel(n);
    let w = grid.cell_weight();
    let r = rhs.values();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for a in 0..n {
                let di = (i + n - a) % n;
                let row = &kernel[di * n..di * n + n];
                let rrow = &r[a * n..a * n + n];
                for b in 0..n {
                    let dj = (j + n - b) % n;
                    acc += row[dj] * rrow[b];
                }
            }
            out[i * n + j] = acc * w;
        }
    }
    ScalarField::from_values(grid, out)
}
