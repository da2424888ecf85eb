//! Analytic linearizations of the residuals, dense assembly for oracle-scale
//! grids, the ellipticity determinant, and finite-difference verification.
//!
//! ψ-perturbations act on m = e^{−ψ}|φ|² by δm = −m·δψ, and on the gradient
//! density by δg = Δ(δm) + (1+Δψ)δm + Δδψ·m. Pushing these through the
//! factored left side gives every operator below in closed form; no
//! derivative of the section itself is ever taken.

use crate::geometry::{laplacian, ScalarField, SectionData, TorusGrid};
use crate::model::{
    curvature_coeffs, residual_s_path, residual_sys1_f, residual_sys1_psi, residual_sys2,
    MetricState, RhsData, VortexParams,
};
use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("dense assembly is limited to n <= {MAX_DENSE_N}, got n = {n}")]
pub struct SizeError {
    pub n: usize,
}

/// Largest grid edge for which dense matrices are assembled.
pub const MAX_DENSE_N: usize = 24;

/// Which linearized residual an operator represents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SystemTag {
    /// System-1 ψ-equation: (2r2+1)Δδψ − (2r1+1)m·δψ − (2r1+1)(4r2+2)δψ.
    Sys1Psi,
    /// System-1 f-equation: A(x)·Δδf with A = c1(c2·S + g), S = 2Δf+Δψ+β(2r1+1).
    Sys1F,
    /// Both equations of system 2 in the pair (δf, δψ).
    Sys2Coupled,
    /// t=0 seeding family at parameter s and weight ε.
    SPath { s: f64, eps: f64 },
}

/// Scalar operators all share the shape u ↦ lap⊙Δu + zeroth⊙u.
#[derive(Clone, Debug)]
pub struct ScalarParts {
    pub lap: ScalarField,
    pub zeroth: ScalarField,
}

/// Coefficient fields of the coupled linearization, row by row:
///
///   eq1 = wf·Δδf + wpsi·Δδψ − ca·Δ(m·δψ) + z1·δψ
///   eq2 = d·Δδf + w2·Δδψ − z2·δψ
///
/// wf = c1(c2S+g), wpsi = c1a2(c2+m), ca = c1a2, d = 4(m−1),
/// w2 = 2(m−1)+β(4r2+2), z2 = 2Sm+Kε.
#[derive(Clone, Debug)]
pub struct CoupledParts {
    pub wf: ScalarField,
    pub wpsi: ScalarField,
    pub ca: ScalarField,
    pub m: ScalarField,
    pub z1: ScalarField,
    pub d: ScalarField,
    pub w2: ScalarField,
    pub z2: ScalarField,
}

enum OpKind {
    Scalar(ScalarParts),
    Coupled(CoupledParts),
}

/// Matrix-free linearized residual at a fixed state.
pub struct LinearOperator {
    grid: TorusGrid,
    tag: SystemTag,
    kind: OpKind,
}

impl LinearOperator {
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn tag(&self) -> SystemTag {
        self.tag
    }

    pub fn is_coupled(&self) -> bool {
        matches!(self.kind, OpKind::Coupled(_))
    }

    /// Flat dimension of the operator's domain (n² scalar, 2n² coupled).
    pub fn dim(&self) -> usize {
        let n2 = self.grid.node_count();
        if self.is_coupled() {
            2 * n2
        } else {
            n2
        }
    }

    pub fn scalar_parts(&self) -> Option<&ScalarParts> {
        match &self.kind {
            OpKind::Scalar(p) => Some(p),
            OpKind::Coupled(_) => None,
        }
    }

    pub fn coupled_parts(&self) -> Option<&CoupledParts> {
        match &self.kind {
            OpKind::Coupled(p) => Some(p),
            OpKind::Scalar(_) => None,
        }
    }

    /// Panics on coupled tags; use `apply_pair`.
    pub fn apply_scalar(&self, du: &ScalarField) -> ScalarField {
        match &self.kind {
            OpKind::Scalar(p) => {
                let lap_du = laplacian(du);
                let mut out = lap_du.mul(&p.lap);
                out.values_mut()
                    .iter_mut()
                    .zip(du.values())
                    .zip(p.zeroth.values())
                    .for_each(|((o, &u), &z)| *o += z * u);
                out
            }
            OpKind::Coupled(_) => panic!("scalar apply on coupled operator"),
        }
    }

    /// Panics on scalar tags; use `apply_scalar`.
    pub fn apply_pair(&self, df: &ScalarField, dpsi: &ScalarField) -> (ScalarField, ScalarField) {
        match &self.kind {
            OpKind::Coupled(p) => {
                let lap_df = laplacian(df);
                let lap_dpsi = laplacian(dpsi);
                let lap_mdpsi = laplacian(&p.m.mul(dpsi));
                let n = df.values().len();
                let mut eq1 = ScalarField::zeros(self.grid);
                let mut eq2 = ScalarField::zeros(self.grid);
                {
                    let v1 = eq1.values_mut();
                    let v2 = eq2.values_mut();
                    for k in 0..n {
                        let ldf = lap_df.values()[k];
                        let ldp = lap_dpsi.values()[k];
                        let lmd = lap_mdpsi.values()[k];
                        let dp = dpsi.values()[k];
                        v1[k] = p.wf.values()[k] * ldf + p.wpsi.values()[k] * ldp
                            - p.ca.values()[k] * lmd
                            + p.z1.values()[k] * dp;
                        v2[k] = p.d.values()[k] * ldf + p.w2.values()[k] * ldp
                            - p.z2.values()[k] * dp;
                    }
                }
                (eq1, eq2)
            }
            OpKind::Scalar(_) => panic!("pair apply on scalar operator"),
        }
    }

    /// Flat apply in the nodal basis; coupled vectors are [δf; δψ].
    pub fn apply_flat(&self, v: &[f64]) -> Vec<f64> {
        let n2 = self.grid.node_count();
        match &self.kind {
            OpKind::Scalar(_) => {
                assert_eq!(v.len(), n2);
                let du = ScalarField::from_values(self.grid, v.to_vec());
                self.apply_scalar(&du).values().to_vec()
            }
            OpKind::Coupled(_) => {
                assert_eq!(v.len(), 2 * n2);
                let df = ScalarField::from_values(self.grid, v[..n2].to_vec());
                let dpsi = ScalarField::from_values(self.grid, v[n2..].to_vec());
                let (e1, e2) = self.apply_pair(&df, &dpsi);
                let mut out = Vec::with_capacity(2 * n2);
                out.extend_from_slice(e1.values());
                out.extend_from_slice(e2.values());
                out
            }
        }
    }
}

/// Exact first-order operator of the tagged residual at `state`.
pub fn linearize(state: &MetricState, params: &VortexParams, tag: SystemTag) -> LinearOperator {
    let grid = state.grid();
    let kind = match tag {
        SystemTag::Sys1Psi => {
            let k1 = params.k1();
            let k1k2 = k1 * params.k2();
            let half_k2 = params.k2() / 2.0;
            OpKind::Scalar(ScalarParts {
                lap: ScalarField::constant(grid, half_k2),
                zeroth: state.phi_g2().map(|m| -k1 * m - k1k2),
            })
        }
        SystemTag::Sys1F => {
            let c = curvature_coeffs(state, params, params.shift());
            let beta_k1 = params.beta() * params.k1();
            let s_field = state
                .lap_f()
                .zip_with(state.lap_psi(), |lf, lp| 2.0 * lf + lp + beta_k1);
            let mut wf = ScalarField::zeros(grid);
            {
                let v = wf.values_mut();
                for k in 0..v.len() {
                    v[k] = c.c1.values()[k]
                        * (c.c2.values()[k] * s_field.values()[k] + c.g.values()[k]);
                }
            }
            OpKind::Scalar(ScalarParts {
                lap: wf,
                zeroth: ScalarField::zeros(grid),
            })
        }
        SystemTag::SPath { s, eps } => {
            let ratio = params.k1() / (params.k2() / 2.0);
            let zer = 2.0 * params.k1() * eps;
            OpKind::Scalar(ScalarParts {
                lap: ScalarField::constant(grid, 1.0),
                zeroth: state.phi_g2().map(|m| -s * ratio * m - zer),
            })
        }
        SystemTag::Sys2Coupled => OpKind::Coupled(coupled_parts(state, params)),
    };
    LinearOperator { grid, tag, kind }
}

fn coupled_parts(state: &MetricState, params: &VortexParams) -> CoupledParts {
    let c = curvature_coeffs(state, params, params.shift());
    let beta = params.beta();
    let beta_k1 = beta * params.k1();
    let beta_k2 = beta * params.k2();
    let keps = params.eps_weight() * params.epsilon;
    let n = state.grid().node_count();

    let mut wf = ScalarField::zeros(state.grid());
    let mut wpsi = ScalarField::zeros(state.grid());
    let mut ca = ScalarField::zeros(state.grid());
    let mut z1 = ScalarField::zeros(state.grid());
    let mut d = ScalarField::zeros(state.grid());
    let mut w2 = ScalarField::zeros(state.grid());
    let mut z2 = ScalarField::zeros(state.grid());

    for k in 0..n {
        let a1 = c.a1.values()[k];
        let c1 = c.c1.values()[k];
        let a2 = c.a2.values()[k];
        let c2 = c.c2.values()[k];
        let g = c.g.values()[k];
        let m = state.phi_g2().values()[k];
        let lf = state.lap_f().values()[k];
        let lp = state.lap_psi().values()[k];
        let s = 2.0 * lf + lp + beta_k1;

        wf.values_mut()[k] = c1 * (c2 * s + g);
        wpsi.values_mut()[k] = c1 * a2 * (c2 + m);
        ca.values_mut()[k] = c1 * a2;
        z1.values_mut()[k] = a2 * m * (a1 * c1 - a1 * c2 - (1.0 + lp) * c1 - g);
        d.values_mut()[k] = 4.0 * (m - 1.0);
        w2.values_mut()[k] = 2.0 * (m - 1.0) + beta_k2;
        z2.values_mut()[k] = 2.0 * s * m + keps;
    }

    CoupledParts {
        wf,
        wpsi,
        ca,
        m: state.phi_g2().clone(),
        z1,
        d,
        w2,
        z2,
    }
}

/// Nodal-basis matrix of `op`. Guarded by `MAX_DENSE_N`.
pub fn assemble_dense(op: &LinearOperator) -> Result<DMatrix<f64>, SizeError> {
    let n = op.grid().n();
    if n > MAX_DENSE_N {
        return Err(SizeError { n });
    }
    let dim = op.dim();
    let mut mat = DMatrix::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    for k in 0..dim {
        e[k] = 1.0;
        let col = op.apply_flat(&e);
        for (r, val) in col.iter().enumerate() {
            mat[(r, k)] = *val;
        }
        e[k] = 0.0;
    }
    Ok(mat)
}

/// Pointwise determinant of the 2×2 second-order symbol of the s-deformed
/// coupled system. The s=0 operator has constant coefficients; s=1 is the
/// true linearization. Positivity of this field is the ellipticity of the
/// reduced one-equation step.
pub fn ellipticity_check(state: &MetricState, params: &VortexParams, s: f64) -> ScalarField {
    let shift = params.shift();
    let r1 = f64::from(params.r1);
    let r2 = f64::from(params.r2);
    let sk1 = shift * params.k1();
    let sk2 = shift * params.k2();
    let beta_k1 = params.beta() * params.k1();
    let beta_k2 = params.beta() * params.k2();
    let n = state.grid().node_count();
    let mut det = ScalarField::zeros(state.grid());
    let v = det.values_mut();
    for k in 0..n {
        let m = s * state.phi_g2().values()[k];
        let lf = s * state.lap_f().values()[k];
        let lp = s * state.lap_psi().values()[k];
        let g = s * state.grad_term().values()[k];
        let c1 = 2.0 * r2 + m + sk2;
        let c2 = (2.0 * r2 + 2.0) - m + sk2;
        let a2 = lf + r1 + sk1;
        let srow = 2.0 * lf + lp + beta_k1;
        let a11 = c1 * (c2 * srow + g);
        let a12 = c1 * a2 * c2;
        let a21 = 4.0 * (m - s);
        let a22 = 2.0 * (m - s) + beta_k2;
        v[k] = a11 * a22 - a12 * a21;
    }
    det
}

/// Smooth random field: low-band Fourier modes with seeded coefficients,
/// normalized to unit sup norm.
pub fn random_smooth_field(grid: TorusGrid, band: usize, rng: &mut impl Rng) -> ScalarField {
    use std::f64::consts::PI;
    let modes: Vec<(f64, f64, f64, f64)> = (0..=band as isize)
        .flat_map(|p| ((-(band as isize))..=(band as isize)).map(move |q| (p, q)))
        .filter(|&(p, q)| !(p == 0 && q < 0) && (p != 0 || q != 0))
        .map(|(p, q)| {
            (
                p as f64,
                q as f64,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let mut field = ScalarField::from_fn(grid, |x, y| {
        modes
            .iter()
            .map(|&(p, q, cc, cs)| {
                let ph = 2.0 * PI * (p * x + q * y);
                cc * ph.cos() + cs * ph.sin()
            })
            .sum()
    });
    let s = field.sup_norm();
    if s > 0.0 {
        field.scale(1.0 / s);
    }
    field
}

/// Worst relative discrepancy between the analytic operator and centered
/// finite differences of the corresponding residual over `n_probes` smooth
/// seeded perturbations. FD step 1e-6 on unit-sup-norm probes.
pub fn fd_check(
    state: &MetricState,
    section: &SectionData,
    params: &VortexParams,
    tag: SystemTag,
    n_probes: usize,
    rng: &mut impl Rng,
) -> f64 {
    const H: f64 = 1e-6;
    let grid = state.grid();
    let op = linearize(state, params, tag);
    // Frozen right sides cancel in centered differences; a placeholder works.
    let rhs = RhsData::constant(grid, 0.0);
    let mut worst = 0.0f64;

    for _ in 0..n_probes {
        let vf = random_smooth_field(grid, 3, rng);
        let vp = random_smooth_field(grid, 3, rng);

        let perturbed = |sgn: f64| -> MetricState {
            let mut f = state.f().clone();
            let mut psi = state.psi().clone();
            match tag {
                SystemTag::Sys1F => f.axpy(sgn * H, &vf),
                SystemTag::Sys1Psi | SystemTag::SPath { .. } => psi.axpy(sgn * H, &vp),
                SystemTag::Sys2Coupled => {
                    f.axpy(sgn * H, &vf);
                    psi.axpy(sgn * H, &vp);
                }
            }
            MetricState::new(f, psi, section).unwrap()
        };
        let plus = perturbed(1.0);
        let minus = perturbed(-1.0);

        let rel = |analytic: &ScalarField, rp: &ScalarField, rm: &ScalarField| -> f64 {
            let fd = rp.zip_with(rm, |a, b| (a - b) / (2.0 * H));
            let scale = analytic.sup_norm().max(1e-12);
            analytic.sub(&fd).sup_norm() / scale
        };

        let err = match tag {
            SystemTag::Sys1Psi => {
                let a = op.apply_scalar(&vp);
                rel(
                    &a,
                    &residual_sys1_psi(&plus, params),
                    &residual_sys1_psi(&minus, params),
                )
            }
            SystemTag::Sys1F => {
                let a = op.apply_scalar(&vf);
                rel(
                    &a,
                    &residual_sys1_f(&plus, params, &rhs),
                    &residual_sys1_f(&minus, params, &rhs),
                )
            }
            SystemTag::SPath { s, eps } => {
                let a = op.apply_scalar(&vp);
                rel(
                    &a,
                    &residual_s_path(&plus, params, s, eps),
                    &residual_s_path(&minus, params, s, eps),
                )
            }
            SystemTag::Sys2Coupled => {
                let (a1, a2) = op.apply_pair(&vf, &vp);
                let (rp1, rp2) = residual_sys2(&plus, params, &rhs);
                let (rm1, rm2) = residual_sys2(&minus, params, &rhs);
                rel(&a1, &rp1, &rm1).max(rel(&a2, &rp2, &rm2))
            }
        };
        worst = worst.max(err);
    }
    worst
}
