//! Squared norm of the degree-1 theta section, and the zero section.
//!
//! The section of the degree-1 bundle is the classical theta function
//! θ(z) = Σ_m e^{−πm²} e^{2πimz} with its metric weight; the stored field is
//! |φ|²(x, y) = c · |θ(x+iy)|² e^{−2πy²}, rescaled so the grid maximum is 1/2.
//! Evaluation uses the completed-square form
//! θ(z)e^{−πy²} = Σ_m e^{2πimx} e^{−π(m+y)²}, which keeps every term bounded
//! by one and makes the truncation tail explicit.

use super::grid::{ScalarField, TorusGrid};
use super::GeometryError;

/// Default absolute tail bound for the theta series.
pub const DEFAULT_TAIL_TOL: f64 = 1e-15;

/// Squared pointwise norm |φ|² of the bundle section on the grid.
#[derive(Clone, Debug)]
pub struct SectionData {
    phik2: ScalarField,
    rescale: f64,
    zero: bool,
}

impl SectionData {
    /// Identically vanishing section; the degenerate mode.
    pub fn zero(grid: TorusGrid) -> Self {
        SectionData {
            phik2: ScalarField::zeros(grid),
            rescale: 1.0,
            zero: true,
        }
    }

    pub fn phik2(&self) -> &ScalarField {
        &self.phik2
    }

    pub fn grid(&self) -> TorusGrid {
        self.phik2.grid()
    }

    /// Factor c applied to |θ|²e^{−2πy²} so the grid maximum is 1/2.
    pub fn rescale_factor(&self) -> f64 {
        self.rescale
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }
}

/// Terms m = −m_max..m_max bound the completed-square tail by
/// 2.1·e^{−π(m_max−1)²} for y ∈ [0, 1).
fn terms_for_tail(tail_tol: f64) -> Result<i64, GeometryError> {
    // NaN fails this test too.
    if tail_tol.is_nan() || tail_tol <= 4.0 * f64::EPSILON {
        return Err(GeometryError::Truncation { tol: tail_tol });
    }
    let mut m = 2i64;
    while 2.1 * (-std::f64::consts::PI * ((m - 1) * (m - 1)) as f64).exp() >= tail_tol {
        m += 1;
        if m > 64 {
            return Err(GeometryError::Truncation { tol: tail_tol });
        }
    }
    Ok(m)
}

/// |θ(x+iy)|² e^{−2πy²} before rescaling, via the completed-square sum.
fn weighted_theta_sq(x: f64, y: f64, m_max: i64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let mut re = 0.0;
    let mut im = 0.0;
    for m in -m_max..=m_max {
        let g = (-std::f64::consts::PI * (m as f64 + y) * (m as f64 + y)).exp();
        let (s, c) = (tau * m as f64 * x).sin_cos();
        re += g * c;
        im += g * s;
    }
    re * re + im * im
}

/// Builds |φ|² for the theta section on a degree-1 grid.
///
/// The result is nonnegative, doubly periodic, has grid maximum exactly 1/2
/// after rescaling, and vanishes at the single node hit by the theta zero
/// (the half-period point (1/2, 1/2), a node for every even n).
pub fn build_theta_section(
    grid: TorusGrid,
    tail_tol: f64,
) -> Result<SectionData, GeometryError> {
    if grid.deg() != 1 {
        return Err(GeometryError::SectionDegree { deg: grid.deg() });
    }
    let m_max = terms_for_tail(tail_tol)?;
    let raw = ScalarField::from_fn(grid, |x, y| weighted_theta_sq(x, y, m_max));
    let max = raw.max();
    let rescale = 0.5 / max;
    let mut phik2 = raw;
    phik2.scale(rescale);
    Ok(SectionData {
        phik2,
        rescale,
        zero: false,
    })
}
