//! Discrete flat torus, spectral calculus, and the reference bundle section.
//!
//! Everything downstream sits on a uniform n×n grid over [0,1)². The Kähler
//! form is a constant multiple of dx∧dy with total mass 2π·deg, so the
//! geometric Laplacian is the euclidean one divided by 4π·deg and the ω-mean
//! of a field coincides with its plain node average.

mod grid;
mod section;
mod spectral;

pub use grid::{integrate, ScalarField, TorusGrid};
pub use section::{build_theta_section, SectionData, DEFAULT_TAIL_TOL};
pub use spectral::{green_solve, helmholtz_solve, laplacian, poisson_solve, DEFAULT_COMPAT_TOL};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("grid size must be an even integer >= 16, got {n}")]
    BadGridSize { n: usize },
    #[error("line bundle degree must be >= 1, got {deg}")]
    BadDegree { deg: u32 },
    #[error("rhs mean {mean:.3e} exceeds the Poisson compatibility tolerance {tol:.1e}")]
    Compatibility { mean: f64, tol: f64 },
    #[error("theta tail tolerance {tol:.1e} is below what f64 evaluation can reach")]
    Truncation { tol: f64 },
    #[error("theta section requires a degree-1 bundle, got degree {deg}")]
    SectionDegree { deg: u32 },
}
