//! Edge-aware smoothing by a guide-weighted least-squares solve.
//!
//! Minimizes `gamma * sum_ij W_ij (x_i - x_j)^2 + sum_i (x_i - t_i)^2` where
//! `W_ij = exp(-|f_i - f_j|^2)` over scaled position and CIELUV features of
//! a guide image. The optimality system is `(I + 2 gamma L) x = t` with `L`
//! the graph Laplacian of `W`.

mod cg;
mod dense;
mod features;
mod grid;
mod layer;
mod search;

pub use cg::{pcg, CgOutcome};
pub use dense::{DenseSystem, DENSE_PIXEL_LIMIT};
pub use features::{build_features, FeatureField};
pub use grid::GridSystem;
pub use layer::BilateralLayer;
pub use search::{solver_param_search, SearchOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{ImageError, ImageF};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
    #[error("dense backend limited to {limit} pixels, got {pixels}; use the grid backend")]
    Oversize { pixels: usize, limit: usize },
    #[error(
        "solver did not converge after {iterations} iterations (relative residual {residual:.3e})"
    )]
    Convergence { iterations: usize, residual: f64 },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Dense,
    Grid,
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dense" => Ok(Backend::Dense),
            "grid" => Ok(Backend::Grid),
            other => Err(format!(
                "unknown backend '{other}' (expected dense or grid)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BilateralParams {
    pub gamma: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_l: f64,
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub backend: Backend,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for BilateralParams {
    fn default() -> Self {
        BilateralParams {
            gamma: 12000.0,
            sigma_x: 5.0,
            sigma_y: 5.0,
            sigma_l: 7.0,
            sigma_u: 3.0,
            sigma_v: 3.0,
            backend: Backend::Grid,
            cg_tol: 1e-6,
            cg_max_iter: 500,
        }
    }
}

impl BilateralParams {
    pub fn sigmas(&self) -> [f64; 5] {
        [
            self.sigma_x,
            self.sigma_y,
            self.sigma_l,
            self.sigma_u,
            self.sigma_v,
        ]
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(SolverError::InvalidParams(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        for (name, s) in ["sigma_x", "sigma_y", "sigma_l", "sigma_u", "sigma_v"]
            .iter()
            .zip(self.sigmas())
        {
            if !(s > 0.0 && s.is_finite()) {
                return Err(SolverError::InvalidParams(format!(
                    "{name} must be > 0, got {s}"
                )));
            }
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(SolverError::InvalidParams(format!(
                "cg_tol must lie in (0, 1), got {}",
                self.cg_tol
            )));
        }
        if self.cg_max_iter == 0 {
            return Err(SolverError::InvalidParams(
                "cg_max_iter must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// A factored or assembled system for one guide image.
pub enum BilateralSystem {
    Dense(DenseSystem),
    Grid(GridSystem),
}

impl BilateralSystem {
    pub fn new(guide: &ImageF, params: &BilateralParams) -> Result<Self, SolverError> {
        params.validate()?;
        let features = build_features(guide, params)?;
        Ok(match params.backend {
            Backend::Dense => BilateralSystem::Dense(DenseSystem::new(&features, params)?),
            Backend::Grid => BilateralSystem::Grid(GridSystem::new(&features, params)),
        })
    }

    pub fn pixel_count(&self) -> usize {
        match self {
            BilateralSystem::Dense(s) => s.pixel_count(),
            BilateralSystem::Grid(s) => s.pixel_count(),
        }
    }

    /// Solves for one channel plane.
    pub fn solve_plane(&self, target: &[f64]) -> Result<Vec<f64>, SolverError> {
        if target.len() != self.pixel_count() {
            return Err(SolverError::Contract(format!(
                "target has {} pixels, system has {}",
                target.len(),
                self.pixel_count()
            )));
        }
        match self {
            BilateralSystem::Dense(s) => s.solve(target),
            BilateralSystem::Grid(s) => s.solve(target).map(|o| o.0),
        }
    }

    /// Solves every channel of `target` independently.
    pub fn solve_image(&self, target: &ImageF) -> Result<ImageF, SolverError> {
        let planes = (0..target.channels())
            .map(|c| self.solve_plane(&target.channel_plane(c)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ImageF::from_planes(
            target.width(),
            target.height(),
            &planes,
        )?)
    }
}

fn solve_with(
    guide: &ImageF,
    target: &ImageF,
    params: &BilateralParams,
    backend: Backend,
) -> Result<ImageF, SolverError> {
    if !guide.same_size(target) {
        return Err(SolverError::Contract(format!(
            "guide is {}x{} but target is {}x{}",
            guide.width(),
            guide.height(),
            target.width(),
            target.height()
        )));
    }
    let params = BilateralParams {
        backend,
        ..params.clone()
    };
    BilateralSystem::new(guide, &params)?.solve_image(target)
}

/// Exact solve with the fully dense affinity matrix.
pub fn solve_dense(
    guide: &ImageF,
    target: &ImageF,
    params: &BilateralParams,
) -> Result<ImageF, SolverError> {
    solve_with(guide, target, params, Backend::Dense)
}

/// Bilateral-grid approximation solved by preconditioned conjugate gradient.
pub fn solve_grid(
    guide: &ImageF,
    target: &ImageF,
    params: &BilateralParams,
) -> Result<ImageF, SolverError> {
    solve_with(guide, target, params, Backend::Grid)
}

/// Solves with the backend selected in `params`.
pub fn solve(
    guide: &ImageF,
    target: &ImageF,
    params: &BilateralParams,
) -> Result<ImageF, SolverError> {
    solve_with(guide, target, params, params.backend)
}
