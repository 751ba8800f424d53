use std::sync::Arc;

use super::{BilateralParams, BilateralSystem, SolverError};
use crate::image::ImageF;
use crate::tensor::{LinearMap, Shape, Tape, Tensor, Var};

/// Guide-conditioned smoothing of a batch, usable as a tape node.
///
/// Item `n` of the target is solved against guide `n`, each channel
/// independently. The guides are constants, so the map is linear in the
/// target and, being symmetric, is its own transpose.
pub struct BilateralLayer {
    systems: Vec<BilateralSystem>,
    width: usize,
    height: usize,
}

impl BilateralLayer {
    pub fn new(guides: &[ImageF], params: &BilateralParams) -> Result<Self, SolverError> {
        let first = guides.first().ok_or_else(|| {
            SolverError::Contract("bilateral layer needs at least one guide".into())
        })?;
        for g in guides {
            if !g.same_size(first) {
                return Err(SolverError::Contract("guides differ in size".into()));
            }
        }
        let systems = guides
            .iter()
            .map(|g| BilateralSystem::new(g, params))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BilateralLayer {
            systems,
            width: first.width(),
            height: first.height(),
        })
    }

    pub fn batch_len(&self) -> usize {
        self.systems.len()
    }

    fn check(&self, t: &Tensor) -> Result<Shape, SolverError> {
        let s = t.shape();
        if s.n != self.systems.len() || s.h != self.height || s.w != self.width {
            return Err(SolverError::Contract(format!(
                "tensor {s} does not match {} guides of {}x{}",
                self.systems.len(),
                self.width,
                self.height
            )));
        }
        Ok(s)
    }

    fn apply(&self, t: &Tensor) -> Result<Tensor, SolverError> {
        let s = self.check(t)?;
        let mut data = Vec::with_capacity(s.numel());
        for n in 0..s.n {
            for c in 0..s.c {
                data.extend(self.systems[n].solve_plane(t.plane(n, c))?);
            }
        }
        Tensor::new(s, data).map_err(|e| SolverError::Contract(e.to_string()))
    }

    pub fn forward(&self, target: &Tensor) -> Result<Tensor, SolverError> {
        self.apply(target)
    }

    /// Gradient of a loss w.r.t. the target given the gradient w.r.t. the
    /// output. Same solve as the forward pass.
    pub fn backward(&self, upstream: &Tensor) -> Result<Tensor, SolverError> {
        self.apply(upstream)
    }

    /// Records the filtered target on `tape`.
    pub fn record(self: &Arc<Self>, tape: &mut Tape, target: Var) -> Result<Var, SolverError> {
        let out = self.forward(tape.value(target))?;
        let map: Arc<dyn LinearMap> = self.clone();
        tape.linear(target, out, map)
            .map_err(|e| SolverError::Contract(e.to_string()))
    }
}

impl LinearMap for BilateralLayer {
    fn name(&self) -> &'static str {
        "bilateral_filter"
    }

    fn apply_transpose(&self, upstream: &Tensor) -> Result<Tensor, String> {
        self.backward(upstream).map_err(|e| e.to_string())
    }
}
