use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{BilateralParams, FeatureField, SolverError};

/// Largest image the dense backend accepts.
pub const DENSE_PIXEL_LIMIT: usize = 8192;

/// Explicit `A = I + 2 gamma (D - W)` with its Cholesky factor.
pub struct DenseSystem {
    matrix: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    tol: f64,
}

impl DenseSystem {
    pub fn new(features: &FeatureField, params: &BilateralParams) -> Result<Self, SolverError> {
        let n = features.len();
        if n > DENSE_PIXEL_LIMIT {
            return Err(SolverError::Oversize {
                pixels: n,
                limit: DENSE_PIXEL_LIMIT,
            });
        }
        let f = &features.features;
        let k = 2.0 * params.gamma;
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut degree = vec![0.0; n];
        for j in 0..n {
            for i in j + 1..n {
                let d2: f64 = (0..5).map(|c| (f[i][c] - f[j][c]).powi(2)).sum();
                let w = (-d2).exp();
                a[(i, j)] = -k * w;
                a[(j, i)] = -k * w;
                degree[i] += w;
                degree[j] += w;
            }
        }
        for (i, d) in degree.iter().enumerate() {
            a[(i, i)] = 1.0 + k * d;
        }
        let factor = a.clone().cholesky().ok_or_else(|| {
            SolverError::Factorization("system matrix is not positive definite".into())
        })?;
        Ok(DenseSystem {
            matrix: a,
            factor,
            tol: params.cg_tol,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(x))
            .as_slice()
            .to_vec()
    }

    /// `|b - A x| / |b|`, zero for a zero right-hand side solved by zero.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.apply(x);
        let r: f64 = ax
            .iter()
            .zip(b)
            .map(|(a, b)| (b - a).powi(2))
            .sum::<f64>()
            .sqrt();
        let bn: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bn == 0.0 {
            r
        } else {
            r / bn
        }
    }

    /// Cholesky solve followed by one step of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolverError> {
        let rhs = DVector::from_column_slice(b);
        let mut x = self.factor.solve(&rhs);
        let r = &rhs - &self.matrix * &x;
        x += self.factor.solve(&r);
        let x = x.as_slice().to_vec();
        let residual = self.relative_residual(&x, b);
        if residual > self.tol {
            return Err(SolverError::Convergence {
                iterations: 1,
                residual,
            });
        }
        Ok(x)
    }
}
