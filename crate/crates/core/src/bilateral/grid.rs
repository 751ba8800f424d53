use std::collections::HashMap;

use super::cg::{pcg, CgOutcome};
use super::{BilateralParams, FeatureField, SolverError};

const NONE: u32 = u32::MAX;

/// Sparse 5-D bilateral grid with unit bins in scaled feature space.
///
/// Pixels splat multilinearly onto lattice vertices (`S`). The affinity is
/// approximated on the lattice by `M B M`, where `M` holds vertex masses and
/// `B` is the symmetrized product of per-axis `[1, 2, 1] / 2` blurs. The
/// system `(2 gamma L_g + S S^T) y = S t` is solved for vertex values and
/// sliced back with `x = S^T y`.
pub struct GridSystem {
    n_pixels: usize,
    gamma: f64,
    tol: f64,
    max_iter: usize,
    offsets: Vec<usize>,
    vertex: Vec<u32>,
    weight: Vec<f64>,
    neighbors: Vec<[u32; 10]>,
    mass: Vec<f64>,
    degree: Vec<f64>,
    diag: Vec<f64>,
}

impl GridSystem {
    pub fn new(features: &FeatureField, params: &BilateralParams) -> Self {
        let f = &features.features;
        let mut lo = [f64::INFINITY; 5];
        for p in f {
            for k in 0..5 {
                lo[k] = lo[k].min(p[k]);
            }
        }

        let mut index: HashMap<[i32; 5], u32> = HashMap::new();
        let mut keys: Vec<[i32; 5]> = Vec::new();
        let mut offsets = Vec::with_capacity(f.len() + 1);
        let mut vertex = Vec::new();
        let mut weight = Vec::new();
        offsets.push(0);
        for p in f {
            let mut base = [0i32; 5];
            let mut frac = [0.0; 5];
            for k in 0..5 {
                let g = p[k] - lo[k];
                let b = g.floor();
                base[k] = b as i32;
                frac[k] = g - b;
            }
            for corner in 0..32u32 {
                let mut w = 1.0;
                let mut key = base;
                for k in 0..5 {
                    if corner >> k & 1 == 1 {
                        w *= frac[k];
                        key[k] += 1;
                    } else {
                        w *= 1.0 - frac[k];
                    }
                }
                if w == 0.0 {
                    continue;
                }
                let id = *index.entry(key).or_insert_with(|| {
                    keys.push(key);
                    (keys.len() - 1) as u32
                });
                vertex.push(id);
                weight.push(w);
            }
            offsets.push(vertex.len());
        }

        let neighbors: Vec<[u32; 10]> = keys
            .iter()
            .map(|key| {
                let mut nb = [NONE; 10];
                for k in 0..5 {
                    for (slot, step) in [(2 * k, -1), (2 * k + 1, 1)] {
                        let mut other = *key;
                        other[k] += step;
                        if let Some(&id) = index.get(&other) {
                            nb[slot] = id;
                        }
                    }
                }
                nb
            })
            .collect();

        let nv = keys.len();
        let mut mass = vec![0.0; nv];
        let mut sq = vec![0.0; nv];
        for (v, w) in vertex.iter().zip(&weight) {
            mass[*v as usize] += w;
            sq[*v as usize] += w * w;
        }
        let mut grid = GridSystem {
            n_pixels: f.len(),
            gamma: params.gamma,
            tol: params.cg_tol,
            max_iter: params.cg_max_iter,
            offsets,
            vertex,
            weight,
            neighbors,
            mass,
            degree: Vec::new(),
            diag: Vec::new(),
        };
        grid.degree = grid.affinity(&vec![1.0; nv]);
        let k = 2.0 * grid.gamma;
        grid.diag = (0..nv)
            .map(|v| k * (grid.degree[v] - grid.mass[v] * grid.mass[v]) + sq[v])
            .collect();
        grid
    }

    pub fn pixel_count(&self) -> usize {
        self.n_pixels
    }

    pub fn vertex_count(&self) -> usize {
        self.mass.len()
    }

    /// Pixel values to vertices: `S t`.
    pub fn splat(&self, t: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.vertex_count()];
        for (i, &ti) in t.iter().enumerate() {
            for e in self.offsets[i]..self.offsets[i + 1] {
                out[self.vertex[e] as usize] += self.weight[e] * ti;
            }
        }
        out
    }

    /// Vertex values to pixels: `S^T y`.
    pub fn slice(&self, y: &[f64]) -> Vec<f64> {
        (0..self.n_pixels)
            .map(|i| {
                (self.offsets[i]..self.offsets[i + 1])
                    .map(|e| self.weight[e] * y[self.vertex[e] as usize])
                    .sum()
            })
            .collect()
    }

    fn blur_axis(&self, axis: usize, src: &[f64], dst: &mut [f64]) {
        for (v, nb) in self.neighbors.iter().enumerate() {
            let left = nb[2 * axis];
            let right = nb[2 * axis + 1];
            let mut acc = 0.0;
            if left != NONE {
                acc += src[left as usize];
            }
            if right != NONE {
                acc += src[right as usize];
            }
            dst[v] = src[v] + 0.5 * acc;
        }
    }

    /// `M B_sym M y`.
    fn affinity(&self, y: &[f64]) -> Vec<f64> {
        let nv = self.vertex_count();
        let my: Vec<f64> = y.iter().zip(&self.mass).map(|(y, m)| y * m).collect();
        let mut fwd = my.clone();
        let mut bwd = my;
        let mut tmp = vec![0.0; nv];
        for axis in 0..5 {
            self.blur_axis(axis, &fwd, &mut tmp);
            std::mem::swap(&mut fwd, &mut tmp);
        }
        for axis in (0..5).rev() {
            self.blur_axis(axis, &bwd, &mut tmp);
            std::mem::swap(&mut bwd, &mut tmp);
        }
        (0..nv)
            .map(|v| 0.5 * (fwd[v] + bwd[v]) * self.mass[v])
            .collect()
    }

    /// Grid-space operator `2 gamma (diag(d) - W_g) + S S^T`.
    pub fn apply(&self, y: &[f64], out: &mut [f64]) {
        let k = 2.0 * self.gamma;
        let w = self.affinity(y);
        let ss = self.splat(&self.slice(y));
        for v in 0..y.len() {
            out[v] = k * (self.degree[v] * y[v] - w[v]) + ss[v];
        }
    }

    /// Solves one plane. Returns the sliced result and the grid-space run.
    pub fn solve(&self, target: &[f64]) -> Result<(Vec<f64>, CgOutcome), SolverError> {
        if self.gamma == 0.0 {
            let out = CgOutcome {
                x: Vec::new(),
                iterations: 0,
                residual: 0.0,
            };
            return Ok((target.to_vec(), out));
        }
        let b = self.splat(target);
        let y0: Vec<f64> = b.iter().zip(&self.mass).map(|(b, m)| b / m).collect();
        let run = pcg(
            |y, out| self.apply(y, out),
            &self.diag,
            &b,
            y0,
            self.tol,
            self.max_iter,
        )
        .map_err(|failed| SolverError::Convergence {
            iterations: failed.iterations,
            residual: failed.residual,
        })?;
        Ok((self.slice(&run.x), run))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bilateral::build_features;
    use crate::image::ImageF;

    fn system(guide: &ImageF) -> GridSystem {
        let params = BilateralParams::default();
        GridSystem::new(&build_features(guide, &params).unwrap(), &params)
    }

    #[test]
    fn splat_weights_sum_to_one() {
        let guide = ImageF::from_fn(7, 5, 3, |x, y, c| 0.1 + 0.03 * (x * (c + 1) + y) as f64);
        let g = system(&guide);
        let ones = g.slice(&vec![1.0; g.vertex_count()]);
        assert!(ones.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn operator_is_symmetric() {
        let guide = ImageF::from_fn(9, 6, 3, |x, y, c| 0.2 + 0.05 * ((x + 2 * y + c) % 5) as f64);
        let g = system(&guide);
        let n = g.vertex_count();
        let a: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let b: Vec<f64> = (0..n).map(|i| ((i * 3) % 5) as f64 + 0.5).collect();
        let (mut ka, mut kb) = (vec![0.0; n], vec![0.0; n]);
        g.apply(&a, &mut ka);
        g.apply(&b, &mut kb);
        let lhs: f64 = ka.iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = kb.iter().zip(&a).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn jacobi_diagonal_matches_operator() {
        let guide = ImageF::from_fn(
            6,
            6,
            3,
            |x, _, c| if x < 3 { 0.2 } else { 0.6 + 0.1 * c as f64 },
        );
        let g = system(&guide);
        let n = g.vertex_count();
        let mut out = vec![0.0; n];
        for v in 0..n {
            let mut e = vec![0.0; n];
            e[v] = 1.0;
            g.apply(&e, &mut out);
            assert!((out[v] - g.diag[v]).abs() <= 1e-9 * g.diag[v]);
        }
    }

    #[test]
    fn constant_target_needs_no_iterations() {
        let guide = ImageF::from_fn(8, 8, 3, |x, y, _| 0.1 + 0.1 * ((x / 3 + y / 3) % 3) as f64);
        let (x, run) = system(&guide).solve(&vec![0.37; 64]).unwrap();
        assert_eq!(run.iterations, 0);
        assert!(x.iter().all(|v| (v - 0.37).abs() < 1e-12));
    }
}
