//! Compact second-order stencils: face-averaged flux diffusion and central
//! skew advection.
//!
//! With a diagonal coefficient and cell Péclet number `max|b|·h ≤ 2` every
//! off-diagonal entry of `L` is non-negative, so `I − dt·L` is an M-matrix
//! and implicit Euler preserves positivity for any step.

use crate::error::{validation, Result};
use crate::field::VectorField;
use crate::grid::GridSpec;
use crate::spectral::Spectral;

#[derive(Debug, Clone)]
pub(crate) struct CompactStencil {
    grid: GridSpec,
    /// Per axis, diffusion coefficient on the face between `x` and `x + h·e`.
    faces: Vec<Vec<f64>>,
    /// Per axis, `(b(x) + b(x + h·e)) / 4h` for the same faces.
    drift_faces: Option<Vec<Vec<f64>>>,
    /// `Σ_i (4/h²) sin²(k_i h/2)`, the negated symbol of the constant stencil.
    symbol: Vec<f64>,
}

/// Flat index of the neighbour one step along `axis` (`forward` or back).
fn neighbour(grid: &GridSpec, flat: usize, axis: usize, forward: bool) -> usize {
    let n = grid.points();
    let stride = grid.stride(axis);
    let i = (flat / stride) % n;
    match (forward, i) {
        (true, i) if i == n - 1 => flat - (n - 1) * stride,
        (true, _) => flat + stride,
        (false, 0) => flat + (n - 1) * stride,
        (false, _) => flat - stride,
    }
}

/// Removes the part of `b` that the central-difference divergence sees, so
/// the stencil advection is exactly skew and mass-neutral.
pub(crate) fn project_central(b: &VectorField, spectral: &Spectral) -> Vec<Vec<f64>> {
    let grid = b.grid();
    let dim = grid.dim();
    let h = grid.spacing();
    let sines: Vec<Vec<f64>> = (0..dim)
        .map(|axis| {
            (0..grid.len())
                .map(|flat| {
                    let m = grid.multi_index(flat)[axis] as f64;
                    (2.0 * std::f64::consts::PI * m / grid.points() as f64).sin() / h
                })
                .collect()
        })
        .collect();
    let refs: Vec<&[f64]> = b.components().iter().map(|c| c.as_slice()).collect();
    let mut spectra = spectral.forward_real_many(&refs);
    for j in 0..grid.len() {
        let s2: f64 = sines.iter().map(|s| s[j] * s[j]).sum();
        if s2 < 1e-300 {
            continue;
        }
        let mut dot = rustfft::num_complex::Complex64::new(0.0, 0.0);
        for axis in 0..dim {
            dot += spectra[axis][j] * sines[axis][j];
        }
        for axis in 0..dim {
            spectra[axis][j] -= dot * (sines[axis][j] / s2);
        }
    }
    spectral.inverse_real_many(&spectra)
}

impl CompactStencil {
    /// `diagonal[i]` holds `a_ii` at every grid point.
    pub(crate) fn new(grid: GridSpec, diagonal: &[Vec<f64>], drift: Option<&[Vec<f64>]>) -> Result<Self> {
        let dim = grid.dim();
        let h = grid.spacing();
        let faces: Vec<Vec<f64>> = (0..dim)
            .map(|axis| {
                (0..grid.len())
                    .map(|x| 0.5 * (diagonal[axis][x] + diagonal[axis][neighbour(&grid, x, axis, true)]))
                    .collect()
            })
            .collect();
        let drift_faces = drift.map(|b| {
            (0..dim)
                .map(|axis| {
                    (0..grid.len())
                        .map(|x| (b[axis][x] + b[axis][neighbour(&grid, x, axis, true)]) / (4.0 * h))
                        .collect()
                })
                .collect()
        });
        if faces.iter().flatten().any(|v| !(*v > 0.0)) {
            return validation("compact stencil needs a positive diagonal coefficient");
        }
        let symbol = (0..grid.len())
            .map(|flat| {
                let idx = grid.multi_index(flat);
                (0..dim)
                    .map(|axis| {
                        let s = (std::f64::consts::PI * idx[axis] as f64 / grid.points() as f64).sin();
                        4.0 * s * s / (h * h)
                    })
                    .sum()
            })
            .collect();
        Ok(Self { grid, faces, drift_faces, symbol })
    }

    pub(crate) fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub(crate) fn has_drift(&self) -> bool {
        self.drift_faces.is_some()
    }

    /// `div(a∇u) − sign·Bu`, with either part optional.
    pub(crate) fn apply(&self, u: &[f64], diffusion: bool, advection: bool, sign: f64) -> Vec<f64> {
        let g = &self.grid;
        let inv_h2 = 1.0 / (g.spacing() * g.spacing());
        let mut out = vec![0.0; g.len()];
        for axis in 0..g.dim() {
            let faces = &self.faces[axis];
            let drift = self.drift_faces.as_ref().map(|d| &d[axis]);
            for (x, o) in out.iter_mut().enumerate() {
                let xp = neighbour(g, x, axis, true);
                let xm = neighbour(g, x, axis, false);
                if diffusion {
                    *o += inv_h2 * (faces[x] * (u[xp] - u[x]) - faces[xm] * (u[x] - u[xm]));
                }
                if advection {
                    if let Some(f) = drift {
                        *o -= sign * (f[x] * u[xp] - f[xm] * u[xm]);
                    }
                }
            }
        }
        out
    }

    /// `Σ_faces a·(δu)(δv)/h² · hⁿ`.
    pub(crate) fn dirichlet_form(&self, u: &[f64], v: &[f64]) -> f64 {
        let g = &self.grid;
        let inv_h2 = 1.0 / (g.spacing() * g.spacing());
        let mut total = 0.0;
        for axis in 0..g.dim() {
            for x in 0..g.len() {
                let xp = neighbour(g, x, axis, true);
                total += self.faces[axis][x] * (u[xp] - u[x]) * (v[xp] - v[x]);
            }
        }
        total * inv_h2 * g.cell_volume()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbours_wrap() {
        let g = GridSpec::new(2, 8, 1.0).unwrap();
        let corner = g.flat_index(&[7, 0]);
        assert_eq!(neighbour(&g, corner, 0, true), g.flat_index(&[0, 0]));
        assert_eq!(neighbour(&g, corner, 1, false), g.flat_index(&[7, 7]));
    }

    #[test]
    fn laplacian_symbol_matches_stencil() {
        let g = GridSpec::new(2, 16, 2.0).unwrap();
        let ones = vec![vec![1.0; g.len()]; 2];
        let st = CompactStencil::new(g, &ones, None).unwrap();
        let base = 2.0 * std::f64::consts::PI / g.box_length();
        let u: Vec<f64> = (0..g.len())
            .map(|f| {
                let x = g.coordinate(f);
                (base * (3.0 * x[0] + x[1])).cos()
            })
            .collect();
        let lu = st.apply(&u, true, false, 1.0);
        let h = g.spacing();
        let lam = (4.0 / (h * h)) * ((3.0 * base * h / 2.0).sin().powi(2) + (base * h / 2.0).sin().powi(2));
        for (a, b) in lu.iter().zip(&u) {
            assert!((a + lam * b).abs() < 1e-10 * lam);
        }
    }
}
