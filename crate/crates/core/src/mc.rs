//! Euler–Maruyama simulation of `dX = b(X)dt + √2 dW` on the periodic box,
//! and comparison of its law with kernel slices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{validation, LabError, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::GridSpec;
use crate::kernel::{Direction, KernelSlice};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub start: [f64; 3],
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub exit_radius: f64,
}

impl McConfig {
    pub fn validate(&self, grid: &GridSpec) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return validation(format!("need 0 < dt <= T, got dt = {}, T = {}", self.dt, self.horizon));
        }
        if self.paths == 0 {
            return validation("path count must be at least 1");
        }
        if !(self.exit_radius > 0.0 && self.exit_radius < 0.5 * grid.box_length()) {
            return validation(format!("exit radius must lie in (0, L/2), got {}", self.exit_radius));
        }
        crate::pde::step_count(self.horizon, self.dt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointSample {
    pub dim: usize,
    pub box_length: f64,
    pub start: [f64; 3],
    /// Endpoints wrapped into `[0, L)ⁿ`.
    pub endpoints: Vec<[f64; 3]>,
    /// Unwrapped displacement from the start.
    pub displacements: Vec<[f64; 3]>,
    pub exited: Vec<bool>,
    pub seed: u64,
}

impl EndpointSample {
    pub fn len(&self) -> usize {
        self.endpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.endpoints.is_empty()
    }

    /// Sample mean of the unwrapped endpoints.
    pub fn mean(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for d in &self.displacements {
            for i in 0..self.dim {
                m[i] += d[i];
            }
        }
        for i in 0..self.dim {
            m[i] = self.start[i] + m[i] / self.len() as f64;
        }
        m
    }

    /// Sample covariance of the unwrapped displacements.
    pub fn covariance(&self) -> [[f64; 3]; 3] {
        let n = self.len() as f64;
        let mu = self.mean();
        let mut c = [[0.0; 3]; 3];
        for d in &self.displacements {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    let di = self.start[i] + d[i] - mu[i];
                    let dj = self.start[j] + d[j] - mu[j];
                    c[i][j] += di * dj;
                }
            }
        }
        for row in c.iter_mut() {
            for v in row.iter_mut() {
                *v /= n - 1.0;
            }
        }
        c
    }
}

/// Multilinear periodic interpolation of every drift component.
fn interpolate(b: &VectorField, x: &[f64; 3]) -> [f64; 3] {
    let grid = b.grid();
    let dim = grid.dim();
    let n = grid.points();
    let h = grid.spacing();
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for axis in 0..dim {
        let s = x[axis] / h;
        let f = s.floor();
        base[axis] = (f as i64).rem_euclid(n as i64) as usize;
        frac[axis] = s - f;
    }
    let mut out = [0.0; 3];
    for corner in 0..(1usize << dim) {
        let mut w = 1.0;
        let mut idx = [0usize; 3];
        for axis in 0..dim {
            let up = (corner >> axis) & 1 == 1;
            idx[axis] = if up { (base[axis] + 1) % n } else { base[axis] };
            w *= if up { frac[axis] } else { 1.0 - frac[axis] };
        }
        let flat = grid.flat_index(&idx[..dim]);
        for (axis, o) in out.iter_mut().enumerate().take(dim) {
            *o += w * b.component(axis)[flat];
        }
    }
    out
}

/// Independent stream per path: the same path id always draws the same
/// increments, whatever the scheduling.
fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

struct PathEnd {
    end: [f64; 3],
    disp: [f64; 3],
    exited: bool,
}

pub fn simulate(b: &VectorField, cfg: &McConfig) -> Result<EndpointSample> {
    simulate_sampled(b.grid(), |x| interpolate(b, x), cfg)
}

fn simulate_sampled<F>(grid: &GridSpec, drift: F, cfg: &McConfig) -> Result<EndpointSample>
where
    F: Fn(&[f64; 3]) -> [f64; 3] + Sync,
{
    let grid = *grid;
    let steps = cfg.validate(&grid)?;
    let dim = grid.dim();
    let l = grid.box_length();
    let noise = (2.0 * cfg.dt).sqrt();
    let r2 = cfg.exit_radius * cfg.exit_radius;
    let ends = (0..cfg.paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(cfg.seed, path);
            let mut x = cfg.start;
            let mut disp = [0.0; 3];
            let mut exited = false;
            for step in 1..=steps {
                let v = drift(&x);
                if v.iter().any(|c| !c.is_finite()) {
                    return Err(LabError::NonFiniteDrift { path, step });
                }
                let mut d2 = 0.0;
                for axis in 0..dim {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let dx = v[axis] * cfg.dt + noise * z;
                    disp[axis] += dx;
                    x[axis] = (x[axis] + dx).rem_euclid(l);
                    d2 += disp[axis] * disp[axis];
                }
                exited |= d2 > r2;
            }
            Ok(PathEnd { end: x, disp, exited })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EndpointSample {
        dim,
        box_length: l,
        start: cfg.start,
        endpoints: ends.iter().map(|e| e.end).collect(),
        displacements: ends.iter().map(|e| e.disp).collect(),
        exited: ends.iter().map(|e| e.exited).collect(),
        seed: cfg.seed,
    })
}

/// Flat index of the grid cell containing `x`; cells are centred on grid
/// points.
fn cell_of(grid: &GridSpec, x: &[f64; 3]) -> usize {
    grid.flat_index(&grid.nearest_index(x)[..grid.dim()])
}

/// Histogram of the sample on the grid cells, normalised as a density.
pub fn empirical_slice(s: &EndpointSample, grid: &GridSpec, time: f64) -> Result<KernelSlice> {
    if grid.dim() != s.dim || grid.box_length() != s.box_length {
        return Err(LabError::Shape("sample and grid describe different boxes".into()));
    }
    let mut counts = vec![0.0; grid.len()];
    for e in &s.endpoints {
        counts[cell_of(grid, e)] += 1.0;
    }
    let scale = 1.0 / (s.len() as f64 * grid.cell_volume());
    let values = ScalarField::new(*grid, counts.into_iter().map(|c| c * scale).collect())?;
    let mut source = grid.nearest_index(&s.start);
    source[grid.dim()..].iter_mut().for_each(|v| *v = 0);
    Ok(KernelSlice { time, source, mass: values.mass(), values, direction: Direction::Forward, theta: f64::NAN })
}

fn bin_layout(grid: &GridSpec, bins_per_axis: usize) -> Result<usize> {
    if bins_per_axis == 0 || grid.points() % bins_per_axis != 0 {
        return validation(format!(
            "{bins_per_axis} bins per axis do not evenly coarsen {} grid points",
            grid.points()
        ));
    }
    Ok(grid.points() / bins_per_axis)
}

fn bin_of(grid: &GridSpec, cell: usize, per_bin: usize, bins: usize) -> usize {
    let idx = grid.multi_index(cell);
    (0..grid.dim()).fold(0, |acc, axis| acc * bins + idx[axis] / per_bin)
}

/// `½ Σ_bins |empirical frequency − Σ_{cells in bin} Γ hⁿ|`.
pub fn tv_distance(s: &EndpointSample, slice: &KernelSlice, bins_per_axis: usize) -> Result<f64> {
    let grid = slice.grid();
    if slice.direction != Direction::Forward {
        return validation("the sample law is compared with a forward slice");
    }
    if grid.dim() != s.dim || grid.box_length() != s.box_length {
        return Err(LabError::Shape("sample and slice describe different boxes".into()));
    }
    let start_cell = cell_of(grid, &s.start);
    if grid.flat_index(&slice.source[..grid.dim()]) != start_cell {
        return validation("slice source does not match the sample start point");
    }
    let per_bin = bin_layout(grid, bins_per_axis)?;
    let total_bins = bins_per_axis.pow(grid.dim() as u32);
    let mut counts = vec![0usize; total_bins];
    for e in &s.endpoints {
        counts[bin_of(grid, cell_of(grid, e), per_bin, bins_per_axis)] += 1;
    }
    let mut diff: Vec<f64> = counts.iter().map(|c| *c as f64 / s.len() as f64).collect();
    let hn = grid.cell_volume();
    for (cell, v) in slice.values.values().iter().enumerate() {
        diff[bin_of(grid, cell, per_bin, bins_per_axis)] -= v * hn;
    }
    Ok(0.5 * diff.iter().map(|d| d.abs()).sum::<f64>())
}

/// Fraction of paths that left the exit ball before the horizon.
pub fn nonexplosion(s: &EndpointSample) -> f64 {
    s.exited.iter().filter(|e| **e).count() as f64 / s.len() as f64
}

/// Fraction of endpoints whose cell centre lies beyond `radius` from the
/// start cell.
fn endpoint_outside(s: &EndpointSample, grid: &GridSpec, radius: f64) -> f64 {
    let origin = grid.coordinate(cell_of(grid, &s.start));
    let outside = s
        .endpoints
        .iter()
        .filter(|e| grid.distance(cell_of(grid, e), &origin) > radius)
        .count();
    outside as f64 / s.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailCheck {
    pub radius: f64,
    /// PDE mass outside the ball, cells classified by their centre.
    pub pde_tail: f64,
    /// Endpoints outside the ball with the same classification.
    pub mc_tail: f64,
    /// Binomial standard deviation at the PDE tail probability.
    pub sigma: f64,
}

impl TailCheck {
    pub fn consistent(&self) -> bool {
        (self.mc_tail - self.pde_tail).abs() <= 3.0 * self.sigma + 1e-12
    }
}

/// Compares the endpoint tail beyond `radius` with the slice's tail mass.
pub fn tail_consistency(s: &EndpointSample, slice: &KernelSlice, radius: f64) -> Result<TailCheck> {
    let grid = slice.grid();
    if !(radius > 0.0 && radius < 0.5 * grid.box_length()) {
        return validation(format!("tail radius must lie in (0, L/2), got {radius}"));
    }
    let origin = slice.source_point();
    let hn = grid.cell_volume();
    let pde_tail: f64 = slice
        .values
        .values()
        .iter()
        .enumerate()
        .filter(|(cell, _)| grid.distance(*cell, &origin) > radius)
        .map(|(_, v)| v * hn)
        .sum();
    let p = pde_tail.clamp(0.0, 1.0);
    let n = s.len() as f64;
    Ok(TailCheck {
        radius,
        pde_tail,
        mc_tail: endpoint_outside(s, grid, radius),
        sigma: (p * (1.0 - p) / n).sqrt(),
    })
}

/// Exit fraction against the PDE tail at the exit radius: passes when the
/// fraction is at most `tail + 3·sqrt(tail(1 − tail)/N)`.
pub fn nonexplosion_consistent(s: &EndpointSample, slice: &KernelSlice, exit_radius: f64) -> Result<(f64, TailCheck, bool)> {
    let tail = tail_consistency(s, slice, exit_radius)?;
    let exit = nonexplosion(s);
    Ok((exit, tail, exit <= tail.pde_tail + 3.0 * tail.sigma + 1e-12))
}
