//! Discrete fundamental solutions and the identities they satisfy.
//!
//! A slice is the evolution of the discrete delta `h⁻ⁿ·1_{x=y}`, so the
//! slices for all sources form exactly the discrete semigroup matrix.

use rayon::prelude::*;

use crate::error::{validation, LabError, Result};
use crate::field::{ensure_same_grid, ScalarField};
use crate::grid::GridSpec;
use crate::krylov::SolverSettings;
use crate::pde::{evolve_with, DiscreteOperator, EvolveOptions, OperatorFamily, Record, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `x ↦ Γ(t, x, y)`, evolved under `L`.
    Forward,
    /// `x ↦ Γ(t, y, x)`, evolved under `L*`.
    Adjoint,
}

impl Direction {
    pub fn label(&self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Adjoint => "adjoint",
        }
    }
}

/// Time stepping used for kernel runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    pub dt: f64,
    pub theta: f64,
    pub solver: SolverSettings,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self { dt: 1e-3, theta: 0.5, solver: SolverSettings::default() }
    }
}

impl KernelOptions {
    pub fn new(dt: f64, theta: f64) -> Self {
        Self { dt, theta, ..Default::default() }
    }

    fn evolve(&self, record: Record) -> EvolveOptions {
        EvolveOptions { dt: self.dt, theta: self.theta, record, solver: self.solver }
    }
}

#[derive(Debug, Clone)]
pub struct KernelSlice {
    pub time: f64,
    pub source: [usize; 3],
    pub values: ScalarField,
    pub mass: f64,
    pub direction: Direction,
    pub theta: f64,
}

impl KernelSlice {
    pub fn grid(&self) -> &GridSpec {
        self.values.grid()
    }

    pub fn source_point(&self) -> [f64; 3] {
        self.grid().coordinate(self.grid().flat_index(&self.source))
    }

    pub fn peak(&self) -> f64 {
        self.values.max()
    }

    /// Value at the source point, `Γ(t, y, y)`.
    pub fn on_diagonal(&self) -> f64 {
        self.values.values()[self.grid().flat_index(&self.source)]
    }
}

fn oriented(op: &DiscreteOperator, direction: Direction) -> DiscreteOperator {
    match direction {
        Direction::Forward => op.clone(),
        Direction::Adjoint => op.adjoint(),
    }
}

fn check_source(grid: &GridSpec, y: &[usize]) -> Result<[usize; 3]> {
    if y.len() < grid.dim() || y.iter().take(grid.dim()).any(|&i| i >= grid.points()) {
        return validation(format!("source index {y:?} is outside the grid"));
    }
    let mut out = [0usize; 3];
    out[..grid.dim()].copy_from_slice(&y[..grid.dim()]);
    Ok(out)
}

pub fn estimate_kernel(op: &DiscreteOperator, t: f64, y: &[usize], direction: Direction, opts: &KernelOptions) -> Result<KernelSlice> {
    let mut series = estimate_kernel_series(op, &[t], y, direction, opts)?;
    Ok(series.remove(0))
}

/// Slices at several times from one run; times must be multiples of `dt`.
pub fn estimate_kernel_series(
    op: &DiscreteOperator,
    times: &[f64],
    y: &[usize],
    direction: Direction,
    opts: &KernelOptions,
) -> Result<Vec<KernelSlice>> {
    if times.is_empty() || times.iter().any(|t| !(*t > 0.0)) {
        return validation("kernel times must be positive");
    }
    let grid = *op.grid();
    let source = check_source(&grid, y)?;
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    let steps: Vec<usize> = times
        .iter()
        .map(|t| crate::pde::step_count(*t, opts.dt))
        .collect::<Result<Vec<_>>>()?;
    let delta = ScalarField::delta(grid, &source);
    let traj = evolve_with(&oriented(op, direction), &delta, horizon, &opts.evolve(Record::Steps(steps.clone())))?;
    steps
        .iter()
        .zip(times)
        .map(|(step, &t)| {
            let pos = traj.steps.iter().position(|s| s == step).expect("requested step is recorded");
            let values = traj.snapshots[pos].clone();
            Ok(KernelSlice { time: t, source, mass: values.mass(), values, direction, theta: opts.theta })
        })
        .collect()
}

/// Both columns and rows of the kernel integrate to one: the constant
/// field evolved under `L` and `L*`. Returns the two maximal deviations.
pub fn conservativeness_check(op: &DiscreteOperator, t: f64, opts: &KernelOptions) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return validation("conservativeness check needs t > 0");
    }
    let one = ScalarField::constant(*op.grid(), 1.0);
    let run = |o: &DiscreteOperator| -> Result<f64> {
        let out = evolve_with(o, &one, t, &opts.evolve(Record::Final))?.into_final();
        Ok(out.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max))
    };
    Ok((run(op)?, run(&op.adjoint())?))
}

/// Step sizes for the three runs of a Chapman–Kolmogorov comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositionSteps {
    pub direct: f64,
    pub first_leg: f64,
    pub second_leg: f64,
}

impl CompositionSteps {
    pub fn matched(dt: f64) -> Self {
        Self { direct: dt, first_leg: dt, second_leg: dt }
    }

    pub fn halved(&self) -> Self {
        Self { direct: 0.5 * self.direct, first_leg: 0.5 * self.first_leg, second_leg: 0.5 * self.second_leg }
    }
}

/// `‖Γ(t+s,·,y) − Σ_z Γ(t,·,z)Γ(s,z,y)hⁿ‖₁ / ‖Γ(t+s,·,y)‖₁`, the composition
/// evaluated by re-evolving the time-`s` slice for time `t`.
pub fn chapman_kolmogorov_residual(
    op: &DiscreteOperator,
    t: f64,
    s: f64,
    y: &[usize],
    steps: &CompositionSteps,
    theta: f64,
) -> Result<f64> {
    if !(t > 0.0 && s > 0.0) {
        return validation("composition times must be positive");
    }
    let grid = *op.grid();
    let source = check_source(&grid, y)?;
    let delta = ScalarField::delta(grid, &source);
    let opts = |dt: f64| EvolveOptions::new(dt, theta).record(Record::Final);
    let direct = evolve_with(op, &delta, t + s, &opts(steps.direct))?.into_final();
    let mid = evolve_with(op, &delta, s, &opts(steps.first_leg))?.into_final();
    let composed = evolve_with(op, &mid, t, &opts(steps.second_leg))?.into_final();
    Ok(direct.sub(&composed)?.l1_norm() / direct.l1_norm())
}

/// Both sides of the Duhamel comparison `‖u_k(t) − u(t)‖₁ ≤ ∫₀ᵗ‖(b − b_k)·∇u‖₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuhamelReport {
    pub difference: f64,
    pub bound: f64,
}

impl DuhamelReport {
    /// Inequality with a relative discretization allowance.
    pub fn holds(&self, slack: f64) -> bool {
        self.difference <= self.bound * (1.0 + slack) + 1e-12
    }
}

/// `op_b` carries the target drift, `op_bk` its approximation; both evolve
/// `u0` and the bound integrates the drift defect along the `op_b` solution.
pub fn duhamel_residual(
    op_b: &DiscreteOperator,
    op_bk: &DiscreteOperator,
    u0: &ScalarField,
    t: f64,
    opts: &KernelOptions,
) -> Result<DuhamelReport> {
    op_b.ensure_compatible(op_bk)?;
    ensure_same_grid(op_b.grid(), u0.grid())?;
    let traj = evolve_with(op_b, u0, t, &opts.evolve(Record::All))?;
    let approx = evolve_with(op_bk, u0, t, &opts.evolve(Record::Final))?.into_final();
    duhamel_against(op_b, op_bk, &traj, &approx)
}

fn duhamel_against(
    op_b: &DiscreteOperator,
    op_bk: &DiscreteOperator,
    traj: &Trajectory,
    approx: &ScalarField,
) -> Result<DuhamelReport> {
    op_b.ensure_compatible(op_bk)?;
    let grid = *op_b.grid();
    let zero = vec![vec![0.0; grid.len()]; grid.dim()];
    let b = op_b.drift_components().unwrap_or_else(|| zero.clone());
    let bk = op_bk.drift_components().unwrap_or(zero);
    let defect: Vec<Vec<f64>> = b.iter().zip(&bk).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect()).collect();
    let difference = approx.sub(traj.last())?.l1_norm();

    let spectral = op_b.spectral();
    let h_n = grid.cell_volume();
    let integrand: Vec<f64> = traj
        .snapshots
        .par_iter()
        .map(|u| {
            let grad = spectral.gradient(u.values());
            (0..grid.len())
                .map(|k| (0..grid.dim()).map(|i| defect[i][k] * grad[i][k]).sum::<f64>().abs())
                .sum::<f64>()
                * h_n
        })
        .collect();
    let bound = integrand.windows(2).map(|w| 0.5 * traj.dt * (w[0] + w[1])).sum();
    Ok(DuhamelReport { difference, bound })
}

/// Duhamel comparison of every family member against one target operator,
/// together with the solution Cauchy differences of the same runs.
#[derive(Debug, Clone)]
pub struct DuhamelLadder {
    pub epsilons: Vec<f64>,
    pub reports: Vec<DuhamelReport>,
    pub finals: Vec<ScalarField>,
    /// `‖u_{ε_k}(t) − u_{ε_{k+1}}(t)‖₂`, as in [`solution_convergence`].
    pub cauchy: Vec<f64>,
}

pub fn duhamel_ladder(
    op_b: &DiscreteOperator,
    family: &OperatorFamily,
    u0: &ScalarField,
    t: f64,
    opts: &KernelOptions,
) -> Result<DuhamelLadder> {
    ensure_same_grid(op_b.grid(), u0.grid())?;
    let traj = evolve_with(op_b, u0, t, &opts.evolve(Record::All))?;
    let finals = family
        .operators()
        .par_iter()
        .map(|op| evolve_with(op, u0, t, &opts.evolve(Record::Final)).map(Trajectory::into_final))
        .collect::<Result<Vec<_>>>()?;
    let reports = family
        .operators()
        .iter()
        .zip(&finals)
        .map(|(op, approx)| duhamel_against(op_b, op, &traj, approx))
        .collect::<Result<Vec<_>>>()?;
    let cauchy = finals.windows(2).map(|w| w[0].sub(&w[1]).map(|d| d.l2_norm())).collect::<Result<Vec<_>>>()?;
    Ok(DuhamelLadder { epsilons: family.epsilons().to_vec(), reports, finals, cauchy })
}

/// Successive `L¹` differences of slices over a mollification family.
#[derive(Debug, Clone)]
pub struct LimitStability {
    pub epsilons: Vec<f64>,
    pub slices: Vec<KernelSlice>,
    pub differences: Vec<f64>,
}

impl LimitStability {
    pub fn max_mass_defect(&self) -> f64 {
        self.slices.iter().map(|s| (s.mass - 1.0).abs()).fold(0.0, f64::max)
    }
}

pub fn kernel_limit_stability(family: &OperatorFamily, t: f64, y: &[usize], opts: &KernelOptions) -> Result<LimitStability> {
    family.require(3)?;
    let slices = family
        .operators()
        .par_iter()
        .map(|op| estimate_kernel(op, t, y, Direction::Forward, opts))
        .collect::<Result<Vec<_>>>()?;
    let differences = slices
        .windows(2)
        .map(|w| w[0].values.sub(&w[1].values).map(|d| d.l1_norm()))
        .collect::<Result<Vec<_>>>()?;
    Ok(LimitStability { epsilons: family.epsilons().to_vec(), slices, differences })
}

/// `‖u_{ε_k}(t) − u_{ε_{k+1}}(t)‖₂` for a common initial state.
pub fn solution_convergence(family: &OperatorFamily, u0: &ScalarField, t: f64, opts: &KernelOptions) -> Result<Vec<f64>> {
    family.require(3)?;
    let finals = family
        .operators()
        .par_iter()
        .map(|op| evolve_with(op, u0, t, &opts.evolve(Record::Final)).map(Trajectory::into_final))
        .collect::<Result<Vec<_>>>()?;
    finals.windows(2).map(|w| w[0].sub(&w[1]).map(|d| d.l2_norm())).collect()
}

/// Relative deviation between a forward slice from `y` read at `x` and the
/// adjoint slice from `x` read at `y`.
pub fn duality_defect(forward: &KernelSlice, adjoint: &KernelSlice) -> Result<f64> {
    if forward.direction != Direction::Forward || adjoint.direction != Direction::Adjoint {
        return Err(LabError::Validation("duality compares a forward slice with an adjoint slice".into()));
    }
    let g = forward.grid();
    let at_x = forward.values.values()[g.flat_index(&adjoint.source)];
    let at_y = adjoint.values.values()[g.flat_index(&forward.source)];
    let scale = at_x.abs().max(at_y.abs());
    Ok(if scale == 0.0 { 0.0 } else { (at_x - at_y).abs() / scale })
}
