//! Discrete generator `L = div(a·∇) − b·∇` and the θ-scheme for
//! `∂ₜu = Lu` on the periodic box.
//!
//! Diffusion is split as `c·Δ + div((a − cI)·∇)` where `c` is the smallest
//! eigenvalue of `a` over the grid: the constant part uses the exact spectral
//! Laplacian, the remainder is a flux-form term with a positive semidefinite
//! coefficient. Advection uses the skew form `½(b·∇u + div(bu))`, so
//! `⟨Bu, u⟩ = 0` holds discretely and constants are (to roundoff) in the
//! kernel of both parts.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{validation, LabError, Result};
use crate::field::{ensure_same_grid, smooth_cutoff, ScalarField, VectorField};
use crate::grid::GridSpec;
use crate::krylov::{gmres, SolveStats, SolverSettings};
use crate::spectral::Spectral;
use crate::stencil::{project_central, CompactStencil};

/// Symmetric coefficient matrix field `a(x)` with ellipticity constant `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionCoefficient {
    grid: GridSpec,
    /// `None` is the constant identity fast path. Otherwise `n·n` arrays,
    /// entry `(i, j)` at position `i·n + j`.
    entries: Option<Vec<Vec<f64>>>,
    lambda: f64,
    min_eigenvalue: f64,
    mean_diffusivity: f64,
}

/// Eigenvalue range of a symmetric 2x2 or 3x3 matrix stored row-major.
pub(crate) fn symmetric_eigen_range(m: &[f64], n: usize) -> (f64, f64) {
    if n == 2 {
        let (a, b, d) = (m[0], m[1], m[3]);
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        return (mean - rad, mean + rad);
    }
    let (a00, a01, a02, a11, a12, a22) = (m[0], m[1], m[2], m[4], m[5], m[8]);
    let p1 = a01 * a01 + a02 * a02 + a12 * a12;
    if p1 == 0.0 {
        let lo = a00.min(a11).min(a22);
        let hi = a00.max(a11).max(a22);
        return (lo, hi);
    }
    let q = (a00 + a11 + a22) / 3.0;
    let p2 = (a00 - q).powi(2) + (a11 - q).powi(2) + (a22 - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = |x: f64| x / p;
    let (b00, b11, b22) = (b(a00 - q), b(a11 - q), b(a22 - q));
    let (b01, b02, b12) = (b(a01), b(a02), b(a12));
    let det = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02) + b02 * (b01 * b12 - b11 * b02);
    let r = (0.5 * det).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    (lo, hi)
}

impl DiffusionCoefficient {
    /// `a = I`, `λ = 1`.
    pub fn identity(grid: GridSpec) -> Self {
        Self { grid, entries: None, lambda: 1.0, min_eigenvalue: 1.0, mean_diffusivity: 1.0 }
    }

    /// Builds a variable coefficient from `n·n` component arrays, checking
    /// symmetry and `λ|ξ|² ≤ ξᵀaξ ≤ |ξ|²/λ` at every grid point.
    pub fn from_entries(grid: GridSpec, entries: Vec<Vec<f64>>, lambda: f64) -> Result<Self> {
        let n = grid.dim();
        if entries.len() != n * n || entries.iter().any(|e| e.len() != grid.len()) {
            return Err(LabError::Shape(format!("diffusion coefficient needs {} arrays of {} samples", n * n, grid.len())));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return validation(format!("ellipticity constant must lie in (0, 1], got {lambda}"));
        }
        let mut lo_all = f64::INFINITY;
        let mut trace_sum = 0.0;
        let mut m = vec![0.0; n * n];
        for flat in 0..grid.len() {
            for (k, e) in entries.iter().enumerate() {
                m[k] = e[flat];
            }
            for i in 0..n {
                for j in 0..i {
                    let (x, y) = (m[i * n + j], m[j * n + i]);
                    if (x - y).abs() > 1e-14 * (x.abs() + y.abs()).max(1.0) {
                        return validation(format!("diffusion coefficient is not symmetric at sample {flat}"));
                    }
                }
            }
            let (lo, hi) = symmetric_eigen_range(&m, n);
            if !(lo >= lambda * (1.0 - 1e-12) && hi <= (1.0 + 1e-12) / lambda) {
                return validation(format!(
                    "eigenvalues [{lo}, {hi}] at sample {flat} leave the ellipticity band [{lambda}, {}]",
                    1.0 / lambda
                ));
            }
            lo_all = lo_all.min(lo);
            trace_sum += (0..n).map(|i| m[i * n + i]).sum::<f64>() / n as f64;
        }
        Ok(Self {
            grid,
            entries: Some(entries),
            lambda,
            min_eigenvalue: lo_all.max(lambda),
            mean_diffusivity: trace_sum / grid.len() as f64,
        })
    }

    /// `a = I + s·χ(r)·eeᵀ` with `e = (1,…,1)/√n` and a radial cutoff `χ`
    /// around the center; eigenvalues lie in `[1, 1+s]`.
    pub fn smooth_anisotropic(grid: GridSpec, strength: f64, support_radius: f64) -> Result<Self> {
        if !(strength >= 0.0) {
            return validation("anisotropy strength must be non-negative");
        }
        let n = grid.dim();
        let center = grid.center();
        let mut entries = vec![vec![0.0; grid.len()]; n * n];
        for flat in 0..grid.len() {
            let r = grid.distance(flat, &center);
            let w = strength * smooth_cutoff(r, 0.5 * support_radius, support_radius) / n as f64;
            for i in 0..n {
                for j in 0..n {
                    entries[i * n + j][flat] = w + if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        Self::from_entries(grid, entries, 1.0 / (1.0 + strength))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_identity(&self) -> bool {
        self.entries.is_none()
    }

    pub fn entries(&self) -> Option<&[Vec<f64>]> {
        self.entries.as_deref()
    }

    /// Constant isotropic part used by the split; at least `λ`.
    pub fn split_constant(&self) -> f64 {
        self.min_eigenvalue
    }

    /// `a − cI` with `c` the split constant; `None` when it vanishes.
    fn remainder(&self) -> Option<Vec<Vec<f64>>> {
        let n = self.grid.dim();
        let c = self.split_constant();
        self.entries.as_ref().map(|e| {
            e.iter()
                .enumerate()
                .map(|(k, arr)| {
                    let diag = k / n == k % n;
                    arr.iter().map(|v| if diag { v - c } else { *v }).collect()
                })
                .collect()
        })
    }
}

/// Spatial discretization of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Discretization {
    /// Spectral derivatives; exact on Fourier modes.
    #[default]
    Spectral,
    /// Second-order compact stencils; implicit Euler is positivity
    /// preserving when `a` is diagonal and `max|b|·h ≤ 2`.
    Compact,
}

/// Immutable assembled operator; cheap to clone and shareable across threads.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: GridSpec,
    scheme: Discretization,
    compact: Option<Arc<CompactStencil>>,
    spectral: Arc<Spectral>,
    split: f64,
    precond_diffusivity: f64,
    remainder: Option<Arc<Vec<Vec<f64>>>>,
    drift: Option<Arc<Vec<Vec<f64>>>>,
    drift_sign: f64,
    drift_max: f64,
    lambda: f64,
}

/// Assembles `L = div(a∇·) − b·∇` from a certified divergence-free drift.
pub fn assemble(a: &DiffusionCoefficient, b: &VectorField) -> Result<DiscreteOperator> {
    assemble_with(a, b, Discretization::Spectral)
}

pub fn assemble_with(a: &DiffusionCoefficient, b: &VectorField, scheme: Discretization) -> Result<DiscreteOperator> {
    ensure_same_grid(a.grid(), b.grid())?;
    if !b.is_certified() {
        return validation(
            "drift is not certified divergence-free; skew-symmetry of the advection part would be unguaranteed",
        );
    }
    let grid = *a.grid();
    let drift_max = b.max_magnitude();
    let spectral = Arc::new(Spectral::new(grid));
    let mut drift = if drift_max == 0.0 { None } else { Some(b.components().to_vec()) };
    let compact = match scheme {
        Discretization::Spectral => None,
        Discretization::Compact => {
            let dim = grid.dim();
            let diagonal: Vec<Vec<f64>> = match a.entries() {
                None => vec![vec![1.0; grid.len()]; dim],
                Some(e) => {
                    let off_diagonal = (0..dim * dim).filter(|k| k / dim != k % dim).any(|k| e[k].iter().any(|v| *v != 0.0));
                    if off_diagonal {
                        return validation("compact discretization supports diagonal diffusion coefficients only");
                    }
                    (0..dim).map(|i| e[i * dim + i].clone()).collect()
                }
            };
            if drift.is_some() {
                drift = Some(project_central(b, &spectral));
            }
            Some(Arc::new(CompactStencil::new(grid, &diagonal, drift.as_deref())?))
        }
    };
    Ok(DiscreteOperator {
        grid,
        scheme,
        compact,
        spectral,
        split: a.split_constant(),
        precond_diffusivity: a.mean_diffusivity,
        remainder: a.remainder().map(Arc::new),
        drift: drift.map(Arc::new),
        drift_sign: 1.0,
        drift_max,
        lambda: a.lambda(),
    })
}

impl DiscreteOperator {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn scheme(&self) -> Discretization {
        self.scheme
    }

    pub fn drift_max(&self) -> f64 {
        self.drift_max
    }

    pub fn has_drift(&self) -> bool {
        self.drift.is_some()
    }

    /// Effective drift components (sign applied), if any.
    pub fn drift_components(&self) -> Option<Vec<Vec<f64>>> {
        self.drift.as_ref().map(|d| {
            d.iter()
                .map(|c| c.iter().map(|v| self.drift_sign * v).collect())
                .collect()
        })
    }

    /// `L* = div(a∇·) + b·∇`, the operator with the drift sign flipped. For
    /// the skew advection this is exactly the matrix transpose.
    pub fn adjoint(&self) -> DiscreteOperator {
        let mut op = self.clone();
        op.drift_sign = -self.drift_sign;
        op
    }

    /// Combined flux `F_i = Σ_j (a−cI)_ij ∂_j u − ½ b_i u` and the physical
    /// correction `−½ b·∇u`; returns the spectrum of `c·Δu + Σ ∂_i F_i` and the
    /// physical-space part.
    fn action_parts(&self, u: &[f64], diffusion: bool, advection: bool) -> (Vec<Complex64>, Option<Vec<f64>>) {
        let s = &*self.spectral;
        let dim = self.grid.dim();
        let len = self.grid.len();
        let uh = s.forward_real(u);
        let mut acc: Vec<Complex64> = if diffusion {
            uh.iter().zip(s.ksq()).map(|(c, k2)| *c * (-self.split * k2)).collect()
        } else {
            vec![Complex64::new(0.0, 0.0); len]
        };
        let use_rem = diffusion && self.remainder.is_some();
        let use_drift = advection && self.drift.is_some();
        if !use_rem && !use_drift {
            return (acc, None);
        }
        let grad = s.gradient_from_spectrum(&uh);
        let mut fluxes = vec![vec![0.0; len]; dim];
        if use_rem {
            let rem = self.remainder.as_ref().unwrap();
            for i in 0..dim {
                for j in 0..dim {
                    let aij = &rem[i * dim + j];
                    for ((f, a), g) in fluxes[i].iter_mut().zip(aij).zip(&grad[j]) {
                        *f += a * g;
                    }
                }
            }
        }
        let mut phys = None;
        if use_drift {
            let b = self.drift.as_ref().unwrap();
            let half = 0.5 * self.drift_sign;
            let mut adv = vec![0.0; len];
            for i in 0..dim {
                for k in 0..len {
                    adv[k] -= half * b[i][k] * grad[i][k];
                    fluxes[i][k] -= half * b[i][k] * u[k];
                }
            }
            phys = Some(adv);
        }
        let refs: Vec<&[f64]> = fluxes.iter().map(|f| f.as_slice()).collect();
        let spectra = s.forward_real_many(&refs);
        for (axis, fh) in spectra.iter().enumerate() {
            let k = s.kdiff(axis);
            for (j, a) in acc.iter_mut().enumerate() {
                *a += Complex64::new(-k[j] * fh[j].im, k[j] * fh[j].re);
            }
        }
        (acc, phys)
    }

    fn finish(&self, parts: (Vec<Complex64>, Option<Vec<f64>>)) -> Vec<f64> {
        let (acc, phys) = parts;
        let mut out = self.spectral.inverse_real(acc);
        if let Some(p) = phys {
            for (o, v) in out.iter_mut().zip(&p) {
                *o += v;
            }
        }
        out
    }

    fn act(&self, u: &[f64], diffusion: bool, advection: bool) -> Vec<f64> {
        match &self.compact {
            Some(st) => st.apply(u, diffusion, advection && st.has_drift(), self.drift_sign),
            None => self.finish(self.action_parts(u, diffusion, advection)),
        }
    }

    /// `L u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.act(u, true, true)
    }

    /// Diffusion part `div(a∇u)`.
    pub fn apply_diffusion(&self, u: &[f64]) -> Vec<f64> {
        self.act(u, true, false)
    }

    /// Advection part `B u = ½(b·∇u + div(bu))` (note: `L = D − B`).
    pub fn apply_advection(&self, u: &[f64]) -> Vec<f64> {
        self.act(u, false, true).into_iter().map(|v| -v).collect()
    }

    /// Symmetric form `Σ⟨∇u, a∇v⟩hⁿ = −⟨div(a∇u), v⟩`.
    pub fn dirichlet_form(&self, u: &[f64], v: &[f64]) -> f64 {
        if let Some(st) = &self.compact {
            return st.dirichlet_form(u, v);
        }
        let s = &*self.spectral;
        let uh = s.forward_real(u);
        let vh = if std::ptr::eq(u, v) { uh.clone() } else { s.forward_real(v) };
        let mut total = self.split * s.gradient_energy(&uh, &vh);
        if let Some(rem) = &self.remainder {
            let dim = self.grid.dim();
            let gu = s.gradient_from_spectrum(&uh);
            let gv = s.gradient_from_spectrum(&vh);
            for i in 0..dim {
                for j in 0..dim {
                    total += rem[i * dim + j]
                        .iter()
                        .zip(&gu[j])
                        .zip(&gv[i])
                        .map(|((a, x), y)| a * x * y)
                        .sum::<f64>();
                }
            }
        }
        total * self.grid.cell_volume()
    }

    /// `‖∇u‖₂²` consistent with the spectral Laplacian.
    pub fn gradient_norm_sq(&self, u: &[f64]) -> f64 {
        let uh = self.spectral.forward_real(u);
        self.spectral.gradient_energy(&uh, &uh) * self.grid.cell_volume()
    }

    fn precondition(&self, shift: f64, scale: f64, v: &[f64]) -> Vec<f64> {
        let s = &*self.spectral;
        let mut vh = s.forward_real(v);
        let c = scale * self.precond_diffusivity;
        let symbol = match &self.compact {
            Some(st) => st.symbol(),
            None => s.ksq(),
        };
        for (x, k2) in vh.iter_mut().zip(symbol) {
            *x /= shift + c * k2;
        }
        s.inverse_real(vh)
    }

    /// Solves `(shift·I − scale·L) x = rhs` with GMRES and a diffusion-only
    /// spectral preconditioner. The mean of `x` is then pinned to
    /// `mean(rhs)/shift`, which the exact solution satisfies because the
    /// generator annihilates the mean.
    pub fn solve_shifted(&self, shift: f64, scale: f64, rhs: &[f64], settings: &SolverSettings) -> Result<(Vec<f64>, SolveStats)> {
        if !(shift > 0.0) {
            return validation(format!("shift must be positive, got {shift}"));
        }
        let mut x = self.precondition(shift, scale, rhs);
        let stats = gmres(
            |v: &[f64]| {
                let lv = self.apply(v);
                v.iter().zip(&lv).map(|(a, b)| shift * a - scale * b).collect()
            },
            |v: &[f64]| self.precondition(shift, scale, v),
            rhs,
            &mut x,
            settings,
        )?;
        let len = x.len() as f64;
        let target = rhs.iter().sum::<f64>() / len / shift;
        let mean = x.iter().sum::<f64>() / len;
        let shift_mean = target - mean;
        for v in x.iter_mut() {
            *v += shift_mean;
        }
        Ok((x, stats))
    }

    /// Same drift, different grid or coefficient is rejected.
    pub fn ensure_compatible(&self, other: &DiscreteOperator) -> Result<()> {
        ensure_same_grid(&self.grid, &other.grid)
    }
}

/// A mollification family `ε_k ↦ L_k`, ordered by strictly decreasing `ε`.
#[derive(Debug, Clone)]
pub struct OperatorFamily {
    epsilons: Vec<f64>,
    operators: Vec<DiscreteOperator>,
}

impl OperatorFamily {
    pub fn new(epsilons: Vec<f64>, operators: Vec<DiscreteOperator>) -> Result<Self> {
        if epsilons.len() != operators.len() || epsilons.is_empty() {
            return validation("family needs one operator per epsilon");
        }
        if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return validation("family epsilons must be strictly decreasing");
        }
        for op in &operators[1..] {
            operators[0].ensure_compatible(op)?;
        }
        Ok(Self { epsilons, operators })
    }

    /// Mollifies `b` at every `ε` and assembles the operators.
    pub fn build(a: &DiffusionCoefficient, b: &VectorField, epsilons: &[f64]) -> Result<Self> {
        let ops = epsilons
            .iter()
            .map(|&eps| {
                let m = crate::field::MollifierSpec::new(eps, b.grid())?;
                assemble(a, &crate::field::mollify(b, &m)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(epsilons.to_vec(), ops)
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn operators(&self) -> &[DiscreteOperator] {
        &self.operators
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub(crate) fn require(&self, min: usize) -> Result<()> {
        if self.len() < min {
            return validation(format!("family has {} members, at least {min} required", self.len()));
        }
        Ok(())
    }
}

/// Which steps of an evolution are kept.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    All,
    Final,
    /// Keep the snapshots at these step indices (plus the initial state).
    Steps(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub dt: f64,
    pub theta: f64,
    pub record: Record,
    pub solver: SolverSettings,
}

impl EvolveOptions {
    pub fn new(dt: f64, theta: f64) -> Self {
        Self { dt, theta, record: Record::All, solver: SolverSettings::default() }
    }

    pub fn record(mut self, record: Record) -> Self {
        self.record = record;
        self
    }
}

/// Snapshots `u(t_j)` of a θ-scheme run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<ScalarField>,
    pub steps: Vec<usize>,
    pub dt: f64,
    pub theta: f64,
    pub scheme: Discretization,
    pub total_steps: usize,
    pub max_iterations: usize,
}

impl Trajectory {
    pub fn initial(&self) -> &ScalarField {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &ScalarField {
        self.snapshots.last().expect("trajectory holds at least the initial state")
    }

    /// True when every step is recorded.
    pub fn is_complete(&self) -> bool {
        self.snapshots.len() == self.total_steps + 1
    }

    pub fn into_final(self) -> ScalarField {
        self.snapshots.into_iter().last().unwrap()
    }
}

/// Number of steps of size `dt` in `horizon`, requiring exact division.
pub(crate) fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && horizon >= 0.0 && horizon.is_finite()) {
        return validation(format!("need dt > 0 and a finite horizon, got dt = {dt}, T = {horizon}"));
    }
    let ratio = horizon / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
        return validation(format!("dt = {dt} does not divide T = {horizon}"));
    }
    Ok(steps as usize)
}

/// θ-scheme `(I − θ·dt·L)u^{j+1} = (I + (1−θ)·dt·L)u^j`, recording every step.
pub fn evolve(op: &DiscreteOperator, u0: &ScalarField, horizon: f64, dt: f64, theta: f64) -> Result<Trajectory> {
    evolve_with(op, u0, horizon, &EvolveOptions::new(dt, theta))
}

pub fn evolve_with(op: &DiscreteOperator, u0: &ScalarField, horizon: f64, opts: &EvolveOptions) -> Result<Trajectory> {
    ensure_same_grid(op.grid(), u0.grid())?;
    if !(0.5..=1.0).contains(&opts.theta) {
        return validation(format!("theta must lie in [1/2, 1], got {}", opts.theta));
    }
    let steps = step_count(horizon, opts.dt)?;
    let dt = opts.dt;
    let theta = opts.theta;
    let keep = |j: usize| match &opts.record {
        Record::All => true,
        Record::Final => j == steps,
        Record::Steps(list) => j == steps || list.contains(&j),
    };

    let grid = *u0.grid();
    let mut times = vec![0.0];
    let mut snapshots = vec![u0.clone()];
    let mut recorded = vec![0];
    let mut u = u0.values().to_vec();
    let mut max_iterations = 0;
    for j in 1..=steps {
        let rhs: Vec<f64> = if theta < 1.0 {
            let lu = op.apply(&u);
            let w = (1.0 - theta) * dt;
            u.iter().zip(&lu).map(|(a, b)| a + w * b).collect()
        } else {
            u.clone()
        };
        let (next, stats) = op.solve_shifted(1.0, theta * dt, &rhs, &opts.solver)?;
        max_iterations = max_iterations.max(stats.iterations);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite { step: j });
        }
        u = next;
        if keep(j) {
            times.push(j as f64 * dt);
            snapshots.push(ScalarField::from_raw(grid, u.clone()));
            recorded.push(j);
        }
    }
    Ok(Trajectory { times, snapshots, steps: recorded, dt, theta, scheme: op.scheme(), total_steps: steps, max_iterations })
}

/// Largest step for which the θ=1 comparison check is asserted: `h²λ/4`.
pub fn comparison_step_limit(grid: &GridSpec, lambda: f64) -> f64 {
    let h = grid.spacing();
    h * h * lambda / 4.0
}

/// `E(u,v) = Σ[⟨∇u, a∇v⟩ + (b·∇u)v]hⁿ` with spectral gradients.
pub fn bilinear_form(a: &DiffusionCoefficient, b: &VectorField, u: &ScalarField, v: &ScalarField) -> Result<f64> {
    ensure_same_grid(a.grid(), b.grid())?;
    ensure_same_grid(a.grid(), u.grid())?;
    ensure_same_grid(a.grid(), v.grid())?;
    // Assembly only needs the certificate for the skew advection; the
    // form itself is defined for any drift.
    let op = DiscreteOperator {
        grid: *a.grid(),
        scheme: Discretization::Spectral,
        compact: None,
        spectral: Arc::new(Spectral::new(*a.grid())),
        split: a.split_constant(),
        precond_diffusivity: a.mean_diffusivity,
        remainder: a.remainder().map(Arc::new),
        drift: None,
        drift_sign: 1.0,
        drift_max: 0.0,
        lambda: a.lambda(),
    };
    Ok(op.dirichlet_form(u.values(), v.values()) + drift_term(&op, b, u, v))
}

/// Skew form `½(⟨b·∇u, v⟩ − ⟨u, b·∇v⟩)`, equal to `∫(b·∇u)v` for
/// divergence-free `b` and exactly antisymmetric on the grid.
fn drift_term(op: &DiscreteOperator, b: &VectorField, u: &ScalarField, v: &ScalarField) -> f64 {
    let directional = |f: &ScalarField| {
        let grad = op.spectral.gradient(f.values());
        (0..f.values().len())
            .map(|k| grad.iter().enumerate().map(|(axis, g)| b.component(axis)[k] * g[k]).sum::<f64>())
            .collect::<Vec<f64>>()
    };
    let bu = directional(u);
    let bv = directional(v);
    let acc: f64 = bu
        .iter()
        .zip(v.values())
        .zip(bv.iter().zip(u.values()))
        .map(|((x, y), (p, q))| x * y - p * q)
        .sum();
    0.5 * acc * u.grid().cell_volume()
}

/// Time quadrature for the dissipation integral in the energy identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeQuadrature {
    /// Trapezoid on the snapshot energies; second-order consistent with θ=½.
    #[default]
    Trapezoid,
    /// Energy of the step-averaged state. For θ=½ this reproduces the
    /// discrete identity exactly, leaving only solver error.
    StateMidpoint,
}

/// Relative defect of `½‖u(T)‖² + ∫₀ᵀ⟨a∇u,∇u⟩ = ½‖u₀‖²`.
pub fn energy_residual(traj: &Trajectory, a: &DiffusionCoefficient) -> Result<f64> {
    energy_residual_with(traj, a, TimeQuadrature::Trapezoid)
}

pub fn energy_residual_with(traj: &Trajectory, a: &DiffusionCoefficient, rule: TimeQuadrature) -> Result<f64> {
    if !traj.is_complete() {
        return validation("energy residual needs a trajectory with every step recorded");
    }
    let u0 = traj.initial();
    ensure_same_grid(a.grid(), u0.grid())?;
    let e0 = 0.5 * u0.l2_norm().powi(2);
    if e0 == 0.0 {
        return Ok(0.0);
    }
    let zero = VectorField::zeros(*a.grid());
    let op = assemble_with(a, &zero, traj.scheme)?;
    let energy = |u: &[f64]| op.dirichlet_form(u, u);
    let mut dissipated = 0.0;
    match rule {
        TimeQuadrature::Trapezoid => {
            let e: Vec<f64> = traj.snapshots.iter().map(|s| energy(s.values())).collect();
            for w in e.windows(2) {
                dissipated += 0.5 * traj.dt * (w[0] + w[1]);
            }
        }
        TimeQuadrature::StateMidpoint => {
            for w in traj.snapshots.windows(2) {
                let mid: Vec<f64> = w[0].values().iter().zip(w[1].values()).map(|(x, y)| 0.5 * (x + y)).collect();
                dissipated += traj.dt * energy(&mid);
            }
        }
    }
    let e_final = 0.5 * traj.last().l2_norm().powi(2);
    Ok((e_final + dissipated - e0).abs() / e0)
}

/// Temporal factor of a test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeWindow {
    /// `cos²(πt/(2T_w))`, vanishing with its derivative at `T_w`.
    CosSquared { horizon: f64 },
}

impl TimeWindow {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeWindow::CosSquared { horizon } => (std::f64::consts::FRAC_PI_2 * t / horizon).cos().powi(2),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeWindow::CosSquared { horizon } => {
                let w = std::f64::consts::FRAC_PI_2 / horizon;
                -w * (2.0 * w * t).sin()
            }
        }
    }
}

/// `φ(t,x) = τ(t)·G(x)` with a Gaussian spatial bump `G`.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub window: TimeWindow,
    pub spatial: ScalarField,
}

impl TestFunction {
    pub fn gaussian(grid: GridSpec, center: &[f64], width: f64, horizon: f64) -> Self {
        Self {
            window: TimeWindow::CosSquared { horizon },
            spatial: ScalarField::gaussian_bump(grid, center, width),
        }
    }

    pub fn zero(grid: GridSpec, horizon: f64) -> Self {
        Self { window: TimeWindow::CosSquared { horizon }, spatial: ScalarField::zeros(grid) }
    }
}

fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; times.len()];
    for j in 0..times.len().saturating_sub(1) {
        let dt = times[j + 1] - times[j];
        w[j] += 0.5 * dt;
        w[j + 1] += 0.5 * dt;
    }
    w
}

/// Defect of the space-time weak formulation against `φ`, normalised by
/// `‖u₀‖₂·‖φ‖_{L²((0,T)×box)}`.
pub fn weak_form_residual(traj: &Trajectory, a: &DiffusionCoefficient, b: &VectorField, phi: &TestFunction) -> Result<f64> {
    if !traj.is_complete() {
        return validation("weak-form residual needs a trajectory with every step recorded");
    }
    let horizon = *traj.times.last().unwrap();
    let end = phi.window.value(horizon);
    if end.abs() > 1e-12 {
        return validation(format!("test function must vanish at the final time, φ(T) factor = {end:.3e}"));
    }
    ensure_same_grid(phi.spatial.grid(), traj.initial().grid())?;
    let g = &phi.spatial;
    let weights = trapezoid_weights(&traj.times);
    let mut total = 0.0;
    let mut tau_sq = 0.0;
    for ((u, &t), &w) in traj.snapshots.iter().zip(&traj.times).zip(&weights) {
        let tau = phi.window.value(t);
        let dtau = phi.window.derivative(t);
        let mass = u.inner(g);
        let form = bilinear_form(a, b, u, g)?;
        total += w * (dtau * mass - tau * form);
        tau_sq += w * tau * tau;
    }
    total += phi.window.value(0.0) * traj.initial().inner(g);
    let norm = traj.initial().l2_norm() * g.l2_norm() * tau_sq.sqrt();
    if norm == 0.0 {
        return Ok(total.abs());
    }
    Ok(total.abs() / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{cellular_vortex, windowed_cellular};

    fn fourier_mode(grid: GridSpec, m: [i64; 2]) -> (ScalarField, f64) {
        let base = 2.0 * std::f64::consts::PI / grid.box_length();
        let k2 = base * base * (m[0] * m[0] + m[1] * m[1]) as f64;
        let f = ScalarField::from_fn(grid, |x| (base * (m[0] as f64 * x[0] + m[1] as f64 * x[1])).cos());
        (f, k2)
    }

    fn random_field(grid: GridSpec, seed: u64) -> ScalarField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ScalarField::new(grid, (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn heat_operator_on_fourier_mode() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let op = assemble(&DiffusionCoefficient::identity(g), &VectorField::zeros(g)).unwrap();
        let (u, k2) = fourier_mode(g, [3, -2]);
        let lu = op.apply(u.values());
        let scale = u.values().iter().fold(0.0f64, |m, v| m.max(v.abs())) * k2;
        for (a, b) in lu.iter().zip(u.values()) {
            assert!((a + k2 * b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn advection_is_skew_and_kills_constants() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let b = cellular_vortex(&g, 1.3, 1).unwrap();
        let op = assemble(&DiffusionCoefficient::identity(g), &b).unwrap();
        let h = g.spacing();
        for seed in 0..100 {
            let u = random_field(g, seed);
            let bu = op.apply_advection(u.values());
            let s: f64 = bu.iter().zip(u.values()).map(|(x, y)| x * y).sum();
            let bound = 1e-12 * u.values().iter().map(|v| v * v).sum::<f64>() * op.drift_max() / h;
            assert!(s.abs() <= bound, "seed {seed}: {s} > {bound}");
        }
        let one = vec![1.0; g.len()];
        assert!(op.apply(&one).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn uncertified_drift_is_refused() {
        let g = GridSpec::new(2, 16, 4.0).unwrap();
        let raw = VectorField::new(g, vec![vec![1.0; g.len()], vec![0.0; g.len()]]).unwrap();
        assert!(matches!(
            assemble(&DiffusionCoefficient::identity(g), &raw),
            Err(LabError::Validation(_))
        ));
        let other = GridSpec::new(2, 32, 4.0).unwrap();
        assert!(matches!(
            assemble(&DiffusionCoefficient::identity(other), &VectorField::zeros(g)),
            Err(LabError::Shape(_))
        ));
    }

    #[test]
    fn anisotropic_coefficient_checks() {
        let g = GridSpec::new(3, 8, 4.0).unwrap();
        let a = DiffusionCoefficient::smooth_anisotropic(g, 0.5, 1.5).unwrap();
        assert!((a.lambda() - 1.0 / 1.5).abs() < 1e-15);
        assert!(a.split_constant() >= a.lambda());
        let n = 3;
        let mut bad: Vec<Vec<f64>> = a.entries().unwrap().to_vec();
        bad[1][5] += 0.1;
        assert!(DiffusionCoefficient::from_entries(g, bad, a.lambda()).is_err());
        let scaled: Vec<Vec<f64>> = (0..n * n)
            .map(|k| vec![if k % (n + 1) == 0 { 3.0 } else { 0.0 }; g.len()])
            .collect();
        assert!(DiffusionCoefficient::from_entries(g, scaled, 0.5).is_err());
    }

    #[test]
    fn eigen_range_closed_form() {
        let m = [2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0];
        let (lo, hi) = symmetric_eigen_range(&m, 3);
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 5.0).abs() < 1e-12);
        let (lo, hi) = symmetric_eigen_range(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12);
    }

    #[test]
    fn variable_diffusion_is_symmetric_negative() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let a = DiffusionCoefficient::smooth_anisotropic(g, 0.8, 1.5).unwrap();
        let op = assemble(&a, &VectorField::zeros(g)).unwrap();
        let u = random_field(g, 1);
        let v = random_field(g, 2);
        let du = op.apply_diffusion(u.values());
        let dv = op.apply_diffusion(v.values());
        let uv: f64 = du.iter().zip(v.values()).map(|(a, b)| a * b).sum();
        let vu: f64 = dv.iter().zip(u.values()).map(|(a, b)| a * b).sum();
        assert!((uv - vu).abs() <= 1e-10 * uv.abs());
        let uu: f64 = du.iter().zip(u.values()).map(|(a, b)| a * b).sum();
        assert!(uu < 0.0);
        // Dirichlet form agrees with −⟨Du, u⟩hⁿ.
        let form = op.dirichlet_form(u.values(), u.values());
        assert!((form + uu * g.cell_volume()).abs() <= 1e-10 * form);
    }

    #[test]
    fn crank_nicolson_mode_decay_is_second_order() {
        let g = GridSpec::new(2, 16, 2.0 * std::f64::consts::PI).unwrap();
        let op = assemble(&DiffusionCoefficient::identity(g), &VectorField::zeros(g)).unwrap();
        let (u0, k2) = fourier_mode(g, [2, 1]);
        let horizon = 0.2;
        let err = |dt: f64| {
            let traj = evolve(&op, &u0, horizon, dt, 0.5).unwrap();
            let exact = u0.scaled((-k2 * horizon).exp());
            traj.last().sub(&exact).unwrap().l2_norm()
        };
        let e1 = err(0.01);
        let e2 = err(0.005);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.1, "observed order {order}");
    }

    #[test]
    fn constants_are_stationary() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let b = windowed_cellular(&g, 2.0, 2.0, 1.5).unwrap();
        let op = assemble(&DiffusionCoefficient::identity(g), &b).unwrap();
        let traj = evolve(&op, &ScalarField::constant(g, 1.0), 0.05, 0.005, 0.5).unwrap();
        for s in &traj.snapshots {
            assert!(s.values().iter().all(|v| (v - 1.0).abs() <= 1e-8));
        }
    }

    #[test]
    fn evolve_validates_inputs() {
        let g = GridSpec::new(2, 16, 4.0).unwrap();
        let op = assemble(&DiffusionCoefficient::identity(g), &VectorField::zeros(g)).unwrap();
        let u0 = ScalarField::constant(g, 1.0);
        assert!(evolve(&op, &u0, 0.1, 0.03, 0.5).is_err());
        assert!(evolve(&op, &u0, 0.1, 0.01, 0.4).is_err());
        assert!(evolve(&op, &ScalarField::zeros(GridSpec::new(2, 8, 4.0).unwrap()), 0.1, 0.01, 0.5).is_err());
    }

    #[test]
    fn solver_failure_is_reported() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let b = cellular_vortex(&g, 20.0, 2).unwrap();
        let op = assemble(&DiffusionCoefficient::identity(g), &b).unwrap();
        let u0 = ScalarField::gaussian_bump(g, &g.center(), 0.4);
        let opts = EvolveOptions {
            solver: SolverSettings { tolerance: 1e-14, restart: 1, max_iterations: 1 },
            ..EvolveOptions::new(0.05, 1.0)
        };
        let err = evolve_with(&op, &u0, 0.1, &opts).unwrap_err();
        assert!(matches!(err, LabError::SolverStagnation { .. }), "{err}");
    }

    #[test]
    fn bilinear_form_examples() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let a = DiffusionCoefficient::smooth_anisotropic(g, 0.6, 1.5).unwrap();
        let b = windowed_cellular(&g, 1.5, 2.0, 1.5).unwrap();
        let zero = VectorField::zeros(g);
        let u = ScalarField::gaussian_bump(g, &[1.7, 2.2, 0.0], 0.5);
        let v = random_field(g, 9);
        let op = assemble(&a, &zero).unwrap();

        let dirichlet = bilinear_form(&a, &zero, &u, &u).unwrap();
        assert!(dirichlet >= a.lambda() * op.gradient_norm_sq(u.values()) * (1.0 - 1e-10));

        let with_drift = bilinear_form(&a, &b, &u, &u).unwrap();
        assert!((with_drift - dirichlet).abs() <= 1e-10 * dirichlet);

        let sym = bilinear_form(&a, &b, &u, &v).unwrap() + bilinear_form(&a, &b, &v, &u).unwrap();
        let twice = 2.0 * op.dirichlet_form(u.values(), v.values());
        assert!((sym - twice).abs() <= 1e-10 * twice.abs().max(dirichlet));
    }

    #[test]
    fn energy_residual_degenerate_and_exact_midpoint() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let a = DiffusionCoefficient::identity(g);
        let b = windowed_cellular(&g, 2.0, 2.0, 1.5).unwrap();
        let op = assemble(&a, &b).unwrap();
        let zero = evolve(&op, &ScalarField::zeros(g), 0.02, 0.01, 0.5).unwrap();
        assert_eq!(energy_residual(&zero, &a).unwrap(), 0.0);

        let u0 = ScalarField::gaussian_bump(g, &[1.5, 2.5, 0.0], 0.4);
        let traj = evolve(&op, &u0, 0.05, 0.005, 0.5).unwrap();
        let exact = energy_residual_with(&traj, &a, TimeQuadrature::StateMidpoint).unwrap();
        assert!(exact < 1e-9, "{exact}");
        let partial = evolve_with(&op, &u0, 0.05, &EvolveOptions::new(0.005, 0.5).record(Record::Final)).unwrap();
        assert!(energy_residual(&partial, &a).is_err());
    }

    #[test]
    fn weak_form_zero_and_validation() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let a = DiffusionCoefficient::identity(g);
        let b = windowed_cellular(&g, 1.0, 2.0, 1.5).unwrap();
        let op = assemble(&a, &b).unwrap();
        let u0 = ScalarField::gaussian_bump(g, &g.center(), 0.5);
        let traj = evolve(&op, &u0, 0.05, 0.005, 0.5).unwrap();
        assert_eq!(weak_form_residual(&traj, &a, &b, &TestFunction::zero(g, 0.05)).unwrap(), 0.0);
        let late = TestFunction::gaussian(g, &g.center(), 0.5, 0.08);
        assert!(weak_form_residual(&traj, &a, &b, &late).is_err());
    }

    #[test]
    fn compact_scheme_is_positive_and_conservative() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let b = windowed_cellular(&g, 3.0, 2.0, 1.5).unwrap();
        let a = DiffusionCoefficient::identity(g);
        let op = assemble_with(&a, &b, Discretization::Compact).unwrap();
        assert!(op.drift_max() * g.spacing() <= 2.0);
        let u0 = ScalarField::delta(g, &g.center_index()).scaled(g.cell_volume());
        let dt = comparison_step_limit(&g, a.lambda());
        let traj = evolve(&op, &u0, 40.0 * dt, dt, 1.0).unwrap();
        for s in &traj.snapshots {
            assert!(s.min() >= 0.0, "negative value {}", s.min());
            assert!((s.mass() - u0.mass()).abs() <= 1e-12 * u0.mass());
        }
        for seed in 0..20 {
            let u = random_field(g, seed);
            let bu = op.apply_advection(u.values());
            let ip: f64 = bu.iter().zip(u.values()).map(|(x, y)| x * y).sum();
            assert!(ip.abs() <= 1e-12 * u.values().iter().map(|v| v * v).sum::<f64>() * op.drift_max() / g.spacing());
        }
        let one = vec![1.0; g.len()];
        assert!(op.apply(&one).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn compact_scheme_energy_identity() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let b = windowed_cellular(&g, 2.0, 2.0, 1.5).unwrap();
        let a = DiffusionCoefficient::identity(g);
        let op = assemble_with(&a, &b, Discretization::Compact).unwrap();
        let u0 = ScalarField::gaussian_bump(g, &[1.6, 2.3, 0.0], 0.4);
        let traj = evolve(&op, &u0, 0.05, 0.005, 0.5).unwrap();
        assert!(energy_residual_with(&traj, &a, TimeQuadrature::StateMidpoint).unwrap() < 1e-9);
        let full = DiffusionCoefficient::smooth_anisotropic(g, 0.5, 1.5).unwrap();
        assert!(assemble_with(&full, &b, Discretization::Compact).is_err());
    }
}
