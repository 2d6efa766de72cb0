//! Elliptic problems `(α − L)u = f` and the estimates they satisfy.

use rayon::prelude::*;

use crate::error::{validation, Result};
use crate::field::{ensure_same_grid, ScalarField, VectorField};
use crate::grid::GridSpec;
use crate::krylov::SolverSettings;
use crate::pde::{bilinear_form, DiffusionCoefficient, DiscreteOperator, OperatorFamily};

/// Slack factor applied to every norm bound.
pub const BOUND_SLACK: f64 = 1.0 + 1e-8;

/// `u = (α − L)⁻¹ f` together with the norms the bounds are stated in.
#[derive(Debug, Clone)]
pub struct ResolventResult {
    pub alpha: f64,
    pub u: ScalarField,
    pub f: ScalarField,
    /// True relative residual `‖(α−L)u − f‖₂ / ‖f‖₂`.
    pub residual: f64,
    pub iterations: usize,
    pub u_l2: f64,
    /// `‖∇u‖₂`.
    pub u_gradient: f64,
    pub f_l2: f64,
    /// `Σ⟨∇u, a∇u⟩hⁿ` from the operator's own form.
    pub dirichlet: f64,
}

impl ResolventResult {
    pub fn u_h1(&self) -> f64 {
        (self.u_l2 * self.u_l2 + self.u_gradient * self.u_gradient).sqrt()
    }
}

pub fn resolve(op: &DiscreteOperator, alpha: f64, f: &ScalarField) -> Result<ResolventResult> {
    resolve_with(op, alpha, f, &SolverSettings::default())
}

pub fn resolve_with(op: &DiscreteOperator, alpha: f64, f: &ScalarField, settings: &SolverSettings) -> Result<ResolventResult> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return validation(format!("spectral shift alpha must be positive, got {alpha}"));
    }
    ensure_same_grid(op.grid(), f.grid())?;
    let (u, stats) = op.solve_shifted(alpha, 1.0, f.values(), settings)?;
    let lu = op.apply(&u);
    let res: f64 = lu
        .iter()
        .zip(&u)
        .zip(f.values())
        .map(|((l, x), b)| (alpha * x - l - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let fnorm = f.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    let residual = if fnorm == 0.0 { 0.0 } else { res / fnorm };
    let dirichlet = op.dirichlet_form(&u, &u);
    let u_gradient = op.gradient_norm_sq(&u).sqrt();
    let u = ScalarField::new(*f.grid(), u)?;
    Ok(ResolventResult {
        alpha,
        u_l2: u.l2_norm(),
        f_l2: f.l2_norm(),
        u,
        f: f.clone(),
        residual,
        iterations: stats.iterations,
        u_gradient,
        dirichlet,
    })
}

/// Ratios of the computed norms to the two resolvent estimates and to the
/// energy inequality behind them; each should be at most one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventBounds {
    /// `α‖u‖₂ / ‖f‖₂`.
    pub l2_ratio: f64,
    /// `min{λ, α}·‖u‖_{H¹} / ‖f‖₂`.
    pub h1_ratio: f64,
    /// `(λ‖∇u‖² + α‖u‖²) / (‖f‖‖u‖)`.
    pub energy_ratio: f64,
}

impl ResolventBounds {
    pub fn holds(&self) -> bool {
        self.l2_ratio <= BOUND_SLACK && self.h1_ratio <= BOUND_SLACK && self.energy_ratio <= BOUND_SLACK
    }
}

pub fn resolvent_bounds(r: &ResolventResult, lambda: f64) -> ResolventBounds {
    if r.f_l2 == 0.0 {
        return ResolventBounds { l2_ratio: 0.0, h1_ratio: 0.0, energy_ratio: 0.0 };
    }
    let energy = lambda * r.u_gradient * r.u_gradient + r.alpha * r.u_l2 * r.u_l2;
    let energy_ratio = if r.u_l2 == 0.0 { 0.0 } else { energy / (r.f_l2 * r.u_l2) };
    ResolventBounds {
        l2_ratio: r.alpha * r.u_l2 / r.f_l2,
        h1_ratio: lambda.min(r.alpha) * r.u_h1() / r.f_l2,
        energy_ratio,
    }
}

/// `|E(u,v) + α(u,v) − (f,v)| / (‖f‖₂‖v‖₂)`.
pub fn resolvent_identity_residual(r: &ResolventResult, a: &DiffusionCoefficient, b: &VectorField, v: &ScalarField) -> Result<f64> {
    let scale = r.f_l2 * v.l2_norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let e = bilinear_form(a, b, &r.u, v)?;
    Ok((e + r.alpha * r.u.inner(v) - r.f.inner(v)).abs() / scale)
}

/// `[ln(|x − x_c|² + e)]^{2γ_w}` about the box center, with minimum-image
/// distance so the weight is continuous across the periodic seam.
#[derive(Debug, Clone)]
pub struct LogWeight {
    gamma_w: f64,
    field: ScalarField,
}

impl LogWeight {
    pub fn new(grid: GridSpec, gamma_w: f64) -> Result<Self> {
        if !(gamma_w >= 0.0 && gamma_w.is_finite()) {
            return validation(format!("weight exponent must be non-negative, got {gamma_w}"));
        }
        let center = grid.center();
        let values = (0..grid.len())
            .map(|flat| {
                let r = grid.distance(flat, &center);
                (r * r + std::f64::consts::E).ln().powf(2.0 * gamma_w)
            })
            .collect();
        Ok(Self { gamma_w, field: ScalarField::new(grid, values)? })
    }

    pub fn gamma_w(&self) -> f64 {
        self.gamma_w
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }
}

/// `Σ w·u² / Σ w·f²` for `u = (1 − L)⁻¹ f`.
pub fn log_weighted_ratio(r: &ResolventResult, w: &LogWeight) -> Result<f64> {
    if (r.alpha - 1.0).abs() > 1e-12 {
        return validation(format!("weighted estimate is normalised at alpha = 1, got {}", r.alpha));
    }
    ensure_same_grid(w.field.grid(), r.u.grid())?;
    let weighted = |s: &ScalarField| -> f64 { s.values().iter().zip(w.field.values()).map(|(x, wt)| wt * x * x).sum() };
    let den = weighted(&r.f);
    if den == 0.0 {
        return validation("weighted ratio is undefined for f = 0");
    }
    Ok(weighted(&r.u) / den)
}

/// `Σ_{|x − x_c| > r} u² hⁿ`.
pub fn tail_mass(u: &ScalarField, radius: f64) -> Result<f64> {
    let grid = u.grid();
    if !(radius >= 0.0 && radius < 0.5 * grid.box_length()) {
        return validation(format!("tail radius must lie in [0, L/2), got {radius}"));
    }
    let center = grid.center();
    let total: f64 = u
        .values()
        .iter()
        .enumerate()
        .filter(|(flat, _)| grid.distance(*flat, &center) > radius)
        .map(|(_, v)| v * v)
        .sum();
    Ok(total * grid.cell_volume())
}

/// Resolvents over a mollification family with their successive differences.
#[derive(Debug, Clone)]
pub struct ResolventConvergence {
    pub epsilons: Vec<f64>,
    pub results: Vec<ResolventResult>,
    /// `‖u_{ε_k} − u_{ε_{k+1}}‖₂`.
    pub cauchy: Vec<f64>,
    /// `‖u_{ε_k} − u_{ε_last}‖₂`.
    pub to_reference: Vec<f64>,
}

pub fn resolvent_convergence(family: &OperatorFamily, alpha: f64, f: &ScalarField) -> Result<ResolventConvergence> {
    family.require(3)?;
    let results = family
        .operators()
        .par_iter()
        .map(|op| resolve(op, alpha, f))
        .collect::<Result<Vec<_>>>()?;
    let diff = |a: &ResolventResult, b: &ResolventResult| a.u.sub(&b.u).map(|d| d.l2_norm());
    let cauchy = results.windows(2).map(|w| diff(&w[0], &w[1])).collect::<Result<Vec<_>>>()?;
    let last = results.last().unwrap();
    let to_reference = results.iter().map(|r| diff(r, last)).collect::<Result<Vec<_>>>()?;
    Ok(ResolventConvergence { epsilons: family.epsilons().to_vec(), results, cauchy, to_reference })
}

/// `((n/t)·R_{n/t})ⁿ u₀`: `n` implicit Euler steps of size `t/n`.
pub fn semigroup_via_resolvent(op: &DiscreteOperator, u0: &ScalarField, t: f64, n: usize) -> Result<ScalarField> {
    if n == 0 || !(t > 0.0) {
        return validation(format!("need n >= 1 and t > 0, got n = {n}, t = {t}"));
    }
    ensure_same_grid(op.grid(), u0.grid())?;
    let settings = SolverSettings::default();
    let mut u = u0.values().to_vec();
    for _ in 0..n {
        u = op.solve_shifted(1.0, t / n as f64, &u, &settings)?.0;
    }
    ScalarField::new(*u0.grid(), u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ladder, windowed_cellular};
    use crate::pde::{assemble, evolve};

    fn fourier(grid: GridSpec, m: [f64; 2]) -> (ScalarField, f64) {
        let base = 2.0 * std::f64::consts::PI / grid.box_length();
        let k2 = base * base * (m[0] * m[0] + m[1] * m[1]);
        (ScalarField::from_fn(grid, |x| (base * (m[0] * x[0] + m[1] * x[1])).sin()), k2)
    }

    fn heat(grid: GridSpec) -> DiscreteOperator {
        assemble(&DiffusionCoefficient::identity(grid), &VectorField::zeros(grid)).unwrap()
    }

    #[test]
    fn fourier_mode_resolvent() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let (f, k2) = fourier(g, [2.0, 3.0]);
        for alpha in [0.1, 1.0, 10.0] {
            let r = resolve(&heat(g), alpha, &f).unwrap();
            let exact = f.scaled(1.0 / (alpha + k2));
            assert!(r.u.sub(&exact).unwrap().l2_norm() <= 1e-10 * exact.l2_norm());
            let bounds = resolvent_bounds(&r, 1.0);
            assert!((bounds.l2_ratio - alpha / (alpha + k2)).abs() < 1e-9);
            assert!(bounds.holds());
        }
    }

    #[test]
    fn zero_source_and_bad_alpha() {
        let g = GridSpec::new(2, 16, 4.0).unwrap();
        let r = resolve(&heat(g), 1.0, &ScalarField::zeros(g)).unwrap();
        assert!(r.u.values().iter().all(|v| *v == 0.0));
        assert!(resolve(&heat(g), 0.0, &ScalarField::zeros(g)).is_err());
        assert!(resolve(&heat(g), -1.0, &ScalarField::zeros(g)).is_err());
    }

    #[test]
    fn identity_residual_with_vortex() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let a = DiffusionCoefficient::identity(g);
        let b = windowed_cellular(&g, 2.0, 2.0, 1.5).unwrap();
        let op = assemble(&a, &b).unwrap();
        let f = ScalarField::gaussian_bump(g, &[1.5, 2.5, 0.0], 0.4);
        let v = ScalarField::gaussian_bump(g, &[2.5, 2.0, 0.0], 0.6);
        let r = resolve(&op, 1.0, &f).unwrap();
        assert!(r.residual <= 1e-10);
        assert!(resolvent_identity_residual(&r, &a, &b, &v).unwrap() <= 1e-9);
        assert_eq!(resolvent_identity_residual(&r, &a, &b, &ScalarField::zeros(g)).unwrap(), 0.0);
    }

    #[test]
    fn weight_and_tail() {
        let g = GridSpec::new(2, 64, 8.0).unwrap();
        let w = LogWeight::new(g, 0.1).unwrap();
        assert!(w.field().min() >= 1.0);
        let flat = LogWeight::new(g, 0.0).unwrap();
        assert!(flat.field().values().iter().all(|v| *v == 1.0));

        // Gaussian u = exp(-|x|²/(2σ²)); ∫_{|x|>r} u² = πσ² exp(-r²/σ²).
        let sigma = 0.6;
        let c = g.center();
        let u = ScalarField::from_fn(g, |x| {
            let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
            (-d2 / (2.0 * sigma * sigma)).exp()
        });
        let r = 3.0 * sigma / 2f64.sqrt();
        let exact = std::f64::consts::PI * sigma * sigma * (-r * r / (sigma * sigma)).exp();
        let tail = tail_mass(&u, r).unwrap();
        assert!((tail / exact - 1.0).abs() < 0.05, "{tail} vs {exact}");
        let narrow = ScalarField::gaussian_bump(g, &c, 0.05);
        let support_cut = ScalarField::from_fn(g, |x| {
            let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
            if d2 < 0.25 { 1.0 } else { 0.0 }
        });
        assert_eq!(tail_mass(&support_cut, 1.0).unwrap(), 0.0);
        assert!(tail_mass(&narrow, 4.0).is_err());
    }

    #[test]
    fn weighted_ratio_reduces_to_l2_bound() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let b = windowed_cellular(&g, 2.0, 2.0, 1.5).unwrap();
        let op = assemble(&DiffusionCoefficient::identity(g), &b).unwrap();
        let f = ScalarField::gaussian_bump(g, &[1.5, 2.5, 0.0], 0.4);
        let r = resolve(&op, 1.0, &f).unwrap();
        let ratio = log_weighted_ratio(&r, &LogWeight::new(g, 0.0).unwrap()).unwrap();
        assert!(ratio <= BOUND_SLACK);
        let r2 = resolve(&op, 2.0, &f).unwrap();
        assert!(log_weighted_ratio(&r2, &LogWeight::new(g, 0.1).unwrap()).is_err());
        let r0 = resolve(&op, 1.0, &ScalarField::zeros(g)).unwrap();
        assert!(log_weighted_ratio(&r0, &LogWeight::new(g, 0.1).unwrap()).is_err());
    }

    #[test]
    fn first_resolvent_identity() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let b = windowed_cellular(&g, 2.0, 2.0, 1.5).unwrap();
        let op = assemble(&DiffusionCoefficient::identity(g), &b).unwrap();
        let f = ScalarField::gaussian_bump(g, &[1.5, 2.5, 0.0], 0.4);
        for (alpha, beta) in [(0.5, 1.0), (1.0, 2.0), (0.5, 2.0)] {
            let ra = resolve(&op, alpha, &f).unwrap();
            let rb = resolve(&op, beta, &f).unwrap();
            let rab = resolve(&op, alpha, &rb.u).unwrap();
            let lhs = ra.u.sub(&rb.u).unwrap();
            let rhs = rab.u.scaled(beta - alpha);
            assert!(lhs.sub(&rhs).unwrap().l2_norm() <= 1e-8 * lhs.l2_norm());
        }
    }

    #[test]
    fn implicit_euler_iteration_on_mode() {
        let g = GridSpec::new(2, 16, 2.0 * std::f64::consts::PI).unwrap();
        let (u0, k2) = fourier(g, [1.0, 1.0]);
        let t = 0.5;
        for n in [1, 4, 16] {
            let u = semigroup_via_resolvent(&heat(g), &u0, t, n).unwrap();
            let factor = (1.0 + k2 * t / n as f64).powi(-(n as i32));
            assert!(u.sub(&u0.scaled(factor)).unwrap().l2_norm() <= 1e-9 * u0.l2_norm());
        }
        let one = ScalarField::constant(g, 1.0);
        let u = semigroup_via_resolvent(&heat(g), &one, t, 8).unwrap();
        assert!(u.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(semigroup_via_resolvent(&heat(g), &one, t, 0).is_err());
    }

    #[test]
    fn resolvent_iteration_approaches_time_stepping() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let b = windowed_cellular(&g, 2.0, 2.0, 1.5).unwrap();
        let op = assemble(&DiffusionCoefficient::identity(g), &b).unwrap();
        let u0 = ScalarField::gaussian_bump(g, &[1.5, 2.5, 0.0], 0.4);
        let reference = evolve(&op, &u0, 0.1, 0.001, 0.5).unwrap().into_final();
        let errs: Vec<f64> = [16, 64, 256]
            .iter()
            .map(|&n| semigroup_via_resolvent(&op, &u0, 0.1, n).unwrap().sub(&reference).unwrap().l2_norm())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2]);
        assert!(errs[2] <= 0.02 * u0.l2_norm());
    }

    #[test]
    fn family_needs_three_members() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let a = DiffusionCoefficient::identity(g);
        let b = windowed_cellular(&g, 2.0, 2.0, 1.5).unwrap();
        let f = ScalarField::gaussian_bump(g, &g.center(), 0.4);
        let short = OperatorFamily::build(&a, &b, &ladder(0.4, 1)).unwrap();
        assert!(resolvent_convergence(&short, 1.0, &f).is_err());
        let fam = OperatorFamily::build(&a, &b, &ladder(0.4, 2)).unwrap();
        let conv = resolvent_convergence(&fam, 1.0, &f).unwrap();
        assert_eq!(conv.cauchy.len(), 2);
        assert_eq!(*conv.to_reference.last().unwrap(), 0.0);
    }
}
