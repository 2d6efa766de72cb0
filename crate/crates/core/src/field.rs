//! Scalar and vector fields on a periodic grid, and the divergence-free
//! toolkit: stream-function construction, spectral divergence, Leray
//! projection, Gaussian mollification and sampled Lebesgue norms.

use rustfft::num_complex::Complex64;

use crate::error::{validation, LabError, Result};
use crate::grid::GridSpec;
use crate::spectral::Spectral;

/// Relative divergence level below which a field counts as divergence-free.
pub const DIV_FREE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::Shape(format!(
                "scalar field has {} samples, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return validation(format!("scalar field sample {i} is not finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    /// Samples `f` at every grid coordinate.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coordinate(i))).collect();
        Self { grid, values }
    }

    /// Discrete delta `h⁻ⁿ·1_{x=y}` at the grid point with multi-index `at`.
    pub fn delta(grid: GridSpec, at: &[usize]) -> Self {
        let mut values = vec![0.0; grid.len()];
        values[grid.flat_index(at)] = 1.0 / grid.cell_volume();
        Self { grid, values }
    }

    /// Isotropic Gaussian bump `exp(-|x-c|²/(2w²))` using periodic distance.
    pub fn gaussian_bump(grid: GridSpec, center: &[f64], width: f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let r = grid.distance(i, center);
                (-r * r / (2.0 * width * width)).exp()
            })
            .collect();
        Self { grid, values }
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `Σ u·hⁿ`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_volume()
    }

    /// `Σ u·v·hⁿ`.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(Self::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(Self::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        ))
    }
}

/// Outcome of measuring the discrete divergence of a vector field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceCheck {
    pub max_divergence: f64,
    pub max_magnitude: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    components: Vec<Vec<f64>>,
    check: Option<DivergenceCheck>,
}

impl VectorField {
    pub fn new(grid: GridSpec, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(LabError::Shape(format!(
                "vector field has {} components on a {}-dimensional grid",
                components.len(),
                grid.dim()
            )));
        }
        for (axis, c) in components.iter().enumerate() {
            if c.len() != grid.len() {
                return Err(LabError::Shape(format!(
                    "component {axis} has {} samples, grid needs {}",
                    c.len(),
                    grid.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return validation(format!("component {axis} has non-finite samples"));
            }
        }
        Ok(Self { grid, components, check: None })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::from_raw(grid, vec![vec![0.0; grid.len()]; grid.dim()]).certify()
    }

    /// Constant field `c`; constants are exactly divergence-free on the torus.
    pub fn constant(grid: GridSpec, c: &[f64]) -> Result<Self> {
        if c.len() != grid.dim() {
            return Err(LabError::Shape("constant vector has wrong length".into()));
        }
        Ok(Self::from_raw(grid, c.iter().map(|&v| vec![v; grid.len()]).collect()).certify())
    }

    fn from_raw(grid: GridSpec, components: Vec<Vec<f64>>) -> Self {
        Self { grid, components, check: None }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn divergence_check(&self) -> Option<DivergenceCheck> {
        self.check
    }

    pub fn is_certified(&self) -> bool {
        self.check.map(|c| c.certified).unwrap_or(false)
    }

    pub fn magnitude_at(&self, flat: usize) -> f64 {
        self.components.iter().map(|c| c[flat] * c[flat]).sum::<f64>().sqrt()
    }

    pub fn max_magnitude(&self) -> f64 {
        (0..self.grid.len()).map(|i| self.magnitude_at(i)).fold(0.0, f64::max)
    }

    /// Measures the spectral divergence and records whether it is below
    /// `DIV_FREE_TOLERANCE · max|b|`.
    pub fn certify(mut self) -> Self {
        let spectral = Spectral::new(self.grid);
        self.check = Some(measure_divergence(&spectral, &self));
        self
    }

    pub fn scaled(&self, c: f64) -> Self {
        let components = self
            .components
            .iter()
            .map(|comp| comp.iter().map(|v| c * v).collect())
            .collect();
        // Scaling preserves the ratio max|div| / max|b|.
        let check = self.check.map(|chk| DivergenceCheck {
            max_divergence: chk.max_divergence * c.abs(),
            max_magnitude: chk.max_magnitude * c.abs(),
            certified: chk.certified,
        });
        Self { grid: self.grid, components, check }
    }

    pub fn sub(&self, other: &VectorField) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Ok(Self::from_raw(self.grid, components))
    }

    pub fn add(&self, other: &VectorField) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Ok(Self::from_raw(self.grid, components))
    }

    /// `(Σ |a-b|² hⁿ)^{1/2}` with pointwise Euclidean magnitude.
    pub fn l2_distance(&self, other: &VectorField) -> Result<f64> {
        let d = self.sub(other)?;
        lebesgue_norm(&d, 2.0)
    }
}

fn measure_divergence(spectral: &Spectral, b: &VectorField) -> DivergenceCheck {
    let refs: Vec<&[f64]> = b.components.iter().map(|c| c.as_slice()).collect();
    let div = spectral.divergence(&refs);
    let max_divergence = div.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_magnitude = b.max_magnitude();
    DivergenceCheck {
        max_divergence,
        max_magnitude,
        certified: max_divergence <= DIV_FREE_TOLERANCE * max_magnitude,
    }
}

pub(crate) fn ensure_same_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a != b {
        return Err(LabError::Shape(format!("grid mismatch: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// Pointwise magnitudes for norm evaluation; vector fields use the
/// Euclidean magnitude.
pub trait Magnitudes {
    fn grid(&self) -> &GridSpec;
    fn magnitudes(&self) -> Vec<f64>;
}

impl Magnitudes for ScalarField {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.abs()).collect()
    }
}

impl Magnitudes for VectorField {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn magnitudes(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.magnitude_at(i)).collect()
    }
}

/// Sampled `Lᵖ` norm `(Σ|f|ᵖ hⁿ)^{1/p}`; `p = ∞` gives the maximum.
pub fn lebesgue_norm<F: Magnitudes + ?Sized>(f: &F, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return validation(format!("Lebesgue exponent must be >= 1, got {p}"));
    }
    let mags = f.magnitudes();
    if p.is_infinite() {
        return Ok(mags.iter().copied().fold(0.0, f64::max));
    }
    // Scale by the maximum to avoid overflow for large p.
    let peak = mags.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = mags.iter().map(|m| (m / peak).powf(p)).sum();
    Ok(peak * (sum * f.grid().cell_volume()).powf(1.0 / p))
}

/// Potential from which a divergence-free field is derived.
#[derive(Debug, Clone)]
pub enum Potential {
    /// 2D stream function `ψ`, giving `b = (-∂₂ψ, ∂₁ψ)`.
    Stream(ScalarField),
    /// 3D vector potential `A`, giving `b = curl A`.
    Vector([ScalarField; 3]),
}

/// Rejects samples whose periodic seam jump dwarfs every interior jump.
fn check_periodic(f: &ScalarField) -> Result<()> {
    let grid = f.grid;
    let n = grid.points();
    let v = &f.values;
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for axis in 0..grid.dim() {
        let stride = grid.stride(axis);
        let mut seam = 0.0f64;
        let mut interior = 0.0f64;
        for flat in 0..grid.len() {
            if grid.multi_index(flat)[axis] != 0 {
                continue;
            }
            for j in 0..n - 1 {
                let d = (v[flat + (j + 1) * stride] - v[flat + j * stride]).abs();
                interior = interior.max(d);
            }
            seam = seam.max((v[flat] - v[flat + (n - 1) * stride]).abs());
        }
        if seam > 4.0 * interior + 1e-12 * scale {
            return validation(format!(
                "potential must be periodic-smooth: jump {seam:.3e} across the seam of axis {axis} \
                 exceeds interior jumps ({interior:.3e})"
            ));
        }
    }
    Ok(())
}

/// Builds `b = ∇^⊥ψ` (2D) or `b = curl A` (3D) spectrally; the result is
/// certified divergence-free.
pub fn stream_to_field(potential: &Potential, grid: &GridSpec) -> Result<VectorField> {
    let spectral = Spectral::new(*grid);
    let field = match potential {
        Potential::Stream(psi) => {
            if grid.dim() != 2 {
                return Err(LabError::Shape("stream function requires a 2D grid".into()));
            }
            ensure_same_grid(grid, &psi.grid)?;
            check_periodic(psi)?;
            let spec = spectral.forward_real(&psi.values);
            let d1 = spectral.derivative_symbol(&spec, 0);
            let d2 = spectral.derivative_symbol(&spec, 1);
            let (dpsi1, dpsi2) = spectral.inverse_real_pair(&d1, &d2);
            let b1 = dpsi2.into_iter().map(|v| -v).collect();
            VectorField::from_raw(*grid, vec![b1, dpsi1])
        }
        Potential::Vector(a) => {
            if grid.dim() != 3 {
                return Err(LabError::Shape("vector potential requires a 3D grid".into()));
            }
            for comp in a {
                ensure_same_grid(grid, &comp.grid)?;
                check_periodic(comp)?;
            }
            let refs: Vec<&[f64]> = a.iter().map(|c| c.values.as_slice()).collect();
            let s = spectral.forward_real_many(&refs);
            let sub = |x: Vec<Complex64>, y: Vec<Complex64>| -> Vec<Complex64> {
                x.into_iter().zip(y).map(|(p, q)| p - q).collect()
            };
            let c1 = sub(spectral.derivative_symbol(&s[2], 1), spectral.derivative_symbol(&s[1], 2));
            let c2 = sub(spectral.derivative_symbol(&s[0], 2), spectral.derivative_symbol(&s[2], 0));
            let c3 = sub(spectral.derivative_symbol(&s[1], 0), spectral.derivative_symbol(&s[0], 1));
            VectorField::from_raw(*grid, spectral.inverse_real_many(&[c1, c2, c3]))
        }
    };
    let mut field = field;
    field.check = Some(measure_divergence(&spectral, &field));
    Ok(field)
}

/// Spectral divergence `Σᵢ ∂ᵢbᵢ`.
pub fn divergence(b: &VectorField) -> ScalarField {
    let spectral = Spectral::new(b.grid);
    let refs: Vec<&[f64]> = b.components.iter().map(|c| c.as_slice()).collect();
    ScalarField::from_raw(b.grid, spectral.divergence(&refs))
}

/// Removes the gradient part: `v − ∇Δ⁻¹ div v` in Fourier space.
pub fn leray_project(v: &VectorField) -> VectorField {
    let spectral = Spectral::new(v.grid);
    let dim = v.grid.dim();
    let refs: Vec<&[f64]> = v.components.iter().map(|c| c.as_slice()).collect();
    let mut spectra = spectral.forward_real_many(&refs);
    let kd: Vec<&[f64]> = (0..dim).map(|a| spectral.kdiff(a)).collect();
    for j in 0..v.grid.len() {
        let k2: f64 = kd.iter().map(|k| k[j] * k[j]).sum();
        if k2 == 0.0 {
            continue;
        }
        let mut dot = Complex64::new(0.0, 0.0);
        for axis in 0..dim {
            dot += spectra[axis][j] * kd[axis][j];
        }
        let dot = dot / k2;
        for axis in 0..dim {
            spectra[axis][j] -= dot * kd[axis][j];
        }
    }
    let mut out = VectorField::from_raw(v.grid, spectral.inverse_real_many(&spectra));
    out.check = Some(measure_divergence(&spectral, &out));
    out
}

/// Gaussian mollifier scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    epsilon: f64,
}

impl MollifierSpec {
    pub fn new(epsilon: f64, grid: &GridSpec) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return validation(format!("mollifier epsilon must be positive, got {epsilon}"));
        }
        if epsilon >= grid.box_length() / 4.0 {
            return validation(format!(
                "mollifier epsilon {epsilon} must be below box_length/4 = {}",
                grid.box_length() / 4.0
            ));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// The `k`-th rung of the ladder `ε_k = ε₀·2^{-k}`.
pub fn ladder(epsilon0: f64, halvings: usize) -> Vec<f64> {
    (0..=halvings).map(|k| epsilon0 * 0.5f64.powi(k as i32)).collect()
}

/// Applies the Fourier multiplier `exp(-ε²|k|²/2)` to every component.
pub fn mollify(b: &VectorField, m: &MollifierSpec) -> Result<VectorField> {
    if m.epsilon >= b.grid.box_length() / 4.0 {
        return validation("mollifier epsilon too large for this grid");
    }
    let spectral = Spectral::new(b.grid);
    let refs: Vec<&[f64]> = b.components.iter().map(|c| c.as_slice()).collect();
    let mut spectra = spectral.forward_real_many(&refs);
    let e2 = 0.5 * m.epsilon * m.epsilon;
    let mult: Vec<f64> = spectral.ksq().iter().map(|k2| (-e2 * k2).exp()).collect();
    for s in spectra.iter_mut() {
        for (c, w) in s.iter_mut().zip(&mult) {
            *c *= *w;
        }
    }
    let mut out = VectorField::from_raw(b.grid, spectral.inverse_real_many(&spectra));
    out.check = Some(measure_divergence(&spectral, &out));
    Ok(out)
}

/// Mollifies a scalar field with the same multiplier.
pub fn mollify_scalar(f: &ScalarField, m: &MollifierSpec) -> ScalarField {
    let spectral = Spectral::new(f.grid);
    let mut s = spectral.forward_real(&f.values);
    let e2 = 0.5 * m.epsilon * m.epsilon;
    for (c, k2) in s.iter_mut().zip(spectral.ksq()) {
        *c *= (-e2 * k2).exp();
    }
    ScalarField::from_raw(f.grid, spectral.inverse_real(s))
}

/// `C^∞` step: 1 for `r ≤ inner`, 0 for `r ≥ outer`.
pub fn smooth_cutoff(r: f64, inner: f64, outer: f64) -> f64 {
    if r <= inner {
        return 1.0;
    }
    if r >= outer {
        return 0.0;
    }
    let t = (r - inner) / (outer - inner);
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let a = f(1.0 - t);
    a / (a + f(t))
}

fn potential_from_radial(grid: &GridSpec, profile: impl Fn(f64) -> f64) -> Potential {
    let center = grid.center();
    let psi = ScalarField::from_raw(
        *grid,
        (0..grid.len()).map(|i| profile(grid.distance(i, &center))).collect(),
    );
    match grid.dim() {
        2 => Potential::Stream(psi),
        _ => {
            let z = ScalarField::zeros(*grid);
            Potential::Vector([z.clone(), z, psi])
        }
    }
}

/// Full-box cellular flow from `ψ = A·sin(2πmx₁/L)·sin(2πmx₂/L)`; in 3D the
/// same profile is the third component of the vector potential, modulated by
/// `cos(2πmx₃/L)`.
pub fn cellular_vortex(grid: &GridSpec, amplitude: f64, cells: usize) -> Result<VectorField> {
    let k = 2.0 * std::f64::consts::PI * cells as f64 / grid.box_length();
    let psi = ScalarField::from_fn(*grid, |x| {
        let base = amplitude * (k * x[0]).sin() * (k * x[1]).sin();
        if grid.dim() == 3 {
            base * (k * x[2]).cos()
        } else {
            base
        }
    });
    let potential = match grid.dim() {
        2 => Potential::Stream(psi),
        _ => {
            let z = ScalarField::zeros(*grid);
            Potential::Vector([z.clone(), z, psi])
        }
    };
    stream_to_field(&potential, grid)
}

/// Cellular flow confined to a ball around the box center: the cellular
/// stream function multiplied by a smooth radial cutoff.
pub fn windowed_cellular(
    grid: &GridSpec,
    amplitude: f64,
    cell_length: f64,
    support_radius: f64,
) -> Result<VectorField> {
    if support_radius >= 0.5 * grid.box_length() {
        return validation("support radius must be inside the box");
    }
    let k = 2.0 * std::f64::consts::PI / cell_length;
    let center = grid.center();
    let psi = ScalarField::from_raw(
        *grid,
        (0..grid.len())
            .map(|i| {
                let d = grid.displacement(i, &center);
                let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mut v = amplitude * (k * d[0]).sin() * (k * d[1]).sin();
                if grid.dim() == 3 {
                    v *= (k * d[2]).cos();
                }
                v * smooth_cutoff(r, 0.5 * support_radius, support_radius)
            })
            .collect(),
    );
    let potential = match grid.dim() {
        2 => Potential::Stream(psi),
        _ => {
            let z = ScalarField::zeros(*grid);
            Potential::Vector([z.clone(), z, psi])
        }
    };
    stream_to_field(&potential, grid)
}

/// Rigid rotation `ω·(−x₂, x₁)` about the center, windowed by a radial
/// cutoff of the potential `ωr²/2`.
pub fn windowed_rotation(grid: &GridSpec, omega: f64, support_radius: f64) -> Result<VectorField> {
    if support_radius >= 0.5 * grid.box_length() {
        return validation("support radius must be inside the box");
    }
    let p = potential_from_radial(grid, |r| {
        0.5 * omega * r * r * smooth_cutoff(r, 0.5 * support_radius, support_radius)
    });
    stream_to_field(&p, grid)
}

/// Parameters of the singular vortex family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VortexSpec {
    /// Decay exponent `s`: `|b| ~ r^{1-s}` outside the core.
    pub decay: f64,
    pub core_radius: f64,
    /// Integrability target: the field must lie in `L² ∩ L^q`.
    pub target_q: f64,
    pub amplitude: f64,
    /// The potential vanishes beyond this radius; the cutoff starts at half of it.
    pub support_radius: f64,
}

impl VortexSpec {
    pub fn new(decay: f64, core_radius: f64, grid: &GridSpec) -> Self {
        Self {
            decay,
            core_radius,
            target_q: 2.0,
            amplitude: 1.0,
            support_radius: 0.3 * grid.box_length(),
        }
    }

    /// Upper end of the admissible decay range: `(s-1)·max(2,q) < n`.
    pub fn max_decay(dim: usize, q: f64) -> f64 {
        1.0 + dim as f64 / q.max(2.0)
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let n = grid.dim() as f64;
        if !(self.target_q > 0.5 * n) {
            return validation(format!("target q = {} must exceed n/2 = {}", self.target_q, 0.5 * n));
        }
        if !(self.decay >= 0.0) {
            return validation(format!("decay exponent s = {} must be non-negative", self.decay));
        }
        if (self.decay - 1.0) * 2.0 >= n {
            return validation(format!(
                "decay exponent s = {} violates L^2 integrability near the core: need 2(s-1) < n = {n}",
                self.decay
            ));
        }
        if self.target_q.is_finite() && (self.decay - 1.0) * self.target_q >= n {
            return validation(format!(
                "decay exponent s = {} violates L^{} integrability near the core: need q(s-1) < n = {n}",
                self.decay, self.target_q
            ));
        }
        if self.target_q.is_infinite() && self.decay > 1.0 {
            return validation(format!(
                "decay exponent s = {} violates L^inf boundedness: need s <= 1",
                self.decay
            ));
        }
        if !(self.core_radius > 0.0) {
            return validation("core radius must be positive");
        }
        if !(self.support_radius > 0.0 && self.support_radius < 0.5 * grid.box_length()) {
            return validation("support radius must lie inside the box");
        }
        Ok(())
    }

    /// Radial profile `ψ(r)` with `ψ'(r) = A·r·(r²+r_c²)^{-s/2}`.
    pub fn radial_potential(&self, r: f64) -> f64 {
        let s = self.decay;
        let rc2 = self.core_radius * self.core_radius;
        let raw = if (s - 2.0).abs() < 1e-12 {
            0.5 * ((r * r + rc2) / rc2).ln()
        } else {
            ((r * r + rc2).powf(1.0 - 0.5 * s) - rc2.powf(1.0 - 0.5 * s)) / (2.0 - s)
        };
        self.amplitude * raw
    }

    /// Derivative of the regularised profile before the cutoff.
    pub fn radial_speed(&self, r: f64) -> f64 {
        let rc2 = self.core_radius * self.core_radius;
        self.amplitude * r * (r * r + rc2).powf(-0.5 * self.decay)
    }

    /// Potential after the smooth cutoff.
    pub fn cut_potential(&self, r: f64) -> f64 {
        self.radial_potential(r) * smooth_cutoff(r, 0.5 * self.support_radius, self.support_radius)
    }

    /// `d/dr` of the cut potential, by the product rule.
    pub fn cut_speed(&self, r: f64) -> f64 {
        let inner = 0.5 * self.support_radius;
        let outer = self.support_radius;
        let chi = smooth_cutoff(r, inner, outer);
        let dchi = if r <= inner || r >= outer {
            0.0
        } else {
            let dr = 1e-6 * (outer - inner);
            (smooth_cutoff(r + dr, inner, outer) - smooth_cutoff(r - dr, inner, outer)) / (2.0 * dr)
        };
        self.radial_speed(r) * chi + self.radial_potential(r) * dchi
    }
}

/// Swirling vortex around the box center with `|b| ~ r^{1-s}` outside the
/// regularised core. In 3D the swirl is about the third axis (vector
/// potential along `e₃` depending on the 3D radius).
pub fn singular_vortex(grid: &GridSpec, spec: &VortexSpec) -> Result<VectorField> {
    spec.validate(grid)?;
    let potential = potential_from_radial(grid, |r| spec.cut_potential(r));
    stream_to_field(&potential, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid2(n: usize, l: f64) -> GridSpec {
        GridSpec::new(2, n, l).unwrap()
    }

    #[test]
    fn sawtooth_potential_is_rejected() {
        let g = grid2(32, 4.0);
        let psi = ScalarField::from_fn(g, |x| x[0]);
        let err = stream_to_field(&Potential::Stream(psi), &g).unwrap_err();
        assert!(matches!(err, LabError::Validation(_)), "{err}");
    }

    #[test]
    fn constant_potential_gives_zero_field() {
        let g = grid2(16, 4.0);
        let b = stream_to_field(&Potential::Stream(ScalarField::constant(g, 3.5)), &g).unwrap();
        assert!(b.max_magnitude() < 1e-13);
        assert!(b.is_certified());
    }

    #[test]
    fn grid_mismatch_is_shape_error() {
        let g = grid2(16, 4.0);
        let other = grid2(32, 4.0);
        let psi = ScalarField::zeros(other);
        let err = stream_to_field(&Potential::Stream(psi), &g).unwrap_err();
        assert!(matches!(err, LabError::Shape(_)));
    }

    #[test]
    fn cellular_vortex_matches_analytic_and_is_certified() {
        let g = grid2(32, 2.0);
        let b = cellular_vortex(&g, 1.0, 1).unwrap();
        let check = b.divergence_check().unwrap();
        assert!(check.certified);
        assert!(check.max_divergence <= 1e-10 * check.max_magnitude);
        // b = (-∂₂ψ, ∂₁ψ) for ψ = sin(πx)sin(πy) with L = 2.
        for i in (0..g.len()).step_by(7) {
            let x = g.coordinate(i);
            let b1 = -PI * (PI * x[0]).sin() * (PI * x[1]).cos();
            let b2 = PI * (PI * x[0]).cos() * (PI * x[1]).sin();
            assert!((b.component(0)[i] - b1).abs() < 1e-11);
            assert!((b.component(1)[i] - b2).abs() < 1e-11);
        }
    }

    #[test]
    fn divergence_examples() {
        let g = grid2(32, 4.0);
        let c = VectorField::constant(g, &[1.0, 0.0]).unwrap();
        assert!(divergence(&c).values().iter().all(|v| v.abs() < 1e-14));

        let rot = windowed_rotation(&g, 1.0, 1.5).unwrap();
        let div = divergence(&rot);
        let peak = rot.max_magnitude();
        assert!(div.values().iter().all(|v| v.abs() <= 1e-10 * peak));

        // b = ∇φ, φ = sin(2πx/L): div b = -(2π/L)² sin(2πx/L).
        let k = 2.0 * PI / 4.0;
        let grad = VectorField::new(
            g,
            vec![
                (0..g.len()).map(|i| k * (k * g.coordinate(i)[0]).cos()).collect(),
                vec![0.0; g.len()],
            ],
        )
        .unwrap();
        let div = divergence(&grad);
        for i in 0..g.len() {
            let exact = -k * k * (k * g.coordinate(i)[0]).sin();
            assert!((div.values()[i] - exact).abs() < 1e-12);
        }
    }

    fn gradient_field(g: &GridSpec) -> VectorField {
        let k = 2.0 * PI / g.box_length();
        let phi = ScalarField::from_fn(*g, |x| (k * x[0]).sin() * (2.0 * k * x[1]).cos());
        let spectral = Spectral::new(*g);
        VectorField::new(*g, spectral.gradient(phi.values())).unwrap()
    }

    #[test]
    fn leray_examples() {
        let g = grid2(32, 4.0);
        let divfree = cellular_vortex(&g, 0.7, 2).unwrap();
        let projected = leray_project(&divfree);
        let rel = divfree.l2_distance(&projected).unwrap() / lebesgue_norm(&divfree, 2.0).unwrap();
        assert!(rel < 1e-12);

        let grad = gradient_field(&g);
        let killed = leray_project(&grad);
        assert!(killed.max_magnitude() < 1e-12 * grad.max_magnitude().max(1.0));

        let mixture = divfree.add(&grad).unwrap();
        let recovered = leray_project(&mixture);
        assert!(recovered.is_certified());
        let rel = recovered.l2_distance(&divfree).unwrap() / lebesgue_norm(&divfree, 2.0).unwrap();
        assert!(rel < 1e-12);
    }

    #[test]
    fn mollifier_validation_and_constants() {
        let g = grid2(16, 4.0);
        assert!(MollifierSpec::new(0.0, &g).is_err());
        assert!(MollifierSpec::new(1.0, &g).is_err());
        let m = MollifierSpec::new(0.5, &g).unwrap();
        let c = VectorField::constant(g, &[0.3, -1.2]).unwrap();
        let out = mollify(&c, &m).unwrap();
        for (a, b) in c.components().iter().zip(out.components()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mollified_singular_vortex_approaches_original() {
        let g = grid2(128, 8.0);
        let mut spec = VortexSpec::new(1.5, 2.0 * g.spacing(), &g);
        spec.support_radius = 2.5;
        let b = singular_vortex(&g, &spec).unwrap();
        let mut last = f64::INFINITY;
        for eps in ladder(0.4, 3) {
            let m = MollifierSpec::new(eps, &g).unwrap();
            let bm = mollify(&b, &m).unwrap();
            assert!(bm.is_certified());
            let d = bm.l2_distance(&b).unwrap();
            assert!(d < last, "distance {d} not below {last} at eps {eps}");
            last = d;
        }
    }

    #[test]
    fn norm_examples() {
        let g = grid2(16, 2.0);
        let half = ScalarField::from_fn(g, |x| if x[0] < 1.0 { 1.0 } else { 0.0 });
        assert!((lebesgue_norm(&half, 1.0).unwrap() - 2.0).abs() < 1e-12);

        let mut values = vec![0.0; g.len()];
        values[37] = -4.25;
        let spike = ScalarField::new(g, values).unwrap();
        assert_eq!(lebesgue_norm(&spike, f64::INFINITY).unwrap(), 4.25);

        assert!(lebesgue_norm(&half, 0.5).is_err());
        assert!(lebesgue_norm(&half, f64::NAN).is_err());
    }

    #[test]
    fn vortex_admissibility() {
        let g = GridSpec::new(3, 16, 6.0).unwrap();
        let mut spec = VortexSpec::new(1.5, 0.2, &g);
        assert!(spec.validate(&g).is_ok());
        spec.decay = 3.0;
        let err = singular_vortex(&g, &spec).unwrap_err().to_string();
        assert!(err.contains("L^2"), "{err}");
        spec.decay = 2.2;
        spec.target_q = 3.0;
        let err = singular_vortex(&g, &spec).unwrap_err().to_string();
        assert!(err.contains("L^3"), "{err}");
        spec.target_q = 1.2;
        assert!(singular_vortex(&g, &spec).is_err());
        assert!((VortexSpec::max_decay(3, 2.0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn bounded_vortex_is_smooth_and_certified() {
        let g = grid2(64, 8.0);
        let spec = VortexSpec { decay: 0.0, amplitude: 0.5, ..VortexSpec::new(0.0, 0.3, &g) };
        let b = singular_vortex(&g, &spec).unwrap();
        assert!(b.is_certified());
        for p in [1.0, 2.0, 4.0, f64::INFINITY] {
            assert!(lebesgue_norm(&b, p).unwrap().is_finite());
        }
    }
}
