//! Everything a run needs before the first study starts: the grid, the
//! coefficient and drift fields, the operators, and lazily computed runs
//! that several studies share.

use std::path::{Path, PathBuf};

use dfsl_core::aronson::{aronson_params, AronsonParams};
use dfsl_core::field::{
    cellular_vortex, lebesgue_norm, leray_project, mollify, singular_vortex, windowed_cellular, windowed_rotation,
    ladder, MollifierSpec, VortexSpec,
};
use dfsl_core::io::read_dump;
use dfsl_core::kernel::{duhamel_ladder, estimate_kernel_series, Direction, DuhamelLadder, KernelOptions, KernelSlice};
use dfsl_core::pde::{assemble_with, DiffusionCoefficient, DiscreteOperator, Discretization, OperatorFamily};
use dfsl_core::resolvent::{resolve, ResolventResult};
use dfsl_core::{GridSpec, ScalarField, VectorField};

use crate::config::{DiffusionSpec, FieldSpec, GridSection, LoadedConfig, SchemeKind, Study};
use crate::error::{CliError, Result};

pub struct Experiment {
    pub loaded: LoadedConfig,
    pub grid: GridSpec,
    pub a: DiffusionCoefficient,
    pub b: VectorField,
    pub op: DiscreteOperator,
    pub family: Option<OperatorFamily>,
    pub aronson: Option<AronsonParams>,
    pub source: [usize; 3],
    slices: Option<Vec<KernelSlice>>,
    family_resolvents: Option<Vec<ResolventResult>>,
    ladder_runs: Option<DuhamelLadder>,
}

fn same_grid(found: &GridSpec, expected: &GridSpec, what: &str) -> Result<()> {
    if found.same_as(expected) {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{what} is stored on {found:?}, the config asks for {expected:?}")))
    }
}

pub fn build_grid(g: &GridSection) -> Result<GridSpec> {
    Ok(GridSpec::new(g.dim, g.points, g.box_length)?)
}

fn resolve_path(base_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

pub fn build_field(spec: &FieldSpec, base_dir: &Path, grid: &GridSpec) -> Result<VectorField> {
    let b = match spec {
        FieldSpec::Zero => VectorField::zeros(*grid),
        FieldSpec::Cellular { amplitude, cells } => cellular_vortex(grid, *amplitude, *cells)?,
        FieldSpec::WindowedCellular { amplitude, cell_length, support_radius } => {
            windowed_cellular(grid, *amplitude, *cell_length, *support_radius)?
        }
        FieldSpec::WindowedRotation { omega, support_radius } => windowed_rotation(grid, *omega, *support_radius)?,
        FieldSpec::SingularVortex { decay, core_radius, target_q, amplitude, support_radius } => {
            let spec = VortexSpec {
                decay: *decay,
                core_radius: *core_radius,
                target_q: *target_q,
                amplitude: *amplitude,
                support_radius: *support_radius,
            };
            singular_vortex(grid, &spec)?
        }
        FieldSpec::File { path, project } => {
            let dump = read_dump(&resolve_path(base_dir, path))?;
            same_grid(&dump.grid, grid, "drift field")?;
            let raw = dump.into_vector()?;
            if *project {
                leray_project(&raw)
            } else {
                raw.certify()
            }
        }
    };
    if !b.is_certified() {
        let div = b.divergence_check().map(|c| c.max_divergence).unwrap_or(f64::NAN);
        return Err(CliError::Validation(format!(
            "drift field is not divergence-free (max divergence {div:.3e}); set project = true to Leray-project it"
        )));
    }
    Ok(b)
}

fn build_diffusion(loaded: &LoadedConfig, grid: &GridSpec) -> Result<DiffusionCoefficient> {
    Ok(match &loaded.config.diffusion {
        DiffusionSpec::Identity => DiffusionCoefficient::identity(*grid),
        DiffusionSpec::Anisotropic { strength, support_radius } => {
            DiffusionCoefficient::smooth_anisotropic(*grid, *strength, *support_radius)?
        }
        DiffusionSpec::File { path, lambda } => {
            let dump = read_dump(&resolve_path(&loaded.base_dir, path))?;
            same_grid(&dump.grid, grid, "diffusion coefficient")?;
            DiffusionCoefficient::from_entries(*grid, dump.components, *lambda)?
        }
    })
}

pub fn discretization(loaded: &LoadedConfig) -> Discretization {
    match loaded.config.scheme.discretization {
        SchemeKind::Spectral => Discretization::Spectral,
        SchemeKind::Compact => Discretization::Compact,
    }
}

/// `‖b‖_{L^l(0,T;L^q)}` for a time-independent field: `T^{1/l}·‖b‖_q`.
pub fn drift_norm(b: &VectorField, l: f64, q: f64, horizon: f64) -> Result<f64> {
    let space = lebesgue_norm(b, q)?;
    Ok(if l.is_infinite() { space } else { horizon.powf(1.0 / l) * space })
}

impl Experiment {
    /// Builds fields and operators; any failure here is a validation error
    /// and no study has run yet.
    pub fn prepare(loaded: LoadedConfig) -> Result<Self> {
        let grid = build_grid(&loaded.config.grid)?;
        let a = build_diffusion(&loaded, &grid)?;
        let b = build_field(&loaded.config.field, &loaded.base_dir, &grid)?;
        let scheme = discretization(&loaded);
        let op = assemble_with(&a, &b, scheme)?;

        let needs_family = [Study::Conservativeness, Study::Weighted, Study::Convergence, Study::Duhamel]
            .iter()
            .any(|s| loaded.has(*s));
        let family = if needs_family {
            let lad = &loaded.config.ladder;
            let eps = ladder(lad.epsilon0, lad.halvings);
            let ops = eps
                .iter()
                .map(|&e| assemble_with(&a, &mollify(&b, &MollifierSpec::new(e, &grid)?)?, scheme))
                .collect::<dfsl_core::Result<Vec<_>>>()?;
            Some(OperatorFamily::new(eps, ops)?)
        } else {
            None
        };

        let aronson = if loaded.has(Study::Envelope) {
            let c = &loaded.config;
            let norm = drift_norm(&b, c.aronson.l, c.aronson.q, c.scheme.horizon)?;
            Some(aronson_params(c.aronson.l, c.aronson.q, grid.dim(), a.lambda(), norm)?)
        } else {
            None
        };

        Ok(Self {
            source: grid.center_index(),
            loaded,
            grid,
            a,
            b,
            op,
            family,
            aronson,
            slices: None,
            family_resolvents: None,
            ladder_runs: None,
        })
    }

    pub fn kernel_options(&self) -> KernelOptions {
        let s = &self.loaded.config.scheme;
        KernelOptions::new(s.dt, s.theta)
    }

    pub fn horizon(&self) -> f64 {
        self.loaded.config.scheme.horizon
    }

    pub fn family(&self) -> Result<&OperatorFamily> {
        self.family.as_ref().ok_or_else(|| CliError::Validation("no mollification family was built".into()))
    }

    /// Gaussian bump near the box center, the common smooth initial state.
    pub fn bump(&self) -> ScalarField {
        let p = &self.loaded.config.study;
        let mut c = self.grid.center();
        c[0] += p.bump_offset;
        ScalarField::gaussian_bump(self.grid, &c, p.bump_width)
    }

    /// Grid point nearest to the bump center.
    pub fn offset_source(&self) -> [usize; 3] {
        let n = self.grid.points() as i64;
        let shift = (self.loaded.config.study.bump_offset / self.grid.spacing()).round() as i64;
        let mut y = self.source;
        y[0] = (y[0] as i64 + shift).rem_euclid(n) as usize;
        y
    }

    /// Forward slices from the center at the horizon and, when the envelope
    /// study runs, at its fit times, all from one run.
    pub fn forward_slices(&mut self) -> Result<&[KernelSlice]> {
        if self.slices.is_none() {
            let mut times = vec![self.horizon()];
            if self.loaded.has(Study::Envelope) {
                times.extend_from_slice(&self.loaded.config.study.envelope_times);
            }
            times.sort_by(f64::total_cmp);
            times.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * y.abs());
            let slices = estimate_kernel_series(&self.op, &times, &self.source, Direction::Forward, &self.kernel_options())?;
            self.slices = Some(slices);
        }
        Ok(self.slices.as_deref().unwrap())
    }

    pub fn slice_at(&mut self, t: f64) -> Result<KernelSlice> {
        let slices = self.forward_slices()?;
        slices
            .iter()
            .find(|s| (s.time - t).abs() <= 1e-12 * t.abs())
            .cloned()
            .ok_or_else(|| CliError::Validation(format!("no slice was computed at t = {t}")))
    }

    /// `(α − L_ε)⁻¹ f` for every family member, `f` the central bump.
    pub fn family_resolvents(&mut self) -> Result<&[ResolventResult]> {
        if self.family_resolvents.is_none() {
            let f = self.bump();
            let alpha = self.loaded.config.study.family_alpha;
            let results = self
                .family()?
                .operators()
                .iter()
                .map(|op| resolve(op, alpha, &f))
                .collect::<dfsl_core::Result<Vec<_>>>()?;
            self.family_resolvents = Some(results);
        }
        Ok(self.family_resolvents.as_deref().unwrap())
    }

    /// Family solutions from the bump with their Duhamel comparison.
    pub fn ladder_runs(&mut self) -> Result<&DuhamelLadder> {
        if self.ladder_runs.is_none() {
            let runs = duhamel_ladder(&self.op, self.family()?, &self.bump(), self.horizon(), &self.kernel_options())?;
            self.ladder_runs = Some(runs);
        }
        Ok(self.ladder_runs.as_ref().unwrap())
    }
}
