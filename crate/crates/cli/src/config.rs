//! Experiment configuration: a flat TOML document with one table per
//! concern. Every table except `[grid]` has defaults, and every threshold
//! defaults to the acceptance value.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Study {
    Baseline,
    Conservativeness,
    Chapman,
    Energy,
    Resolvent,
    Weighted,
    Convergence,
    Envelope,
    Mc,
    Duhamel,
}

impl Study {
    pub const ALL: [Study; 10] = [
        Study::Baseline,
        Study::Conservativeness,
        Study::Chapman,
        Study::Energy,
        Study::Resolvent,
        Study::Weighted,
        Study::Convergence,
        Study::Envelope,
        Study::Mc,
        Study::Duhamel,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Study::Baseline => "baseline",
            Study::Conservativeness => "conservativeness",
            Study::Chapman => "chapman",
            Study::Energy => "energy",
            Study::Resolvent => "resolvent",
            Study::Weighted => "weighted",
            Study::Convergence => "convergence",
            Study::Envelope => "envelope",
            Study::Mc => "mc",
            Study::Duhamel => "duhamel",
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Study::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| CliError::Validation(format!("unknown study `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub studies: Vec<String>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub grid: GridSection,
    #[serde(default)]
    pub field: FieldSpec,
    #[serde(default)]
    pub diffusion: DiffusionSpec,
    #[serde(default)]
    pub ladder: LadderSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub aronson: AronsonSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub seeds: SeedSection,
    #[serde(default)]
    pub study: StudyParams,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub points: usize,
    pub box_length: f64,
}

/// Drift field: a builtin generator or a DFSL dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    #[default]
    Zero,
    Cellular {
        amplitude: f64,
        cells: usize,
    },
    WindowedCellular {
        amplitude: f64,
        cell_length: f64,
        support_radius: f64,
    },
    WindowedRotation {
        omega: f64,
        support_radius: f64,
    },
    SingularVortex {
        decay: f64,
        core_radius: f64,
        target_q: f64,
        amplitude: f64,
        support_radius: f64,
    },
    File {
        path: PathBuf,
        /// Leray-project the stored field instead of requiring it to be
        /// divergence-free already.
        #[serde(default)]
        project: bool,
    },
}

impl FieldSpec {
    pub fn is_zero(&self) -> bool {
        matches!(self, FieldSpec::Zero)
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, FieldSpec::SingularVortex { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DiffusionSpec {
    #[default]
    Identity,
    Anisotropic {
        strength: f64,
        support_radius: f64,
    },
    /// `n·n` components in row-major order, with the ellipticity constant.
    File {
        path: PathBuf,
        lambda: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LadderSection {
    pub epsilon0: f64,
    pub halvings: usize,
}

impl Default for LadderSection {
    fn default() -> Self {
        Self { epsilon0: 0.5, halvings: 3 }
    }
}

impl LadderSection {
    pub fn levels(&self) -> usize {
        self.halvings + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    #[default]
    Spectral,
    Compact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub dt: f64,
    pub theta: f64,
    pub horizon: f64,
    pub discretization: SchemeKind,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self { dt: 1e-3, theta: 0.5, horizon: 0.1, discretization: SchemeKind::Spectral }
    }
}

/// Integrability exponents of the drift, `b ∈ L^l(0,T; L^q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AronsonSection {
    pub l: f64,
    pub q: f64,
}

impl Default for AronsonSection {
    fn default() -> Self {
        Self { l: f64::INFINITY, q: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub paths: usize,
    pub steps: usize,
    pub bins: usize,
    /// Tail comparison radius in units of `√(2T)`.
    pub tail_radius: f64,
    /// Exit radius in units of `√(2T)`, capped at `0.45·L`.
    pub exit_radius: f64,
}

impl Default for McSection {
    fn default() -> Self {
        Self { paths: 100_000, steps: 1024, bins: 16, tail_radius: 3.0, exit_radius: 6.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedSection {
    pub resolvent: u64,
    pub mc: u64,
}

impl Default for SeedSection {
    fn default() -> Self {
        Self { resolvent: 17, mc: 29 }
    }
}

/// Sampling parameters of the individual studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyParams {
    /// Width of the Gaussian bump used as initial state and right-hand side.
    pub bump_width: f64,
    /// Shift of the bump center, and of the kernel source used for the
    /// mollification limit, along the first axis. Keeps the data off the
    /// symmetry center of vortex-type drifts.
    pub bump_offset: f64,
    pub resolvent_samples: usize,
    pub resolvent_alphas: Vec<f64>,
    pub identity_pairs: usize,
    pub cross_route_steps: usize,
    pub family_alpha: f64,
    pub weighted_gammas: Vec<f64>,
    pub envelope_times: Vec<f64>,
    /// Fraction of the horizon covered by the first composition leg.
    pub chapman_split: f64,
    /// Step multipliers of the two legs in the mismatched composition.
    pub chapman_leg_factors: [f64; 2],
    /// Number of step doublings in the energy refinement study.
    pub energy_levels: usize,
}

impl Default for StudyParams {
    fn default() -> Self {
        Self {
            bump_width: 0.5,
            bump_offset: 0.5,
            resolvent_samples: 100,
            resolvent_alphas: vec![0.1, 1.0, 10.0],
            identity_pairs: 10,
            cross_route_steps: 256,
            family_alpha: 1.0,
            weighted_gammas: vec![0.05, 0.1, 0.2],
            envelope_times: vec![0.05, 0.1, 0.2],
            chapman_split: 0.4,
            chapman_leg_factors: [2.0, 5.0],
            energy_levels: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub baseline_l1: f64,
    pub conservation: f64,
    pub chapman_matched: f64,
    pub chapman_mismatched: f64,
    pub chapman_refinement: f64,
    pub energy_residual: f64,
    pub energy_order: f64,
    pub resolvent_slack: f64,
    pub resolvent_identity: f64,
    pub cross_route: f64,
    pub weighted_spread: f64,
    pub duhamel_slack: f64,
    pub near_exponent_min: f64,
    pub near_exponent_max: f64,
    pub limit_final: f64,
    pub limit_mass: f64,
    /// Defaults to 0.05, or 0.08 for the singular vortex.
    pub mc_tv: Option<f64>,
    pub mc_sigmas: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            baseline_l1: 0.01,
            conservation: 1e-8,
            chapman_matched: 1e-12,
            chapman_mismatched: 0.02,
            chapman_refinement: 0.5,
            energy_residual: 1e-3,
            energy_order: 1.8,
            resolvent_slack: 1e-8,
            resolvent_identity: 1e-8,
            cross_route: 0.02,
            weighted_spread: 0.2,
            duhamel_slack: 0.05,
            near_exponent_min: 1.7,
            near_exponent_max: 2.3,
            limit_final: 0.02,
            limit_mass: 1e-3,
            mc_tv: None,
            mc_sigmas: 3.0,
        }
    }
}

/// The `[grid]` and `[field]` tables alone; other tables are ignored, so a
/// full experiment config also parses.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct FieldDocument {
    pub grid: GridSection,
    #[serde(default)]
    pub field: FieldSpec,
}

impl FieldDocument {
    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// A parsed configuration together with the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub studies: Vec<Study>,
    pub hash: String,
    pub text: String,
    /// Directory against which relative data paths are resolved.
    pub base_dir: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl LoadedConfig {
    pub fn from_text(text: &str, base_dir: &Path) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let studies = config.validate()?;
        Ok(Self {
            config,
            studies,
            hash: sha256_hex(text.as_bytes()),
            text: text.to_string(),
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_text(&text, &base)
    }

    pub fn has(&self, study: Study) -> bool {
        self.studies.contains(&study)
    }
}

fn is_multiple(t: f64, dt: f64) -> bool {
    let k = (t / dt).round();
    k >= 1.0 && (k * dt - t).abs() <= 1e-9 * t
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Validation(msg()))
    }
}

impl ExperimentConfig {
    /// Checks everything that can be checked without building fields, and
    /// returns the study list in declared order.
    pub fn validate(&self) -> Result<Vec<Study>> {
        check(!self.studies.is_empty(), || "the study list is empty".into())?;
        let mut studies = Vec::with_capacity(self.studies.len());
        for name in &self.studies {
            let st: Study = name.parse()?;
            check(!studies.contains(&st), || format!("study `{name}` is listed twice"))?;
            studies.push(st);
        }
        let g = &self.grid;
        check(matches!(g.dim, 2 | 3), || format!("grid dimension must be 2 or 3, got {}", g.dim))?;
        check(g.points >= 4 && g.points % 2 == 0, || format!("points per axis must be even and >= 4, got {}", g.points))?;
        check(g.box_length > 0.0 && g.box_length.is_finite(), || "box length must be positive".into())?;

        let s = &self.scheme;
        check(s.dt > 0.0 && s.horizon > 0.0, || "dt and horizon must be positive".into())?;
        check((0.5..=1.0).contains(&s.theta), || format!("theta must lie in [0.5, 1], got {}", s.theta))?;
        check(is_multiple(s.horizon, s.dt), || format!("horizon {} is not a multiple of dt {}", s.horizon, s.dt))?;

        let lad = &self.ladder;
        check(lad.epsilon0 > 0.0 && lad.epsilon0 < g.box_length / 4.0, || {
            format!("ladder epsilon0 must lie in (0, L/4), got {}", lad.epsilon0)
        })?;
        if studies.contains(&Study::Convergence) {
            check(lad.levels() >= 3, || format!("convergence needs a ladder of length >= 3, got {}", lad.levels()))?;
        }

        let p = &self.study;
        check(p.bump_width > 0.0, || "bump width must be positive".into())?;
        check(p.bump_offset.is_finite() && p.bump_offset.abs() < g.box_length / 2.0, || {
            format!("bump offset must lie inside the half box, got {}", p.bump_offset)
        })?;
        if studies.contains(&Study::Baseline) {
            check(self.field.is_zero() && self.diffusion == DiffusionSpec::Identity, || {
                "the baseline study compares with the heat kernel and needs b = 0, a = I".into()
            })?;
        }
        if studies.contains(&Study::Resolvent) {
            check(!p.resolvent_alphas.is_empty() && p.resolvent_alphas.iter().all(|a| *a > 0.0), || {
                "resolvent alphas must be positive".into()
            })?;
            check(p.resolvent_samples >= 1 && p.cross_route_steps >= 1, || "resolvent sample counts must be positive".into())?;
        }
        if studies.contains(&Study::Weighted) {
            check(!p.weighted_gammas.is_empty() && p.weighted_gammas.iter().all(|g| *g >= 0.0), || {
                "weight exponents must be non-negative".into()
            })?;
        }
        if studies.contains(&Study::Weighted) || studies.contains(&Study::Convergence) {
            check(p.family_alpha > 0.0, || "family alpha must be positive".into())?;
        }
        if studies.contains(&Study::Envelope) {
            check(p.envelope_times.len() >= 3, || "the envelope fit needs at least 3 times".into())?;
            for &t in &p.envelope_times {
                check(t > 0.0 && is_multiple(t, s.dt), || format!("envelope time {t} is not a multiple of dt"))?;
            }
        }
        if studies.contains(&Study::Chapman) {
            let first = p.chapman_split * s.horizon;
            let second = s.horizon - first;
            check(p.chapman_split > 0.0 && p.chapman_split < 1.0, || "chapman split must lie in (0, 1)".into())?;
            for (t, f) in [(first, 1.0), (second, 1.0), (first, p.chapman_leg_factors[0]), (second, p.chapman_leg_factors[1])] {
                for dt in [s.dt * f, 0.5 * s.dt * f] {
                    check(is_multiple(t, dt), || format!("composition leg {t} is not a multiple of its step {dt}"))?;
                }
            }
        }
        if studies.contains(&Study::Energy) {
            for j in 0..=p.energy_levels {
                check(is_multiple(s.horizon, s.dt * 2f64.powi(j as i32)), || {
                    format!("horizon is not a multiple of the energy step {}", s.dt * 2f64.powi(j as i32))
                })?;
            }
            check(p.energy_levels >= 1, || "energy refinement needs at least one doubling".into())?;
        }
        if studies.contains(&Study::Mc) {
            let m = &self.mc;
            check(m.paths >= 1 && m.steps >= 1, || "monte carlo needs paths and steps".into())?;
            check(m.bins >= 1 && g.points % m.bins == 0, || {
                format!("{} bins per axis do not divide {} points", m.bins, g.points)
            })?;
            let root = (2.0 * s.horizon).sqrt();
            check(m.tail_radius * root < 0.5 * g.box_length, || "tail radius must stay inside the box".into())?;
            check(m.exit_radius > 0.0, || "exit radius must be positive".into())?;
        }
        Ok(studies)
    }

    pub fn mc_tv_threshold(&self) -> f64 {
        self.thresholds.mc_tv.unwrap_or(if self.field.is_singular() { 0.08 } else { 0.05 })
    }
}
