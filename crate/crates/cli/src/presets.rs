//! Built-in experiment configs, stored as the TOML text that gets hashed.

use std::path::Path;

use crate::config::LoadedConfig;
use crate::error::{CliError, Result};

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

const GAUSSIAN_BASELINE: &str = r#"name = "gaussian-baseline"
studies = ["baseline", "conservativeness", "chapman", "energy", "resolvent", "weighted", "convergence", "envelope", "mc", "duhamel"]
output = "runs/gaussian-baseline"

[grid]
dim = 2
points = 128
box_length = 8.0

[field]
kind = "zero"

[ladder]
epsilon0 = 0.5
halvings = 3

[scheme]
dt = 0.001
theta = 0.5
horizon = 0.1

[aronson]
l = inf
q = 2.0
"#;

const CELLULAR_VORTEX: &str = r#"name = "cellular-vortex"
studies = ["conservativeness", "chapman", "energy", "resolvent", "weighted", "convergence", "envelope", "mc", "duhamel"]
output = "runs/cellular-vortex"

[grid]
dim = 2
points = 128
box_length = 8.0

# The source sits on a stagnation point of the cellular pattern.
[field]
kind = "windowed-cellular"
amplitude = 0.5
cell_length = 2.0
support_radius = 3.0

[ladder]
epsilon0 = 0.25
halvings = 4

[scheme]
dt = 0.001
theta = 0.5
horizon = 0.1

[aronson]
l = inf
q = 2.0
"#;

const SINGULAR_VORTEX_3D: &str = r#"name = "singular-vortex-3d"
studies = ["conservativeness", "chapman", "energy", "resolvent", "weighted", "convergence", "envelope", "mc", "duhamel"]
output = "runs/singular-vortex-3d"

[grid]
dim = 3
points = 48
box_length = 6.0

# |b| ~ r^(1-s) outside a core of 1.5 grid spacings; b lies in L^2 and L^q
# for every q < 6.
[field]
kind = "singular-vortex"
decay = 1.5
core_radius = 0.1875
target_q = 2.0
amplitude = 2.0
support_radius = 1.5

[ladder]
epsilon0 = 0.5
halvings = 4

[scheme]
dt = 0.001
theta = 0.5
horizon = 0.1

[aronson]
l = inf
q = 2.0
"#;

const MU1_ENVELOPE: &str = r#"name = "mu1-envelope"
studies = ["conservativeness", "energy", "resolvent", "weighted", "envelope", "mc"]
output = "runs/mu1-envelope"

[grid]
dim = 2
points = 64
box_length = 8.0

[field]
kind = "windowed-cellular"
amplitude = 1.0
cell_length = 2.0
support_radius = 3.0

[ladder]
epsilon0 = 0.5
halvings = 3

[scheme]
dt = 0.001
theta = 0.5
horizon = 0.1

# Bounded drift read as b in L^2(0,T; L^inf): the q = inf branch.
[aronson]
l = 2.0
q = inf
"#;

pub const PRESETS: [Preset; 4] = [
    Preset { name: "gaussian-baseline", summary: "2D heat kernel, b = 0, 128^2", text: GAUSSIAN_BASELINE },
    Preset { name: "cellular-vortex", summary: "2D windowed cellular flow, 128^2", text: CELLULAR_VORTEX },
    Preset { name: "singular-vortex-3d", summary: "3D swirl with |b| ~ r^(-1/2), 48^3", text: SINGULAR_VORTEX_3D },
    Preset { name: "mu1-envelope", summary: "2D bounded drift with q = inf, 64^2", text: MU1_ENVELOPE },
];

pub fn presets() -> &'static [Preset] {
    &PRESETS
}

pub fn preset(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| CliError::Validation(format!("unknown preset `{name}`")))
}

pub fn load_preset(name: &str) -> Result<LoadedConfig> {
    LoadedConfig::from_text(preset(name)?.text, Path::new("."))
}

/// `preset:<name>` selects a built-in config, anything else is a path.
pub fn load(spec: &str) -> Result<LoadedConfig> {
    match spec.strip_prefix("preset:") {
        Some(name) => load_preset(name),
        None => LoadedConfig::from_path(Path::new(spec)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::Experiment;

    #[test]
    fn every_preset_validates_and_builds() {
        for p in presets() {
            let loaded = load_preset(p.name).unwrap();
            assert_eq!(loaded.config.name, p.name);
            Experiment::prepare(loaded).unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
        assert!(presets().iter().any(|p| p.name == "singular-vortex-3d"));
    }

    #[test]
    fn mu1_preset_takes_the_gaussian_shift_branch() {
        let exp = Experiment::prepare(load_preset("mu1-envelope").unwrap()).unwrap();
        let p = exp.aronson.unwrap();
        assert_eq!(p.mu, 1.0);
        assert!(p.is_mu_one());
        let expected = exp.horizon().sqrt() * exp.b.max_magnitude();
        assert!((p.drift_norm - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn singular_preset_sits_in_the_supercritical_range() {
        let exp = Experiment::prepare(load_preset("singular-vortex-3d").unwrap()).unwrap();
        let p = exp.aronson.unwrap();
        assert_eq!(p.dim, 3);
        assert!(p.q > 1.5 && (1.0..2.0).contains(&p.gamma));
        assert_eq!(exp.loaded.config.mc_tv_threshold(), 0.08);
        assert_eq!(exp.family.as_ref().unwrap().len(), 5);
    }
}
