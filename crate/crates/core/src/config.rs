//! Run configuration: a TOML document with `[model]`, `[sde]`, `[init]` and
//! `[output]` tables. Unknown keys are rejected. Every key has a default, so
//! an empty file is a valid configuration.
//!
//! ```toml
//! [model]
//! n = 10
//! delta_r = 10.0
//! s_unit = 0.1
//!
//! [sde]
//! dt = 1.0
//! sqrt_gamma = 1e-4
//! steps = 20000
//! noise = "additive"        # none | additive | multiplicative | conserving-additive
//! seed = 1
//! sample_every = 100
//! realizations = 24
//! max_retries = 100
//!
//! [init]
//! class = 3                 # or: x0 = [0.5, 0.5, ...]
//! equilibrate = true
//! tol = 1e-12
//! max_steps = 1000000
//!
//! [output]
//! dir = "out"
//! bin_width = 0.005
//! histogram_classes = [3]   # omitted: all classes
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetic::ClassSystem;
use crate::noise::NoiseKind;
use crate::sde::{self, SdeConfig};
use crate::state::StateVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n: usize,
    pub delta_r: f64,
    pub s_unit: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            n: 10,
            delta_r: 10.0,
            s_unit: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeSection {
    pub dt: f64,
    pub sqrt_gamma: f64,
    pub steps: u64,
    pub noise: NoiseKind,
    pub seed: u64,
    pub sample_every: u64,
    pub realizations: usize,
    pub max_retries: u32,
}

impl Default for SdeSection {
    fn default() -> Self {
        SdeSection {
            dt: 1.0,
            sqrt_gamma: 1e-4,
            steps: 20_000,
            noise: NoiseKind::Additive,
            seed: 1,
            sample_every: 100,
            realizations: 24,
            max_retries: sde::DEFAULT_MAX_RETRIES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSection {
    /// Start with all population in this class (1-based).
    pub class: Option<usize>,
    /// Explicit initial fractions; exclusive with `class`.
    pub x0: Option<Vec<f64>>,
    /// Relax the initial state to the deterministic equilibrium first.
    pub equilibrate: bool,
    pub tol: f64,
    pub max_steps: u64,
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection {
            class: None,
            x0: None,
            equilibrate: true,
            tol: sde::DEFAULT_EQUILIBRIUM_TOL,
            max_steps: sde::DEFAULT_EQUILIBRIUM_MAX_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub bin_width: f64,
    pub histogram_classes: Option<Vec<usize>>,
    /// Presentation factors for plotting (e.g. `gini = 100`). Recorded in
    /// metadata only; emitted series are unscaled.
    pub plot_scale: BTreeMap<String, f64>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            bin_width: 0.005,
            histogram_classes: None,
            plot_scale: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub sde: SdeSection,
    pub init: InitSection,
    pub output: OutputSection,
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_str_over(text, &RunConfig::default())
    }

    /// Parses a TOML document whose keys override those of `base`.
    pub fn from_toml_str_over(text: &str, base: &RunConfig) -> Result<Self> {
        let parse_err = |e: toml::de::Error| {
            let key = e
                .span()
                .map(|s| {
                    let line = text[..s.start].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "document".to_string());
            bad(&key, e.message().trim().to_string())
        };
        // typed parse first, for key and line diagnostics
        toml::from_str::<RunConfig>(text).map_err(parse_err)?;
        let overlay: toml::Table = toml::from_str(text).map_err(parse_err)?;
        let mut merged = toml::Table::try_from(base).expect("config serializes");
        if let Some(toml::Value::Table(init)) = overlay.get("init") {
            if let Some(toml::Value::Table(base_init)) = merged.get_mut("init") {
                // an explicit start in the overlay replaces the base's start
                if init.contains_key("x0") || init.contains_key("class") {
                    base_init.remove("x0");
                    base_init.remove("class");
                }
            }
        }
        merge_tables(&mut merged, overlay);
        let cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| bad("document", e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_over(path, &RunConfig::default())
    }

    /// Loads a file whose keys override those of `base`.
    pub fn load_over(path: &Path, base: &RunConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str_over(&text, base)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.n < 2 {
            return Err(bad("model.n", format!("must be at least 2, got {}", m.n)));
        }
        if !(m.delta_r.is_finite() && m.delta_r > 0.0) {
            return Err(bad("model.delta_r", format!("must be positive, got {}", m.delta_r)));
        }
        if !(m.s_unit.is_finite() && m.s_unit > 0.0 && m.s_unit <= m.delta_r) {
            return Err(bad(
                "model.s_unit",
                format!("must satisfy 0 < s_unit <= delta_r, got {}", m.s_unit),
            ));
        }
        self.sde_config()
            .validate()
            .map_err(|e| match e {
                Error::InvalidSetting { key, reason } => bad(&format!("sde.{key}"), reason),
                other => other,
            })?;
        if self.sde.realizations == 0 {
            return Err(bad("sde.realizations", "must be at least 1"));
        }
        let i = &self.init;
        match (&i.class, &i.x0) {
            (Some(_), Some(_)) => return Err(bad("init", "set either `class` or `x0`, not both")),
            (Some(c), None) if *c == 0 || *c > m.n => {
                return Err(bad("init.class", format!("must be in 1..={}, got {c}", m.n)))
            }
            (None, Some(x0)) => {
                if x0.len() != m.n {
                    return Err(bad(
                        "init.x0",
                        format!("expected {} fractions, got {}", m.n, x0.len()),
                    ));
                }
                StateVector::with_tolerance(x0.clone(), 1e-9)
                    .map_err(|e| bad("init.x0", e.to_string()))?;
            }
            _ => {}
        }
        if !(i.tol.is_finite() && i.tol > 0.0) {
            return Err(bad("init.tol", format!("must be positive, got {}", i.tol)));
        }
        let o = &self.output;
        if !(o.bin_width.is_finite() && o.bin_width > 0.0) {
            return Err(bad("output.bin_width", format!("must be positive, got {}", o.bin_width)));
        }
        if let Some(classes) = &o.histogram_classes {
            if let Some(c) = classes.iter().find(|c| **c == 0 || **c > m.n) {
                return Err(bad(
                    "output.histogram_classes",
                    format!("class {c} outside 1..={}", m.n),
                ));
            }
        }
        Ok(())
    }

    pub fn class_system(&self) -> Result<ClassSystem> {
        ClassSystem::new(self.model.n, self.model.delta_r, self.model.s_unit)
    }

    pub fn sde_config(&self) -> SdeConfig {
        let s = &self.sde;
        SdeConfig {
            dt: s.dt,
            sqrt_gamma: s.sqrt_gamma,
            steps: s.steps,
            noise: s.noise,
            seed: s.seed,
            sample_every: s.sample_every,
            max_retries: s.max_retries,
        }
    }

    /// The configured starting state before any equilibration. Defaults to
    /// all population in class 3 (class 1 when `n < 3`).
    pub fn initial_state(&self) -> Result<StateVector> {
        let n = self.model.n;
        match (&self.init.x0, self.init.class) {
            (Some(x0), _) => {
                let total: f64 = x0.iter().sum();
                StateVector::new(x0.iter().map(|v| v / total).collect())
            }
            (None, Some(c)) => StateVector::vertex(n, c),
            (None, None) => StateVector::vertex(n, if n >= 3 { 3 } else { 1 }),
        }
    }

    pub fn histogram_classes(&self) -> Vec<usize> {
        self.output
            .histogram_classes
            .clone()
            .unwrap_or_else(|| (1..=self.model.n).collect())
    }
}

fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Which driver a preset runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetCommand {
    Equilibrium,
    Simulate,
    Ensemble,
}

pub const PRESET_NAMES: [&str; 6] = [
    "equilibrium",
    "fig1",
    "fig2",
    "fig3",
    "table1-conserving",
    "table1-nonconserving",
];

/// Built-in experiment configurations.
pub fn preset(name: &str) -> Result<(RunConfig, PresetCommand)> {
    let mut cfg = RunConfig::default();
    let cmd = match name {
        "equilibrium" => PresetCommand::Equilibrium,
        "fig1" => {
            cfg.sde.noise = NoiseKind::Additive;
            cfg.sde.sqrt_gamma = 1e-4;
            cfg.output.plot_scale.insert("gini".into(), 100.0);
            PresetCommand::Simulate
        }
        "fig2" => {
            cfg.sde.noise = NoiseKind::ConservingAdditive;
            cfg.sde.sqrt_gamma = 1e-4;
            cfg.output.plot_scale.insert("mobility".into(), 800.0);
            PresetCommand::Simulate
        }
        "fig3" => {
            cfg.sde.noise = NoiseKind::ConservingAdditive;
            cfg.sde.sqrt_gamma = 1e-3;
            cfg.output.histogram_classes = Some(vec![3]);
            PresetCommand::Ensemble
        }
        "table1-conserving" => {
            cfg.sde.noise = NoiseKind::ConservingAdditive;
            cfg.sde.sqrt_gamma = 1e-3;
            PresetCommand::Ensemble
        }
        "table1-nonconserving" => {
            cfg.sde.noise = NoiseKind::Additive;
            cfg.sde.sqrt_gamma = 1e-3;
            PresetCommand::Ensemble
        }
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    cfg.output.dir = PathBuf::from("out").join(name);
    Ok((cfg, cmd))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.initial_state().unwrap(), StateVector::vertex(10, 3).unwrap());
    }

    #[test]
    fn negative_spacing_names_key() {
        let err = RunConfig::from_toml_str("[model]\ndelta_r = -10.0\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "model.delta_r"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            RunConfig::from_toml_str("[model]\ndelta_r = -10.0\n").unwrap_err().exit_code(),
            2
        );
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let err = RunConfig::from_toml_str("[model]\nn = 10\nbogus = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("bogus"), "{msg}");
        assert!(RunConfig::from_toml_str("[extra]\n").is_err());
    }

    #[test]
    fn sde_errors_are_prefixed() {
        let err = RunConfig::from_toml_str("[sde]\nsample_every = 0\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "sde.sample_every"));
        let err = RunConfig::from_toml_str("[sde]\nnoise = \"loud\"\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn init_conflicts() {
        let err = RunConfig::from_toml_str("[model]\nn = 2\n[init]\nclass = 1\nx0 = [0.5, 0.5]\n")
            .unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "init"));
        assert!(RunConfig::from_toml_str("[init]\nclass = 11\n").is_err());
        assert!(RunConfig::from_toml_str("[model]\nn = 2\n[init]\nx0 = [0.5, 0.6]\n").is_err());
        let ok = RunConfig::from_toml_str("[model]\nn = 2\n[init]\nx0 = [0.25, 0.75]\n").unwrap();
        assert_eq!(ok.initial_state().unwrap().as_slice(), &[0.25, 0.75]);
    }

    #[test]
    fn toml_round_trip() {
        for name in PRESET_NAMES {
            let (cfg, _) = preset(name).unwrap();
            let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
            assert_eq!(back, cfg);
        }
        assert!(matches!(preset("fig4"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn file_overrides_preset_keys_only() {
        let (base, _) = preset("fig2").unwrap();
        let cfg = RunConfig::from_toml_str_over("[sde]\nsteps = 500\n", &base).unwrap();
        assert_eq!(cfg.sde.steps, 500);
        assert_eq!(cfg.sde.noise, NoiseKind::ConservingAdditive);
        assert_eq!(cfg.output.plot_scale.get("mobility"), Some(&800.0));

        let mut with_class = base.clone();
        with_class.init.class = Some(3);
        let cfg = RunConfig::from_toml_str_over("[init]\nx0 = [0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]\n", &with_class)
            .unwrap();
        assert_eq!(cfg.init.class, None);
        assert!(RunConfig::from_toml_str_over("[sde]\nbogus = 1\n", &base).is_err());
    }
}
