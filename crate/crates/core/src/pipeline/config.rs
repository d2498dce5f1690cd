use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fingerprint;
use crate::macroscale::{MacroBoundary, ScenarioSpec};
use crate::perfem::{CgOptions, TensorSpec};
use crate::unitcell::{FieldSpec, GeometryConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub field: FieldSpec,
    pub tensors: Tensors,
    #[serde(default)]
    pub fem: CgOptions,
    #[serde(default)]
    pub discretization: Discretization,
    #[serde(default)]
    pub scenario: Scenario,
    /// Default output directory when `--out` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tensors {
    pub a1: TensorSpec,
    pub a2: TensorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Discretization {
    /// Number of inclusion modes N.
    pub modes: usize,
    /// Final time of the macro and fine runs.
    pub t_end: f64,
    /// Number of comparison instants in (0, t_end].
    pub samples: usize,
    pub kernel: KernelConfig,
    #[serde(rename = "macro")]
    pub macro_: MacroConfig,
    pub fine: FineConfig,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization {
            modes: 200,
            t_end: 0.5,
            samples: 20,
            kernel: KernelConfig::default(),
            macro_: MacroConfig::default(),
            fine: FineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub t_end: f64,
    pub dt: f64,
    /// Fraction of the stable step used by the wave oracle.
    pub wave_cfl: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            t_end: 1.0,
            dt: 0.005,
            wave_cfl: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacroConfig {
    pub cells: usize,
    pub boundary: MacroBoundary,
    /// Fixed step; by default the largest step within 0.9 of the stable
    /// bound that divides the sampling interval.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Cap on the number of modes carried as memory registers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
}

impl Default for MacroConfig {
    fn default() -> Self {
        MacroConfig {
            cells: 16,
            boundary: MacroBoundary::Dirichlet,
            dt: None,
            modes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FineConfig {
    /// Cell resolution used for the fine runs and for the limit they are
    /// compared with.
    pub cell_n: usize,
    pub refine: usize,
    pub eps: Vec<f64>,
}

impl Default for FineConfig {
    fn default() -> Self {
        FineConfig {
            cell_n: 8,
            refine: 1,
            eps: vec![0.25, 0.125],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseSelector {
    /// Decided by the interface rank of b.
    #[default]
    Auto,
    /// Frozen hard phase (b spans at least two directions on the interface).
    I,
    /// Memory equation for alpha (b has one direction on the interface).
    Ii,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub case: CaseSelector,
    #[serde(default = "zeros")]
    pub u0: [String; 3],
    #[serde(default = "zeros")]
    pub v0: [String; 3],
    #[serde(default = "zeros")]
    pub f: [String; 3],
}

fn zeros() -> [String; 3] {
    ["0".into(), "0".into(), "0".into()]
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            case: CaseSelector::Auto,
            u0: zeros(),
            v0: zeros(),
            f: zeros(),
        }
    }
}

impl Scenario {
    pub fn spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            u0: self.u0.clone(),
            v0: self.v0.clone(),
            f: self.f.clone(),
        }
    }
}

/// Stages whose artifacts carry an input fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Cell,
    Modes,
    Correctors,
    Kernel,
    Macro,
    Fine,
    Converge,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Cell => "cell",
            Stage::Modes => "modes",
            Stage::Correctors => "correctors",
            Stage::Kernel => "kernel",
            Stage::Macro => "macro",
            Stage::Fine => "fine",
            Stage::Converge => "converge",
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config does not match the schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Cross-field checks beyond the schema.
    pub fn validate(&self) -> Result<()> {
        let d = &self.discretization;
        if d.modes == 0 {
            return Err(Error::Config("discretization.modes must be at least 1".into()));
        }
        if !(d.t_end > 0.0) || d.samples == 0 {
            return Err(Error::Config(
                "discretization.t_end must be positive and samples at least 1".into(),
            ));
        }
        if !(d.kernel.dt > 0.0) || !(d.kernel.t_end > 0.0) {
            return Err(Error::Config("kernel.dt and kernel.t_end must be positive".into()));
        }
        if !(d.kernel.wave_cfl > 0.0 && d.kernel.wave_cfl <= 1.0) {
            return Err(Error::Config("kernel.wave_cfl must lie in (0, 1]".into()));
        }
        if d.macro_.cells < 2 {
            return Err(Error::Config("macro.cells must be at least 2".into()));
        }
        if let Some(dt) = d.macro_.dt {
            let interval = d.t_end / d.samples as f64;
            let k = (interval / dt).round();
            if !(dt > 0.0) || k < 1.0 || (k * dt - interval).abs() > 1e-9 * interval {
                return Err(Error::Config(format!(
                    "macro.dt = {dt} must divide the sampling interval {interval}"
                )));
            }
        }
        if d.macro_.modes == Some(0) {
            return Err(Error::Config("macro.modes must be at least 1 when given".into()));
        }
        let f = &d.fine;
        if f.cell_n < 8 || f.refine == 0 {
            return Err(Error::Config(
                "fine.cell_n must be at least 8 and fine.refine at least 1".into(),
            ));
        }
        for &e in &f.eps {
            let inv = 1.0 / e;
            if !(e > 0.0) || (inv - inv.round()).abs() > 1e-9 * inv {
                return Err(Error::Config(format!(
                    "fine.eps entry {e} is not the inverse of an integer"
                )));
            }
        }
        Ok(())
    }

    /// Geometry of the cell used by the fine runs.
    pub fn fine_geometry(&self) -> GeometryConfig {
        GeometryConfig {
            n: self.discretization.fine.cell_n * self.discretization.fine.refine,
            ..self.geometry.clone()
        }
    }

    /// Hash of every config block the stage depends on.
    pub fn fingerprint(&self, stage: Stage) -> String {
        let d = &self.discretization;
        let cell = json!({ "geometry": self.geometry, "field": self.field });
        let modes = json!({ "cell": cell, "a2": self.tensors.a2, "modes": d.modes });
        let correctors = json!({ "cell": cell, "tensors": self.tensors, "fem": self.fem });
        let value: Value = match stage {
            Stage::Cell => cell,
            Stage::Modes => modes,
            Stage::Correctors => correctors,
            Stage::Kernel => {
                json!({ "modes": modes, "correctors": correctors, "kernel": d.kernel })
            }
            Stage::Macro => json!({
                "modes": modes,
                "correctors": correctors,
                "macro": d.macro_,
                "t_end": d.t_end,
                "samples": d.samples,
                "scenario": self.scenario,
            }),
            Stage::Fine => json!({
                "field": self.field,
                "geometry": self.fine_geometry(),
                "tensors": self.tensors,
                "fine": d.fine,
                "t_end": d.t_end,
                "samples": d.samples,
                "scenario": self.scenario,
            }),
            Stage::Converge => json!({
                "field": self.field,
                "geometry": self.fine_geometry(),
                "tensors": self.tensors,
                "fem": self.fem,
                "modes": d.modes,
                "macro": d.macro_,
                "fine": d.fine,
                "t_end": d.t_end,
                "samples": d.samples,
                "scenario": self.scenario,
            }),
        };
        fingerprint::of_json(stage.name(), &value)
    }
}
