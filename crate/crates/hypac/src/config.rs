//! JSON configuration documents.

use crate::error::{HarnessError, Result};
use hypac_core::grid::{Grid, Stencil};
use hypac_core::manifold::PsiMode;
use hypac_core::model::{ModelParams, ModelSpec};
use hypac_core::pde::{Integrator, SimConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Parses `text`, reporting the line, column and field path of the first failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        HarnessError::Config {
            origin: origin.to_string(),
            line: inner.line(),
            column: inner.column(),
            field,
            message: inner.to_string(),
        }
    })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_json(&text, &path.display().to_string())
}

/// Reports a semantic error against a field of an already parsed document.
pub fn field_error(origin: &str, field: &str, err: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config { origin: origin.into(), line: 0, column: 0, field: field.into(), message: err.to_string() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub shifts: Vec<f64>,
    pub t_relax: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Calibrate Gamma from relaxed runs; otherwise `params.gamma` is used.
    #[serde(default)]
    pub calibrate: Option<Calibration>,
    #[serde(default = "default_psi_mode")]
    pub psi_mode: PsiMode,
}

fn default_psi_mode() -> PsiMode {
    PsiMode::AlphaFormula
}

/// One simulation: model, solver configuration, initial layers and optional diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationFile {
    pub model: ModelSpec,
    pub sim: SimConfig,
    pub h0: Vec<f64>,
    #[serde(default)]
    pub diagnostics: Option<DiagnosticsConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    SingleSim,
    EpsilonSweep,
    TauCompare,
    EquilibriumStudy,
}

fn default_cfl() -> f64 {
    0.9
}
fn default_samples() -> usize {
    100
}
fn default_dt_out() -> f64 {
    0.1
}
fn default_stencil() -> Stencil {
    Stencil::Eighth
}

/// Settings shared by every point of a plan. Lengths are in units of the interval (0, 1),
/// times in the units of the equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseConfig {
    pub model: ModelSpec,
    pub params: ModelParams,
    /// Fixed grid; ignored when `points_per_eps` is set.
    #[serde(default)]
    pub grid: Option<Grid>,
    /// Grid spacing eps / points_per_eps, rounded to the next finer uniform grid.
    #[serde(default)]
    pub points_per_eps: Option<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub h0: Option<Vec<f64>>,
    #[serde(default)]
    pub eta0: Option<Vec<f64>>,
    #[serde(default = "default_stencil")]
    pub stencil: Stencil,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_cfl")]
    pub cfl_factor: f64,
    /// Recorded samples per simulation run.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub diagnostics: Option<DiagnosticsConfig>,
    /// Time window [t0, t1] of the drift regression.
    #[serde(default)]
    pub fit_window: Option<[f64; 2]>,
    /// Start of the late window in relaxation comparisons.
    #[serde(default)]
    pub t1: Option<f64>,
    #[serde(default = "default_dt_out")]
    pub dt_out: f64,
    /// Random restarts of the equilibrium uniqueness probe.
    #[serde(default)]
    pub multistart: usize,
}

impl BaseConfig {
    pub fn grid_for(&self, eps: f64) -> Result<Grid> {
        match (self.points_per_eps, self.grid) {
            (Some(k), _) => {
                if !(k > 0.0) {
                    return Err(field_error("plan", "base.points_per_eps", "must be positive"));
                }
                let cells = (k / eps).ceil() as usize;
                Ok(Grid::new(cells + 1)?)
            }
            (None, Some(g)) => Ok(g),
            (None, None) => Err(field_error("plan", "base.grid", "either grid or points_per_eps is required")),
        }
    }

    /// Simulation settings at `eps`, with the stride chosen for about `samples` records.
    pub fn sim_config(&self, eps: f64, spec: &ModelSpec) -> Result<SimConfig> {
        let params = ModelParams { eps, ..self.params };
        let mut cfg = SimConfig {
            params,
            grid: self.grid_for(eps)?,
            t_end: self.t_end,
            cfl_factor: self.cfl_factor,
            observer_stride: 1,
            integrator: self.integrator,
            stencil: self.stencil,
        };
        let dt = hypac_core::pde::stable_dt(&cfg, spec)?;
        let steps = (self.t_end / dt).ceil().max(1.0) as usize;
        cfg.observer_stride = (steps / self.samples.max(1)).max(1);
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "Thresholds::slope")]
    pub slope_tolerance: f64,
    #[serde(default = "Thresholds::disp")]
    pub max_displacement: f64,
    #[serde(default = "Thresholds::rem")]
    pub max_remainder_constant: f64,
    #[serde(default = "Thresholds::cmp")]
    pub comparison_factor: f64,
}

impl Thresholds {
    fn slope() -> f64 {
        0.15
    }
    fn disp() -> f64 {
        1e-2
    }
    fn rem() -> f64 {
        100.0
    }
    fn cmp() -> f64 {
        10.0
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            slope_tolerance: Self::slope(),
            max_displacement: Self::disp(),
            max_remainder_constant: Self::rem(),
            comparison_factor: Self::cmp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub kind: PlanKind,
    pub base: BaseConfig,
    /// eps values (epsilon_sweep, equilibrium_study) or tau values (tau_compare).
    #[serde(default)]
    pub sweep: Vec<f64>,
    pub output_dir: std::path::PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        let needs_sweep = self.kind != PlanKind::SingleSim;
        if needs_sweep && self.sweep.is_empty() {
            return Err(HarnessError::Plan("sweep list is empty".into()));
        }
        if !needs_sweep && !self.sweep.is_empty() {
            return Err(HarnessError::Plan("single_sim takes no sweep values".into()));
        }
        let up = self.sweep.windows(2).all(|w| w[1] > w[0]);
        let down = self.sweep.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(HarnessError::Plan("sweep values must be strictly monotone".into()));
        }
        if self.sweep.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(HarnessError::Plan("sweep values must be positive".into()));
        }
        if matches!(self.kind, PlanKind::SingleSim | PlanKind::EpsilonSweep | PlanKind::TauCompare)
            && self.base.h0.is_none()
        {
            return Err(field_error("plan", "base.h0", "initial layer positions are required"));
        }
        if self.kind == PlanKind::EpsilonSweep && self.sweep.len() < 3 {
            return Err(HarnessError::Plan("an eps sweep needs at least three values".into()));
        }
        Ok(())
    }
}
