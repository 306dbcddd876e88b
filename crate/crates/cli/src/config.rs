//! Experiment configuration: a TOML document with every field optional.
//!
//! Unknown keys are rejected at every level. [`ExperimentConfig::resolve`]
//! fills the command-specific defaults so that the metadata sidecar echoes
//! exactly the values a run used.

use std::path::{Path, PathBuf};

use geophase::dynamics::IntegratorConfig;
use geophase::model::{ModelSpec, ParameterLoop, ParameterPoint, RateMode};
use geophase::phases::{default_delta_i, CapResolution, StaticGrid};
use geophase::spectra::BranchLabel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(rename = "loop")]
    pub loop_: LoopConfig,
    pub grid: GridConfig,
    pub state: StateConfig,
    pub methods: Vec<Method>,
    pub tolerances: Tolerances,
    pub output: OutputConfig,
    /// Reserved; every algorithm is deterministic.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            loop_: LoopConfig::default(),
            grid: GridConfig::default(),
            state: StateConfig::default(),
            methods: Method::ALL.to_vec(),
            tolerances: Tolerances::default(),
            output: OutputConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NonlinearTwoLevel,
    /// The two-level model with `c` forced to zero.
    LinearTwoLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub c: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { kind: ModelKind::NonlinearTwoLevel, c: 0.05 }
    }
}

impl ModelConfig {
    pub fn c(&self) -> f64 {
        match self.kind {
            ModelKind::NonlinearTwoLevel => self.c,
            ModelKind::LinearTwoLevel => 0.0,
        }
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec::nonlinear(self.c())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopKind {
    /// `R(s) = (r cos 2πs, r sin 2πs, Z)` with `r = √(1 − Z²)`.
    Circle,
    /// Closed polygon through `waypoints`.
    Polyline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub kind: LoopKind,
    /// Height of the circle; `None` takes the command default.
    pub z: Option<f64>,
    pub waypoints: Vec<[f64; 3]>,
    pub rate: f64,
    pub rate_mode: RateMode,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            kind: LoopKind::Circle,
            z: None,
            waypoints: Vec::new(),
            rate: 1e-3,
            rate_mode: RateMode::ArcLength,
        }
    }
}

impl LoopConfig {
    /// The loop at height `z` (circles) or through the waypoints (polylines).
    pub fn build(&self, z: f64) -> CliResult<ParameterLoop> {
        let lp = match self.kind {
            LoopKind::Circle => ParameterLoop::circle_fixed_z(z, self.rate)?,
            LoopKind::Polyline => {
                let pts = self.waypoints.iter().map(|p| ParameterPoint::new(p[0], p[1], p[2])).collect();
                ParameterLoop::polyline(pts, self.rate)?
            }
        };
        Ok(lp.with_rate_mode(self.rate_mode))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub z_min: f64,
    pub z_max: f64,
    pub points: usize,
    /// Explicit heights; overrides the uniform grid when non-empty.
    pub values: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { z_min: -0.8, z_max: 0.8, points: 21, values: Vec::new() }
    }
}

impl GridConfig {
    pub fn heights(&self) -> Vec<f64> {
        if !self.values.is_empty() {
            return self.values.clone();
        }
        match self.points {
            0 => Vec::new(),
            1 => vec![0.5 * (self.z_min + self.z_max)],
            n => (0..n)
                .map(|k| {
                    let z = self.z_min + (self.z_max - self.z_min) * k as f64 / (n - 1) as f64;
                    (z * 1e12).round() / 1e12
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateConfig {
    pub branch: BranchLabel,
    /// Orbit action `I` for non-eigenstate runs.
    pub action: f64,
    pub ensemble: usize,
    /// Populations of the lower and upper levels for superposition runs.
    pub weights: Vec<f64>,
}

impl Default for StateConfig {
    fn default() -> Self {
        Self { branch: BranchLabel::Lower, action: 0.005, ensemble: 32, weights: vec![0.3, 0.7] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dynamic,
    Static,
    ClosedForm,
    LinearBaseline,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dynamic, Method::Static, Method::ClosedForm, Method::LinearBaseline];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub integrator: IntegratorConfig,
    pub static_grid: StaticGrid,
    pub cap: CapResolution,
    /// Loop samples for Wilson-loop Berry phases.
    pub wilson_samples: usize,
    /// Finite-difference step in `I`; `None` uses `max(0.002, 0.4 I)`.
    pub delta_i: Option<f64>,
    /// Loop samples for the averaged frozen-orbit frequencies.
    pub frequency_samples: usize,
    /// Agreement required between phase routes (rad, mod 2π).
    pub phase: f64,
    /// Relative agreement required between the two Hannay-angle routes.
    pub hannay_relative: f64,
    /// Sign-relation tolerance `|α + γ| (mod 2π)` for linear runs.
    pub hannay_sign: f64,
    /// Action drift bound `max(floor, fraction · I)`.
    pub action_drift_floor: f64,
    pub action_drift_fraction: f64,
    pub root_residual: f64,
    pub eigen_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            static_grid: StaticGrid::default(),
            cap: CapResolution::default(),
            wilson_samples: 256,
            delta_i: None,
            frequency_samples: 16,
            phase: 0.02,
            hannay_relative: 0.1,
            hannay_sign: 0.05,
            action_drift_floor: 1e-4,
            action_drift_fraction: 0.05,
            root_residual: 1e-10,
            eigen_residual: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn action_drift_bound(&self, action: f64) -> f64 {
        self.action_drift_floor.max(self.action_drift_fraction * action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json] }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub c: Option<f64>,
    pub z: Option<f64>,
    pub rate: Option<f64>,
    pub action: Option<f64>,
    pub ensemble: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(c) = o.c {
            self.model.c = c;
        }
        if let Some(z) = o.z {
            self.loop_.z = Some(z);
            self.grid.values = vec![z];
        }
        if let Some(v) = o.rate {
            self.loop_.rate = v;
        }
        if let Some(i) = o.action {
            self.state.action = i;
        }
        if let Some(m) = o.ensemble {
            self.state.ensemble = m;
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
    }

    /// Materializes the optional fields and checks ranges.
    pub fn resolve(&self, default_z: f64) -> CliResult<Self> {
        let mut r = self.clone();
        r.loop_.z.get_or_insert(default_z);
        r.tolerances.delta_i.get_or_insert(default_delta_i(r.state.action));
        r.validate()?;
        Ok(r)
    }

    pub fn z(&self) -> f64 {
        self.loop_.z.unwrap_or(0.0)
    }

    pub fn delta_i(&self) -> f64 {
        self.tolerances.delta_i.unwrap_or_else(|| default_delta_i(self.state.action))
    }

    pub fn has(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !self.model.c.is_finite() {
            return bad("model.c must be finite".into());
        }
        if !(self.loop_.rate > 0.0 && self.loop_.rate.is_finite()) {
            return bad(format!("loop.rate must be positive, got {}", self.loop_.rate));
        }
        if let Some(z) = self.loop_.z {
            if !(z.abs() < 1.0) {
                return bad(format!("loop.z must satisfy |z| < 1, got {z}"));
            }
        }
        if self.loop_.kind == LoopKind::Polyline && self.loop_.waypoints.len() < 3 {
            return bad("loop.waypoints needs at least three points for a polyline".into());
        }
        if let Some(z) = self.grid.heights().into_iter().find(|z| !(z.abs() < 1.0)) {
            return bad(format!("grid heights must satisfy |z| < 1, got {z}"));
        }
        if !(self.grid.z_min <= self.grid.z_max) {
            return bad("grid.z_min must not exceed grid.z_max".into());
        }
        if !(self.state.action >= 0.0 && self.state.action.is_finite()) {
            return bad(format!("state.action must be non-negative, got {}", self.state.action));
        }
        if self.state.ensemble == 0 {
            return bad("state.ensemble must be at least 1".into());
        }
        if self.state.weights.len() != 2
            || self.state.weights.iter().any(|w| !(*w >= 0.0))
            || (self.state.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad("state.weights must be two non-negative numbers summing to 1".into());
        }
        if let Some(d) = self.tolerances.delta_i {
            if !(d > 0.0) {
                return bad("tolerances.delta_i must be positive".into());
            }
        }
        let t = &self.tolerances;
        if t.wilson_samples < 3 || t.frequency_samples == 0 {
            return bad("tolerances.wilson_samples >= 3 and frequency_samples >= 1 required".into());
        }
        if t.static_grid.theta_samples < 4 || t.static_grid.loop_samples < 8 {
            return bad("tolerances.static_grid needs theta_samples >= 4 and loop_samples >= 8".into());
        }
        if t.cap.radial < 2 || t.cap.radial % 2 != 0 || t.cap.angular < 3 {
            return bad("tolerances.cap needs an even radial >= 2 and angular >= 3".into());
        }
        for (name, v) in [
            ("phase", t.phase),
            ("hannay_relative", t.hannay_relative),
            ("hannay_sign", t.hannay_sign),
            ("action_drift_floor", t.action_drift_floor),
            ("action_drift_fraction", t.action_drift_fraction),
            ("root_residual", t.root_residual),
            ("eigen_residual", t.eigen_residual),
        ] {
            if !(v > 0.0) {
                return bad(format!("tolerances.{name} must be positive"));
            }
        }
        t.integrator.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn integrator(&self) -> IntegratorConfig {
        self.tolerances.integrator
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.grid.heights().len(), 21);
        assert_eq!(c.grid.heights()[10], 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[model]\nc = 0.1\nfoo = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("bar = 2\n").is_err());
        assert!(ExperimentConfig::from_toml("[tolerances.integrator]\nreltol = 1e-9\n").is_err());
    }

    #[test]
    fn nested_fields_parse() {
        let c = ExperimentConfig::from_toml(
            "methods = [\"dynamic\"]\n[loop]\nz = 0.3\nrate_mode = \"angular\"\n[tolerances.integrator]\nrel_tol = 1e-11\n",
        )
        .unwrap();
        assert_eq!(c.methods, vec![Method::Dynamic]);
        assert_eq!(c.loop_.z, Some(0.3));
        assert_eq!(c.loop_.rate_mode, RateMode::Angular);
        assert_eq!(c.tolerances.integrator.rel_tol, 1e-11);
        assert_eq!(c.tolerances.integrator.abs_tol, IntegratorConfig::default().abs_tol);
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = ExperimentConfig::default();
        c.apply(&Overrides { c: Some(0.0), z: Some(0.2), ensemble: Some(4), ..Default::default() });
        assert_eq!(c.model.c, 0.0);
        assert_eq!(c.grid.heights(), vec![0.2]);
        assert_eq!(c.state.ensemble, 4);
    }

    #[test]
    fn resolve_fills_optional_fields() {
        let r = ExperimentConfig::default().resolve(0.5).unwrap();
        assert_eq!(r.loop_.z, Some(0.5));
        assert_eq!(r.tolerances.delta_i, Some(0.002));
    }

    #[test]
    fn out_of_range_values_are_config_errors() {
        for text in ["[loop]\nz = 1.0\n", "[state]\nensemble = 0\n", "[state]\nweights = [0.5, 0.6]\n", "[tolerances.integrator]\nrel_tol = 0.1\n"] {
            let c = ExperimentConfig::from_toml(text).unwrap();
            assert!(matches!(c.resolve(0.0), Err(CliError::Config(_))), "{text}");
        }
    }
}
