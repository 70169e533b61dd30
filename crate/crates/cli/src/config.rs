use std::path::Path;

use serde::{Deserialize, Serialize};
use snn_unwrap::energy::{GpuBaseline, HardwareProfile};
use snn_unwrap::network::{InferMode, NetworkParams};
use snn_unwrap::plasticity::LearnParams;
use snn_unwrap::raster::{CoherenceProfile, SceneShape};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Snn,
    Itoh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    #[value(name = "one_shot")]
    OneShot,
    Propagating,
}

impl From<Mode> for InferMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::OneShot => InferMode::OneShot,
            Mode::Propagating => InferMode::Propagating,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Ramp,
    Bump,
    Bumps,
}

impl From<Shape> for SceneShape {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Ramp => SceneShape::LinearRamp,
            Shape::Bump => SceneShape::GaussianBump,
            Shape::Bumps => SceneShape::SuperposedBumps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Uniform,
    Radial,
    Patchy,
}

impl From<Profile> for CoherenceProfile {
    fn from(p: Profile) -> Self {
        match p {
            Profile::Uniform => CoherenceProfile::Uniform,
            Profile::Radial => CoherenceProfile::Radial,
            Profile::Patchy => CoherenceProfile::Patchy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub shape: Shape,
    pub width: usize,
    pub height: usize,
    pub amplitude: f64,
    /// Radians per pixel along x.
    pub ramp_slope: f64,
    /// When set, each scene draws its slope uniformly from `[ramp_slope, slope_max)`.
    pub slope_max: Option<f64>,
    pub coherence_profile: Profile,
    pub coherence_level: f64,
    /// Scenes written by `gen`.
    pub count: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            shape: Shape::Ramp,
            width: 64,
            height: 64,
            amplitude: 10.0,
            ramp_slope: -0.08,
            slope_max: None,
            coherence_profile: Profile::Uniform,
            coherence_level: 1.0,
            count: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpuConfig {
    pub p_gpu: f64,
    /// Seconds; when absent the classical oracle is timed on the scene.
    pub t_process: Option<f64>,
}

impl Default for GpuConfig {
    fn default() -> Self {
        GpuConfig { p_gpu: GpuBaseline::DEFAULT_WATTS, t_process: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Coherence threshold of the masked accuracy.
    pub mask_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { mask_threshold: 0.3 }
    }
}

/// Everything a command may read. `seed` seeds scene synthesis, network
/// initialisation and the training order; `learn.rng_seed` is overwritten by it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub engine: Engine,
    pub mode: Mode,
    pub scene: SceneConfig,
    pub network: NetworkParams,
    pub learn: LearnParams,
    pub hardware: HardwareProfile,
    pub gpu: GpuConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: snn_unwrap::Error| CliError::Config(e.to_string());
        self.network.validate().map_err(bad)?;
        self.learn.validate(self.network.encoding.rate.dt).map_err(bad)?;
        self.hardware.validate().map_err(bad)?;
        GpuBaseline::new(self.gpu.p_gpu, self.gpu.t_process.unwrap_or(0.0), Default::default()).map_err(bad)?;
        let s = &self.scene;
        if s.count == 0 {
            return Err(CliError::Config("scene.count must be at least 1".into()));
        }
        if let Some(max) = s.slope_max {
            if !(max > s.ramp_slope) {
                return Err(CliError::Config("scene.slope_max must exceed scene.ramp_slope".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.eval.mask_threshold) {
            return Err(CliError::Config("eval.mask_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn default_toml() -> String {
        toml::to_string_pretty(&RunConfig::default()).expect("default config serialises")
    }
}
