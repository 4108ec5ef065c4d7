use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{LocalApproxConfig, TrainOptions};
use crate::locomotion::{PipmParams, SafetyLimits};
use crate::model_error::ContextRanges;
use crate::terrain::{ClearZone, SensorSpec, TerrainSpec, TerrainStyle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Rbf,
    Nn,
    Attentive,
}

impl KernelChoice {
    pub const ALL: [KernelChoice; 3] =
        [KernelChoice::Rbf, KernelChoice::Nn, KernelChoice::Attentive];

    pub fn name(&self) -> &'static str {
        match self {
            KernelChoice::Rbf => "rbf",
            KernelChoice::Nn => "nn",
            KernelChoice::Attentive => "attentive",
        }
    }
}

impl std::str::FromStr for KernelChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbf" => Ok(Self::Rbf),
            "nn" => Ok(Self::Nn),
            "attentive" | "ak" => Ok(Self::Attentive),
            other => Err(Error::Config(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainGpSettings {
    pub noise_var: f64,
    /// Inducing points of the sparse posterior (RBF and attentive kernels).
    pub inducing: usize,
    pub train: TrainOptions,
    /// Clustered local approximation (NN kernel).
    pub local: LocalApproxConfig,
    /// Local neighbourhoods whose summed LML trains the NN kernel.
    pub nn_train_patches: usize,
    /// Attentive kernel: base count, hidden width and lengthscale range (m).
    pub ak_bases: usize,
    pub ak_hidden: usize,
    pub ak_lengthscales: (f64, f64),
}

impl Default for TerrainGpSettings {
    fn default() -> Self {
        Self {
            noise_var: 4e-5,
            inducing: 500,
            train: TrainOptions {
                max_iters: 40,
                learning_rate: 0.05,
                max_points: 250,
                ..TrainOptions::default()
            },
            local: LocalApproxConfig::default(),
            nn_train_patches: 3,
            ak_bases: 6,
            ak_hidden: 8,
            ak_lengthscales: (0.4, 4.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalSettings {
    pub d_step: f64,
    pub region_size: f64,
    pub budget: usize,
    pub refine: usize,
    pub goal_bias: f64,
    pub edge_spacing: Option<f64>,
    pub attempts: usize,
    /// The global search plans on the belief mean dilated by this radius (m).
    pub clearance: f64,
}

impl Default for GlobalSettings {
    fn default() -> Self {
        Self {
            d_step: 1.5,
            region_size: 5.0,
            budget: 4000,
            refine: 300,
            goal_bias: 0.1,
            edge_spacing: Some(0.25),
            attempts: 2,
            clearance: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalSettings {
    pub budget: usize,
    pub goal_bias: f64,
    pub margin: f64,
    pub edge_spacing: f64,
    pub candidates: usize,
    pub alpha_w: f64,
    pub beta_w: f64,
    /// Extra rounds of candidate generation when every candidate fails.
    pub retries: usize,
    /// Admissible steps that must remain possible from a segment's last
    /// waypoint; the final retry round drops the requirement.
    pub lookahead: usize,
}

impl Default for LocalSettings {
    fn default() -> Self {
        Self {
            budget: 2000,
            goal_bias: 0.15,
            margin: 3.0,
            edge_spacing: 0.05,
            candidates: 3,
            alpha_w: 1.0,
            beta_w: 1.0,
            retries: 2,
            lookahead: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelErrorSettings {
    /// Trained artifact; trained in-process from `training_seed` when absent.
    pub artifact: Option<PathBuf>,
    pub points_per_axis: usize,
    pub training_seed: u64,
    pub ranges: ContextRanges,
    /// Noise of the oracle draws, both in training and execution.
    pub oracle_noise_std: f64,
}

impl Default for ModelErrorSettings {
    fn default() -> Self {
        Self {
            artifact: None,
            points_per_axis: 4,
            training_seed: 0,
            ranges: ContextRanges::default(),
            oracle_noise_std: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub terrain: TerrainSpec,
    pub terrain_seed: u64,
    pub kernel: KernelChoice,
    pub limits: SafetyLimits,
    pub pipm: PipmParams,
    pub sensor: SensorSpec,
    pub prior_points: usize,
    /// Retrain at least every this many steps.
    pub retrain_period: usize,
    /// Hyperparameters are refit on every this-many-th retrain.
    pub refit_every: usize,
    pub gp: TerrainGpSettings,
    pub global: GlobalSettings,
    pub local: LocalSettings,
    pub model_error: ModelErrorSettings,
    pub max_steps: usize,
    pub start: [f64; 2],
    pub start_heading: f64,
    pub goal: [f64; 2],
    /// Seed of the mission's planning, sensing and perturbation streams.
    pub seed: u64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        let start = [2.0, 2.0];
        let goal = [18.0, 18.0];
        Self {
            terrain: TerrainSpec {
                clear_zones: vec![
                    ClearZone {
                        center: start,
                        radius: 6.0,
                    },
                    ClearZone {
                        center: goal,
                        radius: 6.0,
                    },
                ],
                ..TerrainSpec::default()
            },
            terrain_seed: 0,
            kernel: KernelChoice::Rbf,
            limits: SafetyLimits::default(),
            pipm: PipmParams::default(),
            sensor: SensorSpec::default(),
            prior_points: 500,
            retrain_period: 20,
            refit_every: 3,
            gp: TerrainGpSettings::default(),
            global: GlobalSettings::default(),
            local: LocalSettings::default(),
            model_error: ModelErrorSettings::default(),
            max_steps: 1000,
            start,
            start_heading: std::f64::consts::FRAC_PI_4,
            goal,
            seed: 0,
        }
    }
}

impl MissionConfig {
    /// Default mission on a given terrain style, with terrain and mission seeded alike.
    pub fn for_style(style: TerrainStyle, kernel: KernelChoice, seed: u64) -> Self {
        let mut c = Self::default();
        c.terrain.style = style;
        c.terrain_seed = seed;
        c.seed = seed;
        c.kernel = kernel;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.terrain.validate()?;
        self.limits.validate()?;
        self.pipm.validate()?;
        self.sensor.validate()?;
        if self.retrain_period == 0 || self.refit_every == 0 {
            return Err(Error::Config(
                "retrain period and refit interval must be at least 1".into(),
            ));
        }
        if !(self.global.d_step > self.limits.d_safe) {
            return Err(Error::Config(format!(
                "global step {} must exceed the local safe step {}",
                self.global.d_step, self.limits.d_safe
            )));
        }
        if self.local.candidates == 0 {
            return Err(Error::Config(
                "at least one local candidate is required".into(),
            ));
        }
        let grid = self.terrain.nodes[0] * self.terrain.nodes[1];
        if self.prior_points > grid {
            return Err(Error::Config(format!(
                "{} prior points requested from a {grid}-node grid",
                self.prior_points
            )));
        }
        if !(self.gp.noise_var > 0.0) {
            return Err(Error::Config(
                "terrain GP noise variance must be positive".into(),
            ));
        }
        let b = &self.terrain.bounds;
        for (name, p) in [("start", self.start), ("goal", self.goal)] {
            if !b.contains(crate::geometry::Point2::new(p[0], p[1])) {
                return Err(Error::Config(format!(
                    "{name} {p:?} lies outside the workspace"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        MissionConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: MissionConfig = serde_json::from_str(r#"{"kernel": "nn", "seed": 4}"#).unwrap();
        assert_eq!(c.kernel, KernelChoice::Nn);
        assert_eq!(c.prior_points, 500);
    }

    #[test]
    fn global_step_must_exceed_local() {
        let mut c = MissionConfig::default();
        c.global.d_step = 0.3;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
