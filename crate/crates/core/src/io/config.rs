//! Run configuration file.
//!
//! TOML with five optional sections. Every key has a default, so an empty
//! file is valid; unknown keys are rejected.
//!
//! ```toml
//! [run]
//! seed = 0
//! out = "out"
//! delta_h = 0.76          # simulate: observation height change
//! model = "source"        # simulate / oracle: detector to emulate
//! masks = ["z", "xyz"]    # oracle: parameters replaced by ground truth
//!
//! [camera]
//! focal = 1000.0
//! u0 = 800.0
//! v0 = 450.0
//! image_width = 1600.0
//! image_height = 900.0
//! mount_height = 1.51
//!
//! [scene]
//! depth_min = 5.0
//! depth_max = 60.0
//! lateral_min = -15.0
//! lateral_max = 15.0
//! boxes_min = 1
//! boxes_max = 12
//! length = 4.5
//! width = 1.9
//! height = 1.6
//! length_std = 0.4
//! width_std = 0.15
//! height_std = 0.15
//! class = "Car"
//!
//! [sweep]
//! grid = [-0.70, -0.35, 0.0, 0.38, 0.76]
//! frames = 200
//! calibration_frames = 200
//! models = ["source", "ground", "fused", "compensated", "compensated++"]
//!
//! [model]
//! sigma = 0.5
//! relu = true
//! alpha_mode = "product"
//! fit_alpha = true
//! fusion_weight = 0.5     # or "learned"
//! z_assumed = 50.0
//! ground_response = "source-pixel"
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::depth_models::{AlphaFormulation, GroundResponse, NoiseModel};
use crate::eval::OracleSpec;
use crate::geometry::{Camera, CameraExtrinsics, CameraIntrinsics};
use crate::scene_sim::SceneConfig;
use crate::trend::{FusionWeight, ModelKind, ModelOptions, SweepConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(String),
    #[error("config field {field}: {message}")]
    Field { field: String, message: String },
}

fn field(name: &str, message: impl ToString) -> ConfigError {
    ConfigError::Field { field: name.to_string(), message: message.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out: PathBuf,
    pub delta_h: f64,
    pub model: String,
    pub masks: Vec<String>,
    pub threads: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            delta_h: 0.76,
            model: "source".into(),
            masks: Vec::new(),
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub focal: f64,
    pub u0: f64,
    pub v0: f64,
    pub image_width: f64,
    pub image_height: f64,
    pub mount_height: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        Self { focal: 1000.0, u0: 800.0, v0: 450.0, image_width: 1600.0, image_height: 900.0, mount_height: 1.51 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub depth_min: f64,
    pub depth_max: f64,
    pub lateral_min: f64,
    pub lateral_max: f64,
    pub boxes_min: usize,
    pub boxes_max: usize,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub length_std: f64,
    pub width_std: f64,
    pub height_std: f64,
    pub class: String,
}

impl Default for SceneSection {
    fn default() -> Self {
        let s = SceneConfig::default();
        Self {
            depth_min: s.depth_range.0,
            depth_max: s.depth_range.1,
            lateral_min: s.lateral_range.0,
            lateral_max: s.lateral_range.1,
            boxes_min: s.box_count.0,
            boxes_max: s.box_count.1,
            length: s.dims_mean[0],
            width: s.dims_mean[1],
            height: s.dims_mean[2],
            length_std: s.dims_std[0],
            width_std: s.dims_std[1],
            height_std: s.dims_std[2],
            class: s.class,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub grid: Vec<f64>,
    pub frames: usize,
    pub calibration_frames: usize,
    pub models: Vec<String>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let s = SweepConfig::default();
        Self {
            grid: s.grid,
            frames: s.frames_per_point,
            calibration_frames: s.calibration_frames,
            models: s.models.iter().map(|m| m.name().to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightValue {
    Number(f64),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub sigma: f64,
    pub relu: bool,
    pub alpha_mode: AlphaFormulation,
    pub fit_alpha: bool,
    pub fusion_weight: WeightValue,
    pub z_assumed: f64,
    pub ground_response: GroundResponse,
}

impl Default for ModelSection {
    fn default() -> Self {
        let o = ModelOptions::default();
        Self {
            sigma: NoiseModel::default().sigma,
            relu: o.relu_guard,
            alpha_mode: o.alpha_mode,
            fit_alpha: o.fit_alpha,
            fusion_weight: WeightValue::Number(0.5),
            z_assumed: o.z_assumed,
            ground_response: o.ground_response,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub camera: CameraSection,
    pub scene: SceneSection,
    pub sweep: SweepSection,
    pub model: ModelSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Canonical text of the effective configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical text, hex encoded. The output directory is
    /// left out so the same experiment hashes alike wherever it is written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.out = RunSection::default().out;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn camera(&self) -> Result<Camera, ConfigError> {
        let c = &self.camera;
        let intrinsics =
            CameraIntrinsics::new(c.focal, c.u0, c.v0, c.image_width, c.image_height).map_err(|e| field("camera", e))?;
        let extrinsics = CameraExtrinsics::level(c.mount_height).map_err(|e| field("camera.mount_height", e))?;
        Ok(Camera::new(intrinsics, extrinsics))
    }

    pub fn scene_config(&self) -> Result<SceneConfig, ConfigError> {
        let s = &self.scene;
        Ok(SceneConfig {
            camera: self.camera()?,
            delta_h: 0.0,
            depth_range: (s.depth_min, s.depth_max),
            lateral_range: (s.lateral_min, s.lateral_max),
            box_count: (s.boxes_min, s.boxes_max),
            dims_mean: [s.length, s.width, s.height],
            dims_std: [s.length_std, s.width_std, s.height_std],
            class: s.class.clone(),
        })
    }

    pub fn models(&self) -> Result<Vec<ModelKind>, ConfigError> {
        self.sweep.models.iter().map(|m| m.parse().map_err(|e| field("sweep.models", e))).collect()
    }

    pub fn simulate_model(&self) -> Result<ModelKind, ConfigError> {
        self.run.model.parse().map_err(|e| field("run.model", e))
    }

    pub fn masks(&self) -> Result<Vec<OracleSpec>, ConfigError> {
        self.run.masks.iter().map(|m| m.parse().map_err(|e| field("run.masks", e))).collect()
    }

    pub fn fusion_weight(&self) -> Result<FusionWeight, ConfigError> {
        let parsed = match &self.model.fusion_weight {
            WeightValue::Number(w) => w.to_string().parse(),
            WeightValue::Name(n) => n.parse(),
        };
        parsed.map_err(|e| field("model.fusion_weight", e))
    }

    pub fn sweep_config(&self) -> Result<SweepConfig, ConfigError> {
        let m = &self.model;
        Ok(SweepConfig {
            grid: self.sweep.grid.clone(),
            frames_per_point: self.sweep.frames,
            calibration_frames: self.sweep.calibration_frames,
            seed: self.run.seed,
            models: self.models()?,
            scene: self.scene_config()?,
            noise: NoiseModel::new(m.sigma).map_err(|e| field("model.sigma", e))?,
            options: ModelOptions {
                relu_guard: m.relu,
                alpha_mode: m.alpha_mode,
                fit_alpha: m.fit_alpha,
                fusion_weight: self.fusion_weight()?,
                z_assumed: m.z_assumed,
                ground_response: m.ground_response,
            },
            threads: self.run.threads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let sweep = cfg.sweep_config().unwrap();
        assert_eq!(sweep.grid, SweepConfig::default().grid);
        assert_eq!(sweep.scene, SceneConfig::default());
        assert_eq!(sweep.options, ModelOptions::default());
    }

    #[test]
    fn canonical_text_round_trips() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.hash(), RunConfig::default().hash());
        assert_eq!(cfg.hash().len(), 64);
        let mut moved = cfg.clone();
        moved.run.out = "elsewhere".into();
        assert_eq!(moved.hash(), cfg.hash());
        moved.run.seed = 1;
        assert_ne!(moved.hash(), cfg.hash());
    }

    #[test]
    fn sections_and_errors() {
        let cfg = RunConfig::from_toml("[model]\nfusion_weight = \"learned\"\nalpha_mode = \"sum\"\n").unwrap();
        let sweep = cfg.sweep_config().unwrap();
        assert_eq!(sweep.options.fusion_weight, FusionWeight::Learned);
        assert_eq!(sweep.options.alpha_mode, AlphaFormulation::Sum);

        let err = RunConfig::from_toml("[sweep]\nframes = \"many\"\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(RunConfig::from_toml("[sweep]\nunknown = 1\n").is_err());

        let bad = RunConfig::from_toml("[sweep]\nmodels = [\"lidar\"]\n").unwrap();
        assert!(matches!(bad.sweep_config(), Err(ConfigError::Field { .. })));
    }
}
