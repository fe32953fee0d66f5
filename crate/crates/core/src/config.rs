//! One JSON document holding every tunable of the pipeline.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dersim::{MaterialParams, SimConfig};
use crate::files::{self, FileError};
use crate::fusion::IcpParams;
use crate::graspplan::GraspParams;
use crate::registry::StrategySpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error("config schema_version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    /// Register each view against the views before it.
    pub icp: bool,
    pub icp_params: IcpParams,
    pub downsample_cell_m: f64,
    /// Defaults to three downsample cells.
    pub dbscan_eps_m: Option<f64>,
    pub dbscan_min_pts: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            icp: true,
            icp_params: IcpParams::default(),
            downsample_cell_m: 0.001,
            dbscan_eps_m: None,
            dbscan_min_pts: 8,
        }
    }
}

impl FusionConfig {
    pub fn dbscan_eps(&self) -> f64 {
        self.dbscan_eps_m.unwrap_or(3.0 * self.downsample_cell_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkeletonConfig {
    pub resolution_m: f64,
    pub max_grid_dim: usize,
    pub knn_k: usize,
    pub edge_cost: StrategySpec,
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        Self {
            resolution_m: 0.002,
            max_grid_dim: crate::fusion::DEFAULT_MAX_GRID_DIM,
            knn_k: 6,
            edge_cost: StrategySpec::with_params("thick-vertical", serde_json::json!({"eps": 0.5, "beta": 1.0, "gamma": 1.0})),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RodConfig {
    /// Skeleton polylines are resampled so no rod edge is longer than this.
    pub max_edge_m: f64,
}

impl Default for RodConfig {
    fn default() -> Self {
        Self { max_edge_m: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub fusion: FusionConfig,
    pub skeleton: SkeletonConfig,
    pub grasp: GraspParams,
    pub material: MaterialParams,
    pub rod: RodConfig,
    pub sim: SimConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            fusion: FusionConfig::default(),
            skeleton: SkeletonConfig::default(),
            grasp: GraspParams::default(),
            material: MaterialParams::default(),
            rod: RodConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = files::read_text(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| FileError::format(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        files::to_json_string(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("fusion.downsample_cell_m", self.fusion.downsample_cell_m)?;
        positive("fusion.dbscan_eps_m", self.fusion.dbscan_eps())?;
        positive("skeleton.resolution_m", self.skeleton.resolution_m)?;
        positive("rod.max_edge_m", self.rod.max_edge_m)?;
        if self.fusion.dbscan_min_pts == 0 {
            return Err(ConfigError::Invalid("fusion.dbscan_min_pts must be >= 1".into()));
        }
        if self.skeleton.knn_k == 0 {
            return Err(ConfigError::Invalid("skeleton.knn_k must be >= 1".into()));
        }
        if self.skeleton.max_grid_dim < 3 {
            return Err(ConfigError::Invalid("skeleton.max_grid_dim must be >= 3".into()));
        }
        self.grasp.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.material.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
