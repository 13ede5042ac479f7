//! Run configuration, loaded from JSON.

use std::path::{Path, PathBuf};

use geo_orbit_core::fed::{CentralConfig, FedConfig, LinkModel};
use geo_orbit_core::metanet::{FeatureScaling, DEFAULT_HIDDEN};
use geo_orbit_core::metrics::{LossWeights, MatchStrategy, MetricsConfig};
use geo_orbit_core::pipeline::DetectionParams;
use geo_orbit_core::scenario::ParamGrid;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io;

/// Coordinate system of the `x, y` values in tracks files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackCoordinates {
    #[default]
    Meters,
    /// Needs `paths.homography`.
    Pixels,
    /// Longitude, latitude; needs `paths.anchor`.
    Degrees,
}

/// File locations. Relative paths are resolved against the directory of
/// the config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Scene spec JSON files of the training clients. Empty means the
    /// built-in benchmark.
    pub scenes: Vec<PathBuf>,
    /// Held-out scene specs. Empty means the built-in held-out set.
    pub unseen_scenes: Vec<PathBuf>,
    pub homography: Option<PathBuf>,
    pub anchor: Option<PathBuf>,
    /// Predictor checkpoint used by `detect` when no params are given.
    pub checkpoint: Option<PathBuf>,
    /// Default for `--out`.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederatedSettings {
    pub rounds: u32,
    pub sample_fraction: f64,
    pub lr: f64,
    pub hidden: usize,
    /// Declared size of the per-round scene report each client uploads.
    pub report_bytes: u64,
}

impl Default for FederatedSettings {
    fn default() -> Self {
        Self {
            rounds: 20,
            sample_fraction: 1.0,
            lr: 0.5,
            hidden: DEFAULT_HIDDEN,
            report_bytes: 70_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralizedSettings {
    pub epochs: u32,
    pub lr: f64,
    pub hidden: usize,
}

impl Default for CentralizedSettings {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.5,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Tracks per lane for the built-in benchmark scenes.
    pub tracks_per_lane: usize,
    pub paths: PathsConfig,
    pub track_coordinates: TrackCoordinates,
    /// Hour of day assumed for tracks files, which carry no clock.
    pub hour_of_day: f64,
    pub weights: LossWeights,
    pub stop_threshold: f64,
    pub frechet_samples: usize,
    pub match_strategy: MatchStrategy,
    pub federated: FederatedSettings,
    pub centralized: CentralizedSettings,
    pub link: LinkModel,
    pub grid: ParamGrid,
    pub feature_scaling: FeatureScaling,
    /// Fixed parameters of the untrained baseline.
    pub baseline_params: DetectionParams,
    /// Wall-clock window used for the bits-per-second figures.
    pub session_seconds: f64,
    pub kmeans_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let metrics = MetricsConfig::default();
        Self {
            seed: 42,
            tracks_per_lane: 200,
            paths: PathsConfig::default(),
            track_coordinates: TrackCoordinates::Meters,
            hour_of_day: 12.0,
            weights: metrics.weights,
            stop_threshold: metrics.stop_threshold,
            frechet_samples: metrics.frechet_samples,
            match_strategy: metrics.strategy,
            federated: FederatedSettings::default(),
            centralized: CentralizedSettings::default(),
            link: LinkModel::default(),
            grid: ParamGrid::default(),
            feature_scaling: FeatureScaling::default(),
            baseline_params: DetectionParams::default(),
            session_seconds: 1.0,
            kmeans_seed: 0,
        }
    }
}

impl RunConfig {
    /// Reads, resolves relative paths and validates.
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut cfg: RunConfig = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate().map_err(|e| CliError::parse(path, e))?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        paths.scenes.iter_mut().for_each(join);
        paths.unseen_scenes.iter_mut().for_each(join);
        for p in [
            &mut paths.homography,
            &mut paths.anchor,
            &mut paths.checkpoint,
            &mut paths.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
    }

    /// Every input path must exist and every number must be in range.
    pub fn validate(&self) -> Result<(), String> {
        let p = &self.paths;
        for path in p
            .scenes
            .iter()
            .chain(&p.unseen_scenes)
            .chain(&p.homography)
            .chain(&p.anchor)
            .chain(&p.checkpoint)
        {
            if !path.exists() {
                return Err(format!("path does not exist: {}", path.display()));
            }
        }
        match self.track_coordinates {
            TrackCoordinates::Pixels if p.homography.is_none() => {
                return Err("track_coordinates = pixels needs paths.homography".into())
            }
            TrackCoordinates::Degrees if p.anchor.is_none() => {
                return Err("track_coordinates = degrees needs paths.anchor".into())
            }
            _ => {}
        }
        if self.tracks_per_lane == 0 {
            return Err("tracks_per_lane must be positive".into());
        }
        if !(0.0..24.0).contains(&self.hour_of_day) {
            return Err("hour_of_day must be in [0, 24)".into());
        }
        if !(self.stop_threshold.is_finite() && self.stop_threshold > 0.0) {
            return Err("stop_threshold must be positive".into());
        }
        if self.frechet_samples < 2 {
            return Err("frechet_samples must be at least 2".into());
        }
        if !(self.session_seconds.is_finite() && self.session_seconds > 0.0) {
            return Err("session_seconds must be positive".into());
        }
        if self.centralized.epochs == 0 || self.centralized.hidden == 0 {
            return Err("centralized epochs and hidden must be positive".into());
        }
        if !(self.centralized.lr.is_finite() && self.centralized.lr > 0.0) {
            return Err("centralized lr must be positive".into());
        }
        self.weights.validate().map_err(|e| e.to_string())?;
        self.feature_scaling.validate().map_err(|e| e.to_string())?;
        self.baseline_params
            .validate()
            .map_err(|e| format!("baseline_params: {e}"))?;
        self.grid
            .points(self.kmeans_seed)
            .map_err(|e| format!("grid: {e}"))?;
        self.fed_config().validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn metrics(&self) -> MetricsConfig {
        MetricsConfig {
            weights: self.weights,
            strategy: self.match_strategy,
            frechet_samples: self.frechet_samples,
            stop_threshold: self.stop_threshold,
        }
    }

    pub fn fed_config(&self) -> FedConfig {
        let f = &self.federated;
        FedConfig {
            rounds: f.rounds,
            sample_fraction: f.sample_fraction,
            lr: f.lr,
            seed: self.seed,
            hidden: f.hidden,
            report_bytes: f.report_bytes,
            link: self.link,
            metrics: self.metrics(),
            kmeans_seed: self.kmeans_seed,
        }
    }

    pub fn central_config(&self) -> CentralConfig {
        let c = &self.centralized;
        CentralConfig {
            epochs: c.epochs,
            lr: c.lr,
            seed: self.seed,
            hidden: c.hidden,
            link: self.link,
        }
    }
}
