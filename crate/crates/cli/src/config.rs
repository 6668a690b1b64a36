//! Run configuration: one JSON document governs every stage.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use trajalign::align::AlignParams;
use trajalign::forecast::TrainParams;
use trajalign::sim::{
    Bounds, ClutterMode, Perturbation, SceneConfig, SensorConfig, TrackConfig, TrajectoryModel, Waypoint,
};
use trajalign::tknn::{ChainParams, TknnParams};
use trajalign::{CameraModel, Extrinsic};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudFormat {
    #[default]
    Bin,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Constant-acceleration extrapolation of a fitted state.
    Analytic,
    /// Trained feedforward head.
    Mlp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastConfig {
    /// Horizons (s) at which predictions are issued and scored.
    pub horizons: Vec<f64>,
    /// Fit window (s) of the analytic state estimate.
    pub window: f64,
    /// Use every n-th label time as an issue time.
    pub issue_stride: usize,
    pub methods: Vec<Method>,
    pub mlp: TrainParams,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            horizons: vec![0.0, 1.0, 3.0, 5.0],
            window: 2.0,
            issue_stride: 1,
            methods: vec![Method::Analytic, Method::Mlp],
            mlp: TrainParams {
                epochs: 60,
                ..TrainParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Largest issue-time difference when pairing predictions with truth (s).
    pub time_eps: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { time_eps: 1e-6 }
    }
}

/// File names, relative to the output directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub cloud_format: CloudFormat,
    pub clouds: PathBuf,
    pub tracks: PathBuf,
    pub manifest: PathBuf,
    pub vectors: PathBuf,
    pub trajectory: PathBuf,
    pub correction: PathBuf,
    pub labels: PathBuf,
    pub predictions: PathBuf,
    pub head: PathBuf,
    /// Per-method metrics go to `<stem>_<method>.csv`, the report to `<stem>.json`.
    pub metrics: PathBuf,
    pub plots: PathBuf,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            cloud_format: CloudFormat::Bin,
            clouds: "clouds.bin".into(),
            tracks: "tracks.csv".into(),
            manifest: "manifest.json".into(),
            vectors: "vectors.csv".into(),
            trajectory: "trajectory.csv".into(),
            correction: "correction.json".into(),
            labels: "labels.csv".into(),
            predictions: "predictions.csv".into(),
            head: "head".into(),
            metrics: "metrics".into(),
            plots: "plots".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Nominal calibration handed to every stage.
    pub camera: CameraModel,
    pub tknn: TknnParams,
    pub align: AlignParams,
    pub forecast: ForecastConfig,
    pub eval: EvalConfig,
    pub sim: SceneConfig,
    pub io: IoConfig,
}

pub fn nominal_camera() -> CameraModel {
    let r = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
    CameraModel::pinhole(700.0, 700.0, 640.0, 360.0, 1280, 720)
        .with_unified(0.9, -0.05, 0.01)
        .with_extrinsic(Extrinsic::new(r, Vector3::new(0.0, 1.5, 0.0)).expect("rotation is orthonormal"))
}

/// Closed loop in front of the camera: about 28 m away, 8 m up.
pub fn orbit_waypoints(duration: f64, period: f64, range: f64) -> Vec<Waypoint> {
    let n = duration.ceil() as usize;
    (0..=n)
        .map(|k| {
            let t = k as f64;
            let a = t * std::f64::consts::TAU / period;
            Waypoint {
                t,
                position: [14.0 * a.sin(), range + 6.0 * a.cos(), 8.0 + 2.0 * (0.5 * a).sin()],
            }
        })
        .collect()
}

pub fn nominal_scene() -> SceneConfig {
    SceneConfig {
        duration: 20.0,
        trajectory: TrajectoryModel::WaypointSpline {
            waypoints: orbit_waypoints(20.0, 10.0, 28.0),
        },
        max_speed: Some(40.0),
        max_acceleration: None,
        bounds: Bounds {
            min: [-40.0, 5.0, 0.0],
            max: [40.0, 60.0, 20.0],
        },
        sensors: vec![SensorConfig {
            id: 0,
            rate: 10.0,
            timestamp_jitter: 0.0,
            offset: 0.0,
            point_noise: 0.05,
            dropout: 0.0,
            clutter_density: 50,
            clutter_jitter: 0.0,
            clutter_mode: ClutterMode::Resampled,
        }],
        tracks: TrackConfig {
            rate: 30.0,
            pixel_noise: 1.0,
            n_background: 10,
        },
        perturbation: Perturbation {
            time_offset: 0.05,
            ..Perturbation::default()
        },
        seed: 7,
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            camera: nominal_camera(),
            tknn: TknnParams {
                k: 1,
                frame_offset: 1,
                tau: 30.0,
                max_neighbor_distance: f64::INFINITY,
            },
            align: AlignParams {
                chain: ChainParams {
                    gap_max: 3,
                    cluster_radius: 2.0,
                    max_link_speed: 40.0,
                },
                ..AlignParams::default()
            },
            forecast: ForecastConfig::default(),
            eval: EvalConfig::default(),
            sim: nominal_scene(),
            io: IoConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        let wrap = |r: trajalign::Result<()>| r.map_err(|e| CliError::Config(e.to_string()));
        wrap(self.tknn.validate())?;
        wrap(self.align.validate())?;
        wrap(self.forecast.mlp.validate())?;
        wrap(self.sim.validate())?;
        let f = &self.forecast;
        if f.horizons.is_empty() || f.horizons.iter().any(|h| !(*h >= 0.0)) {
            return Err(CliError::Config("forecast.horizons must be non-empty and >= 0".into()));
        }
        if !(f.window > 0.0) || f.issue_stride == 0 || f.methods.is_empty() {
            return Err(CliError::Config(
                "forecast.window > 0, forecast.issue_stride >= 1 and a non-empty forecast.methods required".into(),
            ));
        }
        if !(self.eval.time_eps >= 0.0) {
            return Err(CliError::Config("eval.time_eps must be >= 0".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// `path` itself when absolute, otherwise joined onto `dir`.
pub fn resolve(dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        dir.join(path)
    }
}
