#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use trajalign::sim::{
    Bounds, ClutterMode, Perturbation, SceneConfig, SensorConfig, TrackConfig, TrajectoryModel, Waypoint,
};
use trajalign::{CameraModel, Extrinsic};

/// Forward-looking fisheye 1.5 m up, looking along +y.
pub fn camera() -> CameraModel {
    let r = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
    CameraModel::pinhole(700.0, 700.0, 640.0, 360.0, 1280, 720)
        .with_unified(0.9, -0.05, 0.01)
        .with_extrinsic(Extrinsic::new(r, Vector3::new(0.0, 1.5, 0.0)).unwrap())
}

pub fn orbit(duration: f64, period: f64, range: f64) -> TrajectoryModel {
    let waypoints = (0..=duration.ceil() as usize)
        .map(|k| {
            let t = k as f64;
            let a = t * std::f64::consts::TAU / period;
            Waypoint {
                t,
                position: [14.0 * a.sin(), range + 6.0 * a.cos(), 8.0 + 2.0 * (0.5 * a).sin()],
            }
        })
        .collect();
    TrajectoryModel::WaypointSpline { waypoints }
}

pub fn sensor(point_noise: f64, clutter: usize) -> SensorConfig {
    SensorConfig {
        id: 0,
        rate: 10.0,
        timestamp_jitter: 0.0,
        offset: 0.0,
        point_noise,
        dropout: 0.0,
        clutter_density: clutter,
        clutter_jitter: 0.0,
        clutter_mode: ClutterMode::Resampled,
    }
}

pub fn scene(trajectory: TrajectoryModel, duration: f64, seed: u64) -> SceneConfig {
    SceneConfig {
        duration,
        trajectory,
        max_speed: None,
        max_acceleration: None,
        bounds: Bounds {
            min: [-40.0, 5.0, 0.0],
            max: [40.0, 60.0, 20.0],
        },
        sensors: vec![sensor(0.0, 0)],
        tracks: TrackConfig {
            rate: 30.0,
            pixel_noise: 0.0,
            n_background: 0,
        },
        perturbation: Perturbation::default(),
        seed,
    }
}
