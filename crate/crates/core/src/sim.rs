//! Synthetic scenes: a ground-truth target trajectory, asynchronous noisy
//! LiDAR streams with clutter, image feature tracks and a controlled
//! miscalibration between LiDAR and camera.

use nalgebra::{Rotation3, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::flow::{FeatureTrack, TrackSample};
use crate::par::Exec;
use crate::projection::project_world;
use crate::rng::{substream, SeededRng};
use crate::types::{Point3, PointCloudFrame, Trajectory, TrajectorySample};

/// Internal sampling rate of ground-truth trajectories (Hz).
pub const TRUTH_RATE: f64 = 1000.0;

/// Fraction of track frames in which the target must project into the image.
pub const MIN_VISIBLE_FRACTION: f64 = 0.1;

const TRACK_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectoryModel {
    ConstantVelocity {
        start: [f64; 3],
        velocity: [f64; 3],
    },
    ConstantAcceleration {
        start: [f64; 3],
        velocity: [f64; 3],
        acceleration: [f64; 3],
    },
    /// Natural cubic spline through the waypoints, per axis.
    WaypointSpline {
        waypoints: Vec<Waypoint>,
    },
}

/// Position, velocity and acceleration of a model at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthState {
    pub position: Point3,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

/// Natural cubic spline of one coordinate.
#[derive(Debug, Clone)]
struct Spline1 {
    t: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl Spline1 {
    fn new(t: &[f64], y: &[f64]) -> Self {
        let n = t.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for the interior second derivatives
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 1..n - 1 {
                let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for i in 1..k {
                let lower = t[i + 1] - t[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Self {
            t: t.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    /// Value, first and second derivative.
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.t.len();
        let i = self.t.partition_point(|&ti| ti <= x).clamp(1, n - 1) - 1;
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - x) / h;
        let b = (x - self.t[i]) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let value = a * self.y[i] + b * self.y[i + 1] + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let slope =
            (self.y[i + 1] - self.y[i]) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        let curvature = a * m0 + b * m1;
        (value, slope, curvature)
    }
}

impl TrajectoryModel {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|c| c.is_finite());
        let ok = match self {
            Self::ConstantVelocity { start, velocity } => finite(start) && finite(velocity),
            Self::ConstantAcceleration {
                start,
                velocity,
                acceleration,
            } => finite(start) && finite(velocity) && finite(acceleration),
            Self::WaypointSpline { waypoints } => {
                if waypoints.len() < 2 {
                    return Err(Error::InvalidConfig("a spline needs at least 2 waypoints".into()));
                }
                if waypoints.windows(2).any(|w| !(w[1].t > w[0].t)) {
                    return Err(Error::InvalidConfig(
                        "waypoint times must be strictly increasing".into(),
                    ));
                }
                waypoints.iter().all(|w| w.t.is_finite() && finite(&w.position))
            }
        };
        if !ok {
            return Err(Error::InvalidConfig("non-finite trajectory parameter".into()));
        }
        Ok(())
    }

    /// Time span on which the model is defined, if limited.
    pub fn span(&self) -> Option<(f64, f64)> {
        match self {
            Self::WaypointSpline { waypoints } => Some((waypoints[0].t, waypoints[waypoints.len() - 1].t)),
            _ => None,
        }
    }

    pub fn evaluator(&self) -> TruthEvaluator {
        let splines = match self {
            Self::WaypointSpline { waypoints } => {
                let t: Vec<f64> = waypoints.iter().map(|w| w.t).collect();
                Some(
                    (0..3)
                        .map(|a| Spline1::new(&t, &waypoints.iter().map(|w| w.position[a]).collect::<Vec<_>>()))
                        .collect(),
                )
            }
            _ => None,
        };
        TruthEvaluator {
            model: self.clone(),
            splines,
        }
    }
}

/// Closed-form evaluation of a [`TrajectoryModel`].
#[derive(Debug, Clone)]
pub struct TruthEvaluator {
    model: TrajectoryModel,
    splines: Option<Vec<Spline1>>,
}

impl TruthEvaluator {
    pub fn state(&self, t: f64) -> TruthState {
        match &self.model {
            TrajectoryModel::ConstantVelocity { start, velocity } => {
                let (p, v) = (Point3::from(*start), Vector3::from(*velocity));
                TruthState {
                    position: p + v * t,
                    velocity: v,
                    acceleration: Vector3::zeros(),
                }
            }
            TrajectoryModel::ConstantAcceleration {
                start,
                velocity,
                acceleration,
            } => {
                let (p, v, a) = (
                    Point3::from(*start),
                    Vector3::from(*velocity),
                    Vector3::from(*acceleration),
                );
                TruthState {
                    position: p + v * t + a * (0.5 * t * t),
                    velocity: v + a * t,
                    acceleration: a,
                }
            }
            TrajectoryModel::WaypointSpline { .. } => {
                let s = self.splines.as_ref().expect("spline model has splines");
                let (x, y, z) = (s[0].eval(t), s[1].eval(t), s[2].eval(t));
                TruthState {
                    position: Point3::new(x.0, y.0, z.0),
                    velocity: Vector3::new(x.1, y.1, z.1),
                    acceleration: Vector3::new(x.2, y.2, z.2),
                }
            }
        }
    }

    pub fn position(&self, t: f64) -> Point3 {
        self.state(t).position
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClutterMode {
    /// Fresh uniform draws inside the scene bounds every frame.
    #[default]
    Resampled,
    /// Fixed uniform anchors plus per-frame Gaussian jitter.
    StaticJitter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub id: u32,
    /// Hz.
    pub rate: f64,
    /// Standard deviation of the stamp jitter (s).
    #[serde(default)]
    pub timestamp_jitter: f64,
    /// Constant stamp offset (s).
    #[serde(default)]
    pub offset: f64,
    /// Standard deviation of the target point noise (m).
    #[serde(default)]
    pub point_noise: f64,
    #[serde(default)]
    pub dropout: f64,
    /// Clutter points per frame.
    #[serde(default)]
    pub clutter_density: usize,
    /// Standard deviation of the static-clutter jitter (m).
    #[serde(default)]
    pub clutter_jitter: f64,
    #[serde(default)]
    pub clutter_mode: ClutterMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    fn sample(&self, rng: &mut SeededRng) -> Point3 {
        Point3::from_fn(|a, _| {
            let (lo, hi) = (self.min[a], self.max[a]);
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    /// Hz.
    pub rate: f64,
    /// Standard deviation of the pixel noise (px).
    #[serde(default)]
    pub pixel_noise: f64,
    #[serde(default)]
    pub n_background: usize,
}

/// Small known error between the LiDAR frame/clock and the camera.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Perturbation {
    /// Rotation angle (degrees) about `axis`.
    pub rotation_deg: f64,
    pub axis: [f64; 3],
    /// Meters, camera frame.
    pub translation: [f64; 3],
    /// Seconds added to every LiDAR stamp.
    pub time_offset: f64,
}

impl Perturbation {
    pub fn rotation_vector(&self) -> Vector3<f64> {
        let axis = Vector3::from(self.axis);
        let n = axis.norm();
        if self.rotation_deg == 0.0 || n == 0.0 {
            return Vector3::zeros();
        }
        axis / n * self.rotation_deg.to_radians()
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub duration: f64,
    pub trajectory: TrajectoryModel,
    /// Largest speed (m/s) the trajectory may reach.
    #[serde(default)]
    pub max_speed: Option<f64>,
    /// Largest acceleration magnitude (m/s²) the trajectory may reach.
    #[serde(default)]
    pub max_acceleration: Option<f64>,
    pub bounds: Bounds,
    pub sensors: Vec<SensorConfig>,
    pub tracks: TrackConfig,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub seed: u64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.duration > 0.0) {
            return bad(format!("sim.duration must be > 0, got {}", self.duration));
        }
        self.trajectory.validate()?;
        if let Some((t0, t1)) = self.trajectory.span() {
            if t0 > 0.0 || t1 < self.duration {
                return bad(format!(
                    "waypoints span [{t0}, {t1}] but the scene lasts [0, {}]",
                    self.duration
                ));
            }
        }
        if self.sensors.is_empty() {
            return bad("sim.sensors is empty".into());
        }
        let mut ids: Vec<u32> = self.sensors.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.sensors.len() {
            return bad("sensor ids must be unique".into());
        }
        for s in &self.sensors {
            if !(s.rate > 0.0) {
                return bad(format!("sensor {} rate must be > 0", s.id));
            }
            let sigmas = [s.timestamp_jitter, s.point_noise, s.clutter_jitter];
            if sigmas.iter().any(|v| !(*v >= 0.0)) || !s.offset.is_finite() {
                return bad(format!("sensor {} noise parameters must be >= 0", s.id));
            }
            if !(0.0..=1.0).contains(&s.dropout) {
                return bad(format!("sensor {} dropout must lie in [0, 1]", s.id));
            }
        }
        if !(self.tracks.rate > 0.0) || !(self.tracks.pixel_noise >= 0.0) {
            return bad("sim.tracks.rate must be > 0 and pixel_noise >= 0".into());
        }
        if (0..3).any(|a| !(self.bounds.max[a] >= self.bounds.min[a])) {
            return bad("sim.bounds.max must be >= min".into());
        }
        Ok(())
    }
}

/// Dense ground truth with analytic velocity and acceleration at every
/// sample.
pub fn gen_trajectory(config: &SceneConfig) -> Result<Trajectory> {
    config.validate()?;
    let truth = config.trajectory.evaluator();
    let n = (config.duration * TRUTH_RATE).round() as usize;
    let mut samples = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = (k as f64 / TRUTH_RATE).min(config.duration);
        let s = truth.state(t);
        if let Some(limit) = config.max_speed {
            if s.velocity.norm() > limit {
                return Err(Error::InvalidConfig(format!(
                    "speed {} m/s at t = {t} exceeds max_speed {limit}",
                    s.velocity.norm()
                )));
            }
        }
        if let Some(limit) = config.max_acceleration {
            if s.acceleration.norm() > limit {
                return Err(Error::InvalidConfig(format!(
                    "acceleration {} m/s² at t = {t} exceeds max_acceleration {limit}",
                    s.acceleration.norm()
                )));
            }
        }
        samples.push(TrajectorySample {
            t,
            position: s.position,
            velocity: Some(s.velocity),
            acceleration: Some(s.acceleration),
        });
    }
    samples.dedup_by(|b, a| b.t == a.t);
    Trajectory::new(samples)
}

/// Frames of one sensor plus the index of the target point in each frame
/// (`None` when dropped out).
#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    pub frames: Vec<PointCloudFrame>,
    pub target_index: Vec<Option<usize>>,
    /// True (un-offset, un-jittered) sample time of each frame.
    pub true_time: Vec<f64>,
}

/// Samples one sensor. `extra_offset` is added to the configured offset.
pub fn sample_sensor(
    truth: &TruthEvaluator,
    duration: f64,
    bounds: &Bounds,
    sensor: &SensorConfig,
    extra_offset: f64,
    seed: u64,
) -> Result<SensorStream> {
    let mut rng = substream(seed, sensor.id as u64 + 1);
    let noise = |rng: &mut SeededRng, sigma: f64| -> f64 {
        if sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        } else {
            0.0
        }
    };
    let anchors: Vec<Point3> = match sensor.clutter_mode {
        ClutterMode::StaticJitter => (0..sensor.clutter_density).map(|_| bounds.sample(&mut rng)).collect(),
        ClutterMode::Resampled => Vec::new(),
    };
    let n = (duration * sensor.rate).floor() as usize;
    let mut rows = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t_true = k as f64 / sensor.rate;
        let stamp = t_true + sensor.offset + extra_offset + noise(&mut rng, sensor.timestamp_jitter);
        let target = truth.position(t_true)
            + Vector3::new(
                noise(&mut rng, sensor.point_noise),
                noise(&mut rng, sensor.point_noise),
                noise(&mut rng, sensor.point_noise),
            );
        let dropped = sensor.dropout > 0.0 && rng.random::<f64>() < sensor.dropout;
        let mut points: Vec<Point3> = match sensor.clutter_mode {
            ClutterMode::Resampled => (0..sensor.clutter_density).map(|_| bounds.sample(&mut rng)).collect(),
            ClutterMode::StaticJitter => anchors
                .iter()
                .map(|a| {
                    a + Vector3::new(
                        noise(&mut rng, sensor.clutter_jitter),
                        noise(&mut rng, sensor.clutter_jitter),
                        noise(&mut rng, sensor.clutter_jitter),
                    )
                })
                .collect(),
        };
        let index = if dropped {
            None
        } else {
            let i = rng.random_range(0..=points.len());
            points.insert(i, target);
            Some(i)
        };
        rows.push((PointCloudFrame::new(stamp, sensor.id, points)?, index, t_true));
    }
    rows.sort_by(|a, b| a.0.timestamp.total_cmp(&b.0.timestamp));
    let mut stream = SensorStream {
        frames: Vec::with_capacity(rows.len()),
        target_index: Vec::with_capacity(rows.len()),
        true_time: Vec::with_capacity(rows.len()),
    };
    for (f, i, t) in rows {
        stream.frames.push(f);
        stream.target_index.push(i);
        stream.true_time.push(t);
    }
    Ok(stream)
}

/// Target track (id 0) plus `n_background` static tracks (ids 1..).
pub fn render_tracks(
    truth: &TruthEvaluator,
    duration: f64,
    camera: &CameraModel,
    config: &TrackConfig,
    seed: u64,
) -> Result<Vec<FeatureTrack>> {
    let mut rng = substream(seed, TRACK_STREAM);
    let sigma = config.pixel_noise;
    let normal = Normal::new(0.0, sigma.max(0.0)).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let jitter = |rng: &mut SeededRng| -> Vector2<f64> {
        if sigma > 0.0 {
            Vector2::new(normal.sample(rng), normal.sample(rng))
        } else {
            Vector2::zeros()
        }
    };
    let n = (duration * config.rate).floor() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 / config.rate).collect();

    let mut target = Vec::new();
    for &t in &times {
        let noise = jitter(&mut rng);
        if let Ok(p) = project_world(camera, &truth.position(t)) {
            if p.in_image {
                target.push(TrackSample {
                    t,
                    pixel: p.pixel + noise,
                });
            }
        }
    }
    let visible = target.len();
    if (visible as f64) < MIN_VISIBLE_FRACTION * times.len() as f64 || visible < 2 {
        return Err(Error::TargetNeverVisible {
            visible,
            total: times.len(),
        });
    }
    let mut tracks = vec![FeatureTrack::new(0, target)?];
    for id in 1..=config.n_background as u64 {
        let anchor = Vector2::new(
            rng.random_range(0.0..camera.width as f64),
            rng.random_range(0.0..camera.height as f64),
        );
        let samples = times
            .iter()
            .map(|&t| TrackSample {
                t,
                pixel: anchor + jitter(&mut rng),
            })
            .collect();
        tracks.push(FeatureTrack::new(id, samples)?);
    }
    Ok(tracks)
}

/// Applies a small extrinsic error to `camera`.
pub fn inject_miscalibration(camera: &CameraModel, perturbation: &Perturbation) -> Result<CameraModel> {
    if !(perturbation.rotation_deg.abs() < 5.0) {
        return Err(Error::OutOfRegime(format!(
            "rotation {}° (limit 5°)",
            perturbation.rotation_deg
        )));
    }
    if !(perturbation.translation_vector().norm() < 0.5) {
        return Err(Error::OutOfRegime(format!(
            "translation {} m (limit 0.5 m)",
            perturbation.translation_vector().norm()
        )));
    }
    if !(perturbation.time_offset.abs() < 0.2) {
        return Err(Error::OutOfRegime(format!(
            "time offset {} s (limit 0.2 s)",
            perturbation.time_offset
        )));
    }
    if perturbation.rotation_deg != 0.0 && Vector3::from(perturbation.axis).norm() == 0.0 {
        return Err(Error::InvalidConfig("rotation axis must be non-zero".into()));
    }
    Ok(camera.with_extrinsic(
        camera
            .extrinsic
            .perturbed(&perturbation.rotation_vector(), &perturbation.translation_vector()),
    ))
}

/// Inverse of [`inject_miscalibration`].
pub fn remove_miscalibration(camera: &CameraModel, perturbation: &Perturbation) -> CameraModel {
    camera.with_extrinsic(
        camera
            .extrinsic
            .unperturbed(&perturbation.rotation_vector(), &perturbation.translation_vector()),
    )
}

/// Ground truth of a simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub duration: f64,
    pub trajectory: TrajectoryModel,
    /// Ground truth resampled at `truth_sample_rate`.
    pub truth_samples: Trajectory,
    pub truth_sample_rate: f64,
    pub perturbation: Perturbation,
    /// Camera the tracks were rendered with.
    pub true_camera: CameraModel,
    /// Camera the downstream stages are given.
    pub nominal_camera: CameraModel,
    /// Total stamp offset of each sensor (s).
    pub sensor_offsets: Vec<(u32, f64)>,
    pub target_track_id: u64,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SceneConfig,
    pub truth: TruthEvaluator,
    pub streams: Vec<SensorStream>,
    pub tracks: Vec<FeatureTrack>,
    pub true_camera: CameraModel,
    pub manifest: Manifest,
}

impl Scene {
    /// All frames of every sensor, ordered by stamp then sensor id.
    pub fn frames(&self) -> Vec<PointCloudFrame> {
        let mut all: Vec<PointCloudFrame> = self.streams.iter().flat_map(|s| s.frames.iter().cloned()).collect();
        all.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then(a.sensor_id.cmp(&b.sensor_id)));
        all
    }

    /// Whether point `index` of frame `frame` in [`Scene::frames`] order is
    /// the target.
    pub fn target_labels(&self) -> Vec<Option<usize>> {
        let mut all: Vec<(f64, u32, Option<usize>)> = self
            .streams
            .iter()
            .flat_map(|s| {
                s.frames
                    .iter()
                    .zip(&s.target_index)
                    .map(|(f, i)| (f.timestamp, f.sensor_id, *i))
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().map(|x| x.2).collect()
    }
}

/// Rate at which the manifest stores ground-truth samples (Hz).
pub const MANIFEST_RATE: f64 = 100.0;

/// Generates the whole scene. `camera` is the nominal calibration; the
/// tracks are rendered through its perturbed version.
pub fn simulate(config: &SceneConfig, camera: &CameraModel, exec: Exec) -> Result<Scene> {
    config.validate()?;
    gen_trajectory(config)?;
    let truth = config.trajectory.evaluator();
    let true_camera = inject_miscalibration(camera, &config.perturbation)?;
    let streams: Vec<Result<SensorStream>> = exec.map(&config.sensors, |s| {
        sample_sensor(
            &truth,
            config.duration,
            &config.bounds,
            s,
            config.perturbation.time_offset,
            config.seed,
        )
    });
    let streams = streams.into_iter().collect::<Result<Vec<_>>>()?;
    let tracks = render_tracks(&truth, config.duration, &true_camera, &config.tracks, config.seed)?;

    let n = (config.duration * MANIFEST_RATE).floor() as usize;
    let truth_samples = Trajectory::new(
        (0..=n)
            .map(|k| {
                let t = k as f64 / MANIFEST_RATE;
                let s = truth.state(t);
                TrajectorySample {
                    t,
                    position: s.position,
                    velocity: Some(s.velocity),
                    acceleration: Some(s.acceleration),
                }
            })
            .collect(),
    )?;
    let manifest = Manifest {
        seed: config.seed,
        duration: config.duration,
        trajectory: config.trajectory.clone(),
        truth_samples,
        truth_sample_rate: MANIFEST_RATE,
        perturbation: config.perturbation,
        true_camera,
        nominal_camera: *camera,
        sensor_offsets: config
            .sensors
            .iter()
            .map(|s| (s.id, s.offset + config.perturbation.time_offset))
            .collect(),
        target_track_id: 0,
    };
    Ok(Scene {
        config: config.clone(),
        truth,
        streams,
        tracks,
        true_camera,
        manifest,
    })
}

/// Rotation matrix of a perturbation, for reporting.
pub fn perturbation_rotation(p: &Perturbation) -> Rotation3<f64> {
    Rotation3::from_scaled_axis(p.rotation_vector())
}
