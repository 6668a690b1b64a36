//! Value types shared by every stage of the pipeline.
//!
//! Everything here is immutable once built and cheap to clone, so stages can
//! hand data to each other (and to worker threads) without coordination.

use nalgebra::{SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3D point in meters. Whether it is in the world or camera frame is
/// determined by context.
pub type Point3 = Vector3<f64>;

pub fn is_finite3(p: &Vector3<f64>) -> bool {
    p.iter().all(|c| c.is_finite())
}

/// Euclidean norm written out explicitly so that every caller (and the test
/// oracles) round identically.
#[inline]
pub fn norm3(v: &Vector3<f64>) -> f64 {
    (v.x * v.x + v.y * v.y + v.z * v.z).sqrt()
}

#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

/// One timestamped sweep from a single sensor, points in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudFrame {
    pub timestamp: f64,
    pub sensor_id: u32,
    pub points: Vec<Point3>,
}

impl PointCloudFrame {
    pub fn new(timestamp: f64, sensor_id: u32, points: Vec<Point3>) -> Result<Self> {
        if !timestamp.is_finite() {
            return Err(Error::InvalidInput(format!("frame timestamp {timestamp}")));
        }
        if let Some(p) = points.iter().find(|p| !is_finite3(p)) {
            return Err(Error::InvalidInput(format!("non-finite point {p:?}")));
        }
        Ok(Self {
            timestamp,
            sensor_id,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Position, velocity and acceleration of the target at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicState3 {
    pub position: Point3,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub timestamp: f64,
}

impl KinematicState3 {
    pub fn new(position: Point3, velocity: Vector3<f64>, acceleration: Vector3<f64>, timestamp: f64) -> Self {
        Self {
            position,
            velocity,
            acceleration,
            timestamp,
        }
    }

    pub fn at_rest(position: Point3, timestamp: f64) -> Self {
        Self::new(position, Vector3::zeros(), Vector3::zeros(), timestamp)
    }

    /// `[p; v; a]`
    pub fn to_vector(&self) -> SVector<f64, 9> {
        let mut out = SVector::<f64, 9>::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&self.position);
        out.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        out.fixed_rows_mut::<3>(6).copy_from(&self.acceleration);
        out
    }

    pub fn from_vector(v: &SVector<f64, 9>, timestamp: f64) -> Self {
        Self::new(
            v.fixed_rows::<3>(0).into_owned(),
            v.fixed_rows::<3>(3).into_owned(),
            v.fixed_rows::<3>(6).into_owned(),
            timestamp,
        )
    }

    pub fn is_finite(&self) -> bool {
        is_finite3(&self.position)
            && is_finite3(&self.velocity)
            && is_finite3(&self.acceleration)
            && self.timestamp.is_finite()
    }
}

/// Pixel position, pixel velocity (px/s) and pixel acceleration (px/s²).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImageMotionState2 {
    pub pixel: Vector2<f64>,
    pub pixel_velocity: Vector2<f64>,
    pub pixel_acceleration: Vector2<f64>,
}

impl ImageMotionState2 {
    pub fn new(pixel: Vector2<f64>, pixel_velocity: Vector2<f64>, pixel_acceleration: Vector2<f64>) -> Self {
        Self {
            pixel,
            pixel_velocity,
            pixel_acceleration,
        }
    }

    pub fn to_vector(&self) -> SVector<f64, 6> {
        SVector::<f64, 6>::from([
            self.pixel.x,
            self.pixel.y,
            self.pixel_velocity.x,
            self.pixel_velocity.y,
            self.pixel_acceleration.x,
            self.pixel_acceleration.y,
        ])
    }

    pub fn from_vector(v: &SVector<f64, 6>) -> Self {
        Self::new(
            Vector2::new(v[0], v[1]),
            Vector2::new(v[2], v[3]),
            Vector2::new(v[4], v[5]),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Point3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vector3<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceleration: Option<Vector3<f64>>,
}

impl TrajectorySample {
    pub fn new(t: f64, position: Point3) -> Self {
        Self {
            t,
            position,
            velocity: None,
            acceleration: None,
        }
    }
}

/// Time-ordered positions with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<TrajectorySample>", into = "Vec<TrajectorySample>")]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
}

impl TryFrom<Vec<TrajectorySample>> for Trajectory {
    type Error = Error;

    fn try_from(samples: Vec<TrajectorySample>) -> Result<Self> {
        Trajectory::new(samples)
    }
}

impl From<Trajectory> for Vec<TrajectorySample> {
    fn from(t: Trajectory) -> Self {
        t.samples
    }
}

impl Trajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self> {
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::InvalidInput(format!(
                    "trajectory timestamps not strictly increasing: {} then {}",
                    w[0].t, w[1].t
                )));
            }
        }
        if let Some(s) = samples.iter().find(|s| !s.t.is_finite() || !is_finite3(&s.position)) {
            return Err(Error::InvalidInput(format!(
                "non-finite trajectory sample at t={}",
                s.t
            )));
        }
        Ok(Self { samples })
    }

    pub fn from_positions(times: &[f64], positions: &[Point3]) -> Result<Self> {
        if times.len() != positions.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: positions.len(),
            });
        }
        Self::new(
            times
                .iter()
                .zip(positions)
                .map(|(&t, &p)| TrajectorySample::new(t, p))
                .collect(),
        )
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start_time(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }

    /// Returns a copy with every timestamp shifted by `-offset`.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|s| TrajectorySample { t: s.t - offset, ..*s })
                .collect(),
        }
    }

    /// Linear interpolation of the position at `t`. `None` outside the
    /// sampled span.
    pub fn position_at(&self, t: f64) -> Option<Point3> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t < first.t || t > last.t {
            return None;
        }
        // index of the first sample with time > t
        let hi = self.samples.partition_point(|s| s.t <= t);
        if hi == 0 {
            return Some(first.position);
        }
        let lo = &self.samples[hi - 1];
        if lo.t == t || hi == self.samples.len() {
            return Some(lo.position);
        }
        let up = &self.samples[hi];
        let w = (t - lo.t) / (up.t - lo.t);
        Some(lo.position + (up.position - lo.position) * w)
    }

    /// Samples whose timestamp lies in `[from, to]`.
    pub fn window(&self, from: f64, to: f64) -> &[TrajectorySample] {
        let lo = self.samples.partition_point(|s| s.t < from);
        let hi = self.samples.partition_point(|s| s.t <= to);
        &self.samples[lo..hi.max(lo)]
    }
}
