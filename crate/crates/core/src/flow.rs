//! Image feature tracks and their observed motion states.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{atomic_write, check_header, open};
use crate::types::ImageMotionState2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub t: f64,
    pub pixel: Vector2<f64>,
}

/// One keypoint followed over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTrack {
    pub id: u64,
    samples: Vec<TrackSample>,
}

impl FeatureTrack {
    pub fn new(id: u64, samples: Vec<TrackSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientSamples(format!(
                "track {id} has {} sample(s), need at least 2",
                samples.len()
            )));
        }
        for s in &samples {
            if !s.t.is_finite() || !s.pixel.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite sample in track {id} at t = {}",
                    s.t
                )));
            }
        }
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::NonMonotoneTimestamps { id, t: w[1].t });
            }
        }
        Ok(Self { id, samples })
    }

    pub fn samples(&self) -> &[TrackSample] {
        &self.samples
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// The sample closest in time to `t`, if it lies within `tol`.
    /// Equidistant candidates resolve to the earlier sample.
    pub fn nearest_sample(&self, t: f64, tol: f64) -> Option<&TrackSample> {
        let hi = self.samples.partition_point(|s| s.t < t);
        let mut best: Option<&TrackSample> = None;
        for i in [hi.wrapping_sub(1), hi] {
            if let Some(s) = self.samples.get(i) {
                let d = (s.t - t).abs();
                if d <= tol && best.is_none_or(|b| d < (b.t - t).abs()) {
                    best = Some(s);
                }
            }
        }
        best
    }
}

/// Observed motion state at `t` from the samples nearest to `t`, `t+dt` and
/// `t+2dt` (each within `dt/4`): position `o(t)`, velocity
/// `(o₁ − o₀)/dt` and acceleration `(o₂ − 2o₁ + o₀)/dt²`.
pub fn orb_motion_state(track: &FeatureTrack, t: f64, dt: f64) -> Result<ImageMotionState2> {
    if !(dt > 0.0) {
        return Err(Error::DegenerateDt(dt));
    }
    let tol = dt / 4.0;
    let at = |tk: f64| {
        track.nearest_sample(tk, tol).map(|s| s.pixel).ok_or_else(|| {
            Error::InsufficientSamples(format!("track {} has no sample within {tol} s of t = {tk}", track.id))
        })
    };
    let o0 = at(t)?;
    let o1 = at(t + dt)?;
    let o2 = at(t + 2.0 * dt)?;
    Ok(ImageMotionState2::new(
        o0,
        (o1 - o0) / dt,
        (o2 - 2.0 * o1 + o0) / (dt * dt),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    id: u64,
    t: f64,
    u: f64,
    v: f64,
}

/// Rows must list each track's samples in increasing time; tracks are
/// returned in ascending id order.
pub fn read_tracks_csv<R: Read>(r: R) -> Result<Vec<FeatureTrack>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(&mut rd, &["id", "t", "u", "v"])?;
    let mut groups: std::collections::BTreeMap<u64, Vec<TrackSample>> = Default::default();
    for row in rd.deserialize::<TrackRow>() {
        let r = row?;
        let samples = groups.entry(r.id).or_default();
        if let Some(last) = samples.last() {
            if !(r.t > last.t) {
                return Err(Error::NonMonotoneTimestamps { id: r.id, t: r.t });
            }
        }
        samples.push(TrackSample {
            t: r.t,
            pixel: Vector2::new(r.u, r.v),
        });
    }
    groups.into_iter().map(|(id, s)| FeatureTrack::new(id, s)).collect()
}

pub fn write_tracks_csv<W: Write>(w: W, tracks: &[FeatureTrack]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["id", "t", "u", "v"])?;
    for tr in tracks {
        for s in &tr.samples {
            wr.serialize((tr.id, s.t, s.pixel.x, s.pixel.y))?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn load_tracks(path: &Path) -> Result<Vec<FeatureTrack>> {
    read_tracks_csv(open(path)?)
}

pub fn save_tracks(path: &Path, tracks: &[FeatureTrack]) -> Result<()> {
    atomic_write(path, |w| write_tracks_csv(w, tracks))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(points: &[(f64, f64, f64)]) -> FeatureTrack {
        FeatureTrack::new(
            7,
            points
                .iter()
                .map(|&(t, u, v)| TrackSample {
                    t,
                    pixel: Vector2::new(u, v),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn static_keypoint_has_no_motion() {
        let tr = track(&[(0.0, 5.0, 5.0), (1.0, 5.0, 5.0), (2.0, 5.0, 5.0)]);
        let s = orb_motion_state(&tr, 0.0, 1.0).unwrap();
        assert_eq!(s.pixel_velocity, Vector2::zeros());
        assert_eq!(s.pixel_acceleration, Vector2::zeros());
    }

    #[test]
    fn linear_track() {
        let tr = track(&[(0.0, 0.0, 0.0), (1.0, 1.0, 0.0), (2.0, 2.0, 0.0)]);
        let s = orb_motion_state(&tr, 0.0, 1.0).unwrap();
        assert_eq!(s.pixel_velocity, Vector2::new(1.0, 0.0));
        assert_eq!(s.pixel_acceleration, Vector2::zeros());
    }

    #[test]
    fn accelerating_track_half_second_steps() {
        let tr = track(&[(0.0, 0.0, 0.0), (0.5, 1.0, 0.0), (1.0, 3.0, 0.0)]);
        let s = orb_motion_state(&tr, 0.0, 0.5).unwrap();
        assert_eq!(s.pixel, Vector2::zeros());
        assert_eq!(s.pixel_velocity, Vector2::new(2.0, 0.0));
        assert_eq!(s.pixel_acceleration, Vector2::new(4.0, 0.0));
    }

    #[test]
    fn snapping_tolerance() {
        let tr = track(&[(0.0, 0.0, 0.0), (1.2, 1.0, 0.0), (2.0, 2.0, 0.0)]);
        assert!(orb_motion_state(&tr, 0.0, 1.0).is_ok());
        let tr = track(&[(0.0, 0.0, 0.0), (1.3, 1.0, 0.0), (2.0, 2.0, 0.0)]);
        assert!(matches!(
            orb_motion_state(&tr, 0.0, 1.0),
            Err(Error::InsufficientSamples(_))
        ));
        assert!(matches!(orb_motion_state(&tr, 0.0, 0.0), Err(Error::DegenerateDt(_))));
    }

    #[test]
    fn nearest_sample_prefers_earlier_on_ties() {
        let tr = track(&[(0.0, 0.0, 0.0), (1.0, 1.0, 0.0)]);
        assert_eq!(tr.nearest_sample(0.5, 1.0).unwrap().t, 0.0);
        assert_eq!(tr.nearest_sample(0.6, 1.0).unwrap().t, 1.0);
        assert!(tr.nearest_sample(3.0, 1.0).is_none());
    }

    #[test]
    fn csv_loading() {
        assert!(read_tracks_csv("id,t,u,v\n".as_bytes()).unwrap().is_empty());
        let tr = read_tracks_csv("id,t,u,v\n3,0,1,2\n3,0.1,1.5,2\n".as_bytes()).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr[0].samples().len(), 2);
        assert!(matches!(
            read_tracks_csv("id,t,u,v\n3,0.1,1,2\n3,0.1,1.5,2\n".as_bytes()),
            Err(Error::NonMonotoneTimestamps { id: 3, .. })
        ));
        match read_tracks_csv("id,t,u,v\n3,0,1,2\n3,x,1.5,2\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let tracks = vec![
            track(&[(0.0, 0.25, 1.0 / 3.0), (0.1, 700.125, 1e-7)]),
            FeatureTrack::new(
                9,
                vec![
                    TrackSample {
                        t: 0.05,
                        pixel: Vector2::new(-1.0, 2.0),
                    },
                    TrackSample {
                        t: 0.15,
                        pixel: Vector2::new(3.0, 4.0),
                    },
                ],
            )
            .unwrap(),
        ];
        let mut buf = Vec::new();
        write_tracks_csv(&mut buf, &tracks).unwrap();
        assert_eq!(read_tracks_csv(&buf[..]).unwrap(), tracks);
    }
}
