//! Temporal-KNN vector construction with gradient filtering, and chaining of
//! the surviving vectors into a single trajectory.
//!
//! For every point `p` of frame `t`, the `K` nearest points in frames
//! `t+Δ` and `t+Δ+1` are paired by distance rank. The mean gradient
//! magnitude is
//!
//! ```text
//! g = (1/K') Σ_j ‖((q²_j − p) − (q¹_j − p)) / dt‖
//! ```
//!
//! with `dt` the actual time between the two neighbour frames. When
//! `g ≤ τ`, one temporal vector `q¹_j − p` is kept per neighbour in frame
//! `t+Δ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::{KdTree, Neighbor};
use crate::par::Exec;
use crate::types::{norm3, Point3, PointCloudFrame, Trajectory, TrajectorySample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TknnParams {
    pub k: usize,
    pub frame_offset: usize,
    /// Gradient threshold τ in m/s.
    pub tau: f64,
    /// Neighbours farther than this (m) are dropped before pairing.
    #[serde(default = "infinite", with = "optional_inf")]
    pub max_neighbor_distance: f64,
}

fn infinite() -> f64 {
    f64::INFINITY
}

/// JSON has no infinity; `null` (or absence) stands for "no gate".
mod optional_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Default for TknnParams {
    fn default() -> Self {
        Self {
            k: 4,
            frame_offset: 1,
            tau: 1.5,
            max_neighbor_distance: f64::INFINITY,
        }
    }
}

impl TknnParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("K must be >= 1".into()));
        }
        if self.frame_offset == 0 {
            return Err(Error::InvalidConfig("frame_offset must be >= 1".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::InvalidConfig(format!("tau must be >= 0, got {}", self.tau)));
        }
        if !(self.max_neighbor_distance > 0.0) {
            return Err(Error::InvalidConfig("max_neighbor_distance must be > 0".into()));
        }
        Ok(())
    }
}

/// A point of a specific frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePoint {
    pub position: Point3,
    pub timestamp: f64,
    pub frame: usize,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalVector {
    pub origin: FramePoint,
    pub target: FramePoint,
    /// `target.position − origin.position`
    pub vector: Point3,
    /// Mean gradient magnitude of the origin point (m/s).
    pub gradient: f64,
}

impl TemporalVector {
    pub fn new(origin: FramePoint, target: FramePoint, gradient: f64) -> Self {
        Self {
            origin,
            target,
            vector: target.position - origin.position,
            gradient,
        }
    }

    pub fn duration(&self) -> f64 {
        self.target.timestamp - self.origin.timestamp
    }
}

/// `min(K, |frame|)` nearest points of `frame` to `q`.
pub fn knn_query(frame: &PointCloudFrame, q: &Point3, k: usize) -> Result<Vec<Neighbor>> {
    KdTree::build(&frame.points).nearest(q, k)
}

/// Mean gradient magnitude of `p` given its rank-paired neighbours in two
/// successive frames `dt` seconds apart.
pub fn mean_gradient(p: &Point3, knn1: &[Point3], knn2: &[Point3], dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::DegenerateDt(dt));
    }
    if knn1.is_empty() || knn1.len() != knn2.len() {
        return Err(Error::DimensionMismatch {
            expected: knn1.len().max(1),
            got: knn2.len(),
        });
    }
    Ok(gradient_sum(p, knn1.iter().zip(knn2), dt) / knn1.len() as f64)
}

fn gradient_sum<'a>(p: &Point3, pairs: impl Iterator<Item = (&'a Point3, &'a Point3)>, dt: f64) -> f64 {
    let mut total = 0.0;
    for (q1, q2) in pairs {
        let v1 = q1 - p;
        let v2 = q2 - p;
        total += norm3(&((v2 - v1) / dt));
    }
    total
}

fn gated(mut nn: Vec<Neighbor>, max_distance: f64) -> Vec<Neighbor> {
    if max_distance.is_finite() {
        let limit = max_distance * max_distance;
        nn.retain(|n| n.dist2 <= limit);
    }
    nn
}

pub fn build_temporal_vectors(frames: &[PointCloudFrame], params: &TknnParams) -> Result<Vec<TemporalVector>> {
    build_temporal_vectors_with(frames, params, Exec::default())
}

/// Output order is `(origin frame, origin point, neighbour rank)` for every
/// execution back end.
pub fn build_temporal_vectors_with(
    frames: &[PointCloudFrame],
    params: &TknnParams,
    exec: Exec,
) -> Result<Vec<TemporalVector>> {
    params.validate()?;
    let offset = params.frame_offset;
    if frames.len() < offset + 2 {
        return Err(Error::TooFewFrames {
            needed: offset + 2,
            got: frames.len(),
        });
    }
    for w in frames.windows(2) {
        if !(w[1].timestamp >= w[0].timestamp) {
            return Err(Error::InvalidInput("frames must be sorted by timestamp".into()));
        }
    }

    let trees: Vec<KdTree<'_>> = exec.map_range(frames.len(), |i| KdTree::build(&frames[i].points));
    let last_origin = frames.len() - offset - 2;

    let mut work = Vec::new();
    for t in 0..=last_origin {
        let (f0, f1, f2) = (&frames[t], &frames[t + offset], &frames[t + offset + 1]);
        if f0.is_empty() || f1.is_empty() || f2.is_empty() {
            continue;
        }
        let dt = f2.timestamp - f1.timestamp;
        if !(dt > 0.0) {
            return Err(Error::DegenerateDt(dt));
        }
        work.extend((0..f0.points.len()).map(|i| (t, i, dt)));
    }

    let per_point = exec.map(&work, |&(t, i, dt)| -> Result<Vec<TemporalVector>> {
        let (t1, t2) = (t + offset, t + offset + 1);
        let p = frames[t].points[i];
        let nn1 = gated(trees[t1].nearest(&p, params.k)?, params.max_neighbor_distance);
        let nn2 = gated(trees[t2].nearest(&p, params.k)?, params.max_neighbor_distance);
        let paired = nn1.len().min(nn2.len());
        if paired == 0 {
            return Ok(Vec::new());
        }
        let pts1 = &frames[t1].points;
        let pts2 = &frames[t2].points;
        let g = gradient_sum(
            &p,
            nn1[..paired]
                .iter()
                .zip(&nn2[..paired])
                .map(|(a, b)| (&pts1[a.index], &pts2[b.index])),
            dt,
        ) / paired as f64;
        if !(g <= params.tau) {
            return Ok(Vec::new());
        }
        let origin = FramePoint {
            position: p,
            timestamp: frames[t].timestamp,
            frame: t,
            index: i,
        };
        Ok(nn1
            .iter()
            .map(|n| {
                let target = FramePoint {
                    position: pts1[n.index],
                    timestamp: frames[t1].timestamp,
                    frame: t1,
                    index: n.index,
                };
                TemporalVector::new(origin, target, g)
            })
            .collect())
    });

    let mut out = Vec::new();
    for v in per_point {
        out.extend(v?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainParams {
    /// Largest number of consecutive frames without a node that a chain may skip.
    #[serde(default = "default_gap")]
    pub gap_max: usize,
    /// Surviving origins of one frame closer than this (m) form one node.
    #[serde(default = "infinite", with = "optional_inf")]
    pub cluster_radius: f64,
    /// Links implying a faster motion (m/s) are refused.
    #[serde(default = "infinite", with = "optional_inf")]
    pub max_link_speed: f64,
}

fn default_gap() -> usize {
    3
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            gap_max: default_gap(),
            cluster_radius: f64::INFINITY,
            max_link_speed: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ChainNode {
    frame: usize,
    t: f64,
    position: Point3,
}

/// Single-linkage groups of `points` (indices into the slice), in order of
/// first member.
fn cluster(points: &[Point3], radius: f64) -> Vec<Vec<usize>> {
    if !radius.is_finite() {
        return vec![(0..points.len()).collect()];
    }
    let r2 = radius * radius;
    let mut label: Vec<Option<usize>> = vec![None; points.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for seed in 0..points.len() {
        if label[seed].is_some() {
            continue;
        }
        let id = groups.len();
        label[seed] = Some(id);
        let mut members = vec![seed];
        let mut cursor = 0;
        while cursor < members.len() {
            let cur = members[cursor];
            cursor += 1;
            for j in 0..points.len() {
                if label[j].is_none() && crate::types::dist2(&points[cur], &points[j]) <= r2 {
                    label[j] = Some(id);
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    groups
}

fn centroid(points: &[Point3], members: &[usize]) -> Point3 {
    let sum = members.iter().fold(Point3::zeros(), |acc, &i| acc + points[i]);
    sum / members.len() as f64
}

/// Chains per-frame centroids of surviving vector origins into the longest
/// consistent trajectory.
pub fn chain_trajectory(vectors: &[TemporalVector]) -> Trajectory {
    chain_trajectory_with(vectors, &ChainParams::default())
}

/// `(frame, timestamp, (point index, position))` per frame with survivors.
type FrameOrigins = Vec<(usize, f64, Vec<(usize, Point3)>)>;

pub fn chain_trajectory_with(vectors: &[TemporalVector], params: &ChainParams) -> Trajectory {
    // unique origins per frame, in first-seen order
    let mut frames: FrameOrigins = Vec::new();
    for v in vectors {
        let o = &v.origin;
        let slot = match frames.binary_search_by_key(&o.frame, |f| f.0) {
            Ok(i) => i,
            Err(i) => {
                frames.insert(i, (o.frame, o.timestamp, Vec::new()));
                i
            }
        };
        let entry = &mut frames[slot].2;
        if !entry.iter().any(|(idx, _)| *idx == o.index) {
            entry.push((o.index, o.position));
        }
    }

    let mut nodes: Vec<ChainNode> = Vec::new();
    for (frame, t, origins) in &frames {
        let pts: Vec<Point3> = origins.iter().map(|(_, p)| *p).collect();
        nodes.extend(cluster(&pts, params.cluster_radius).iter().map(|m| ChainNode {
            frame: *frame,
            t: *t,
            position: centroid(&pts, m),
        }));
    }

    // longest admissible path through the frame-ordered nodes; ties prefer
    // the shorter summed link length, then the earlier nodes
    let link_ok = |a: &ChainNode, b: &ChainNode| {
        let gap = b.frame - a.frame;
        let d = (b.position - a.position).norm();
        let dt = b.t - a.t;
        gap >= 1
            && gap <= params.gap_max + 1
            && (!params.max_link_speed.is_finite() || (dt > 0.0 && d <= params.max_link_speed * dt))
    };
    let better = |a: (usize, f64), b: (usize, f64)| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1);
    let mut score: Vec<(usize, f64)> = vec![(1, 0.0); nodes.len()];
    let mut prev: Vec<Option<usize>> = vec![None; nodes.len()];
    let mut first = 0;
    for j in 0..nodes.len() {
        while nodes[first].frame + params.gap_max + 1 < nodes[j].frame {
            first += 1;
        }
        for i in first..j {
            if !link_ok(&nodes[i], &nodes[j]) {
                continue;
            }
            let cand = (
                score[i].0 + 1,
                score[i].1 + (nodes[j].position - nodes[i].position).norm(),
            );
            if better(cand, score[j]) {
                score[j] = cand;
                prev[j] = Some(i);
            }
        }
    }
    let Some(mut end) = (0..nodes.len()).reduce(|b, k| if better(score[k], score[b]) { k } else { b }) else {
        return Trajectory::empty();
    };
    let mut path = vec![nodes[end]];
    while let Some(p) = prev[end] {
        path.push(nodes[p]);
        end = p;
    }
    path.reverse();
    let samples = path.iter().map(|n| TrajectorySample::new(n.t, n.position)).collect();
    Trajectory::new(samples).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mover_frames(n: usize, speed: f64, rate: f64) -> Vec<PointCloudFrame> {
        (0..n)
            .map(|k| {
                let t = k as f64 / rate;
                PointCloudFrame::new(t, 0, vec![Point3::new(speed * t, 0.0, 0.0)]).unwrap()
            })
            .collect()
    }

    #[test]
    fn static_point_has_zero_gradient() {
        let q = [Point3::new(1.0, 1.0, 1.0), Point3::new(2.0, 0.0, 0.0)];
        assert_eq!(mean_gradient(&Point3::zeros(), &q, &q, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn single_neighbour_gradient() {
        let g = mean_gradient(
            &Point3::zeros(),
            &[Point3::new(1.0, 0.0, 0.0)],
            &[Point3::new(2.0, 0.0, 0.0)],
            1.0,
        )
        .unwrap();
        assert_eq!(g, 1.0);
    }

    #[test]
    fn gradient_rejects_bad_dt_and_mismatched_sets() {
        let a = [Point3::zeros()];
        assert!(matches!(
            mean_gradient(&Point3::zeros(), &a, &a, 0.0),
            Err(Error::DegenerateDt(_))
        ));
        assert!(mean_gradient(&Point3::zeros(), &a, &[], 1.0).is_err());
        assert!(mean_gradient(&Point3::zeros(), &[], &[], 1.0).is_err());
    }

    #[test]
    fn unit_speed_mover_survives_literal_threshold() {
        let frames = mover_frames(10, 1.0, 1.0);
        let params = TknnParams {
            k: 1,
            frame_offset: 1,
            tau: 1.5,
            ..Default::default()
        };
        let vs = build_temporal_vectors(&frames, &params).unwrap();
        assert_eq!(vs.len(), 10 - 2);
        for v in &vs {
            assert_eq!(v.vector, Point3::new(1.0, 0.0, 0.0));
            assert_eq!(v.gradient, 1.0);
        }
        let wider = TknnParams {
            frame_offset: 3,
            ..params
        };
        let vs = build_temporal_vectors(&frames, &wider).unwrap();
        assert_eq!(vs.len(), 10 - 4);
        assert!(vs.iter().all(|v| v.vector == Point3::new(3.0, 0.0, 0.0)));
    }

    #[test]
    fn threshold_below_speed_rejects_everything() {
        let frames = mover_frames(10, 1.0, 1.0);
        let params = TknnParams {
            k: 1,
            tau: 0.5,
            ..Default::default()
        };
        assert!(build_temporal_vectors(&frames, &params).unwrap().is_empty());
    }

    #[test]
    fn too_few_frames() {
        let frames = mover_frames(2, 1.0, 1.0);
        assert!(matches!(
            build_temporal_vectors(&frames, &TknnParams::default()),
            Err(Error::TooFewFrames { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn empty_frames_are_skipped() {
        let mut frames = mover_frames(6, 1.0, 1.0);
        frames[3].points.clear();
        let params = TknnParams {
            k: 1,
            ..Default::default()
        };
        let vs = build_temporal_vectors(&frames, &params).unwrap();
        // origins 1 and 2 need frame 3; origin 3 is itself empty
        let origins: Vec<usize> = vs.iter().map(|v| v.origin.frame).collect();
        assert_eq!(origins, vec![0]);
    }

    #[test]
    fn distance_gate_drops_far_neighbours() {
        let mut frames = mover_frames(5, 1.0, 1.0);
        for f in frames.iter_mut() {
            f.points.push(Point3::new(100.0, 0.0, 0.0));
        }
        let params = TknnParams {
            k: 2,
            tau: 1.5,
            max_neighbor_distance: 5.0,
            ..Default::default()
        };
        let vs = build_temporal_vectors(&frames, &params).unwrap();
        assert!(vs.iter().all(|v| v.vector.norm() <= 5.0));
        assert!(vs.iter().any(|v| v.origin.index == 0));
    }

    #[test]
    fn chain_of_nothing_is_empty() {
        assert!(chain_trajectory(&[]).is_empty());
    }

    #[test]
    fn chain_of_single_mover_reproduces_positions() {
        let frames = mover_frames(12, 2.5, 10.0);
        let params = TknnParams {
            k: 1,
            tau: 3.0,
            ..Default::default()
        };
        let vs = build_temporal_vectors(&frames, &params).unwrap();
        let tr = chain_trajectory(&vs);
        assert_eq!(tr.len(), 10);
        for s in tr.samples() {
            assert!((s.position - Point3::new(2.5 * s.t, 0.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn chain_breaks_on_long_gaps_and_keeps_longest() {
        let mk = |frame: usize, x: f64| {
            let fp = FramePoint {
                position: Point3::new(x, 0.0, 0.0),
                timestamp: frame as f64,
                frame,
                index: 0,
            };
            TemporalVector::new(fp, fp, 0.0)
        };
        // frames 0,1,2 then a 5-frame hole, then 8..=13
        let mut vs: Vec<TemporalVector> = [0, 1, 2].iter().map(|&f| mk(f, f as f64)).collect();
        vs.extend((8..=13).map(|f| mk(f, f as f64)));
        let tr = chain_trajectory(&vs);
        assert_eq!(tr.len(), 6);
        assert_eq!(tr.start_time(), Some(8.0));
        // a 3-frame hole is bridged
        let mut vs: Vec<TemporalVector> = [0, 1, 2].iter().map(|&f| mk(f, f as f64)).collect();
        vs.extend((6..=8).map(|f| mk(f, f as f64)));
        assert_eq!(chain_trajectory(&vs).len(), 6);
    }

    #[test]
    fn clustering_separates_distant_survivors() {
        let mk = |frame: usize, index: usize, p: Point3| {
            let fp = FramePoint {
                position: p,
                timestamp: frame as f64 * 0.1,
                frame,
                index,
            };
            TemporalVector::new(fp, fp, 0.0)
        };
        let mut vs = Vec::new();
        for f in 0..10 {
            vs.push(mk(f, 0, Point3::new(f as f64 * 0.3, 0.0, 0.0)));
            if f % 3 == 0 {
                vs.push(mk(f, 1, Point3::new(40.0 + f as f64, 20.0, 5.0)));
            }
        }
        let params = ChainParams {
            cluster_radius: 2.0,
            max_link_speed: 20.0,
            ..Default::default()
        };
        let tr = chain_trajectory_with(&vs, &params);
        assert_eq!(tr.len(), 10);
        for s in tr.samples() {
            assert!((s.position.x - 3.0 * s.t).abs() < 1e-9);
        }
    }
}
