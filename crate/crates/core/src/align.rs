//! Cross-modal alignment of projected 3D motion against observed image motion.
//!
//! Predicted image motion states come from projecting points of the LiDAR
//! trajectory (endpoints projected individually) under a corrected camera and
//! time offset. Each prediction is matched to the nearest observed track state
//! in pixel space and scored with
//!
//! ```text
//! ℓ = 1 − cos(u̇_pred, u̇_obs) + λ·‖X₂_pred − X₂_obs‖²
//! ```
//!
//! The correction (time offset, rotation and translation perturbation) is
//! refined by coordinate descent with a golden-section line search.

use std::io::{Read, Write};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::flow::{orb_motion_state, FeatureTrack};
use crate::io::check_header;
use crate::par::{pairwise_sum, Exec};
use crate::projection::project_world;
use crate::tknn::{chain_trajectory_with, ChainParams, FramePoint, TemporalVector};
use crate::types::{ImageMotionState2, KinematicState3, Point3, Trajectory};

/// Norm below which a 2D direction is considered undefined (px or px/s).
pub const VECTOR_EPS: f64 = 1e-9;

/// Fewest matched pairs accepted before refinement starts.
pub const MIN_MATCHES: usize = 10;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignParams {
    pub lambda: f64,
    /// Pixels.
    pub match_radius: f64,
    /// Symmetric bound on the time offset (s).
    pub time_offset_bound: f64,
    /// Bound on each rotation-vector component (rad).
    pub rotation_bound: f64,
    /// Bound on each translation component (m).
    pub translation_bound: f64,
    pub max_iters: usize,
    pub convergence_tol: f64,
    /// Spacing of the three samples behind each motion state (s).
    pub state_dt: f64,
    /// Largest number of evaluation times used by the optimizer.
    pub max_states: usize,
    /// Observations farther than this in time from a prediction are ignored (s).
    pub time_tolerance: f64,
    /// Coarse grid size of each line search.
    pub grid_points: usize,
    /// Which of `[time_offset, ωx, ωy, ωz, δx, δy, δz]` are optimized.
    pub free: [bool; 7],
    pub chain: ChainParams,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            match_radius: 20.0,
            time_offset_bound: 0.2,
            rotation_bound: 5f64.to_radians(),
            translation_bound: 0.5,
            max_iters: 30,
            convergence_tol: 1e-6,
            state_dt: 1.0,
            max_states: 300,
            time_tolerance: 1e-6,
            grid_points: 9,
            free: [true; 7],
            chain: ChainParams::default(),
        }
    }
}

impl AlignParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.lambda >= 0.0) {
            return bad("align.lambda must be >= 0");
        }
        if !(self.match_radius > 0.0) {
            return bad("align.match_radius must be > 0");
        }
        if !(self.time_offset_bound >= 0.0 && self.rotation_bound >= 0.0 && self.translation_bound >= 0.0) {
            return bad("align bounds must be >= 0");
        }
        if !(self.state_dt > 0.0) {
            return bad("align.state_dt must be > 0");
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("align.convergence_tol must be >= 0");
        }
        if self.max_states < 1 || self.grid_points < 3 {
            return bad("align.max_states must be >= 1 and align.grid_points >= 3");
        }
        if !(self.time_tolerance >= 0.0) {
            return bad("align.time_tolerance must be >= 0");
        }
        Ok(())
    }

    fn bounds(&self) -> [f64; 7] {
        let (c, r, t) = (self.time_offset_bound, self.rotation_bound, self.translation_bound);
        [c, r, r, r, t, t, t]
    }

    /// Largest pair loss an unmatched prediction can be charged.
    fn loss_cap(&self) -> f64 {
        2.0 + self.lambda * self.match_radius * self.match_radius
    }
}

/// Time offset plus a small world→camera perturbation.
///
/// LiDAR timestamps are mapped to camera time by `t − time_offset`; the
/// corrected extrinsic is `R' = exp(ω)·R`, `t' = exp(ω)·t + δ`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationCorrection {
    pub time_offset: f64,
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

impl CalibrationCorrection {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_array(&self) -> [f64; 7] {
        let (r, t) = (&self.rotation, &self.translation);
        [self.time_offset, r.x, r.y, r.z, t.x, t.y, t.z]
    }

    pub fn from_array(x: &[f64; 7]) -> Self {
        Self {
            time_offset: x[0],
            rotation: Vector3::new(x[1], x[2], x[3]),
            translation: Vector3::new(x[4], x[5], x[6]),
        }
    }

    pub fn apply(&self, camera: &CameraModel) -> CameraModel {
        camera.with_extrinsic(camera.extrinsic.perturbed(&self.rotation, &self.translation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub timestamp: f64,
    pub pixel: Vector2<f64>,
    pub image_state: ImageMotionState2,
    pub world_state: KinematicState3,
    pub residual: f64,
}

/// Image-space view of a temporal vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedVector {
    /// Pixel displacement between the projected endpoints.
    pub flow: Vector2<f64>,
    pub state: ImageMotionState2,
    /// False when no successor was available and the acceleration was set to zero.
    pub has_acceleration: bool,
}

/// Projects both endpoints of `tv` (world frame) and differentiates in time.
/// `successor` must start where `tv` ends to contribute an acceleration.
pub fn project_temporal_vector(
    camera: &CameraModel,
    tv: &TemporalVector,
    successor: Option<&TemporalVector>,
) -> Result<ProjectedVector> {
    let h1 = tv.duration();
    if !(h1 > 0.0) {
        return Err(Error::DegenerateDt(h1));
    }
    let u0 = project_world(camera, &tv.origin.position)?.pixel;
    let u1 = project_world(camera, &tv.target.position)?.pixel;
    let flow = u1 - u0;
    let velocity = flow / h1;
    let chained = successor.filter(|s| {
        s.origin.position == tv.target.position && s.origin.timestamp == tv.target.timestamp && s.duration() > 0.0
    });
    let (acceleration, has_acceleration) = match chained {
        Some(s) => {
            let h2 = s.duration();
            let u2 = project_world(camera, &s.target.position)?.pixel;
            (2.0 * ((u2 - u1) / h2 - flow / h1) / (h1 + h2), true)
        }
        None => (Vector2::zeros(), false),
    };
    Ok(ProjectedVector {
        flow,
        state: ImageMotionState2::new(u0, velocity, acceleration),
        has_acceleration,
    })
}

pub fn cosine_similarity(a: &Vector2<f64>, b: &Vector2<f64>) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if !(na > VECTOR_EPS) {
        return Err(Error::DegenerateVector(na));
    }
    if !(nb > VECTOR_EPS) {
        return Err(Error::DegenerateVector(nb));
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Squared Euclidean distance between the two 6-vectors.
pub fn full_state_loss(pred: &ImageMotionState2, obs: &ImageMotionState2) -> f64 {
    (pred.to_vector() - obs.to_vector()).norm_squared()
}

/// An image motion state at a time, tagged with its source (track id for
/// observations).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedState {
    pub t: f64,
    pub id: u64,
    pub state: ImageMotionState2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub pred: usize,
    pub obs: usize,
    pub cosine: f64,
    pub state_loss: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchReport {
    pub pairs: Vec<MatchedPair>,
    pub total: f64,
    /// Predictions with no observation inside the match radius.
    pub unmatched: usize,
    /// Pairs skipped because a velocity was too short to have a direction.
    pub degenerate: usize,
}

/// Nearest candidate to `pixel` within `radius`; ties go to the lower index.
fn nearest_within<'a, I>(pixel: &Vector2<f64>, candidates: I, radius: f64) -> Option<usize>
where
    I: Iterator<Item = (usize, &'a StampedState)>,
{
    let limit = radius * radius;
    let mut best: Option<(f64, usize)> = None;
    for (j, o) in candidates {
        let d2 = (o.state.pixel - pixel).norm_squared();
        if d2 <= limit && best.is_none_or(|(bd, _)| d2 < bd) {
            best = Some((d2, j));
        }
    }
    best.map(|(_, j)| j)
}

enum PairOutcome {
    Scored { cosine: f64, state_loss: f64, loss: f64 },
    Degenerate { state_loss: f64 },
}

fn score_pair(pred: &ImageMotionState2, obs: &ImageMotionState2, lambda: f64) -> PairOutcome {
    let state_loss = full_state_loss(pred, obs);
    match cosine_similarity(&pred.pixel_velocity, &obs.pixel_velocity) {
        Ok(cosine) => PairOutcome::Scored {
            cosine,
            state_loss,
            loss: 1.0 - cosine + lambda * state_loss,
        },
        Err(_) => PairOutcome::Degenerate { state_loss },
    }
}

/// Matches every prediction to its nearest same-time observation in pixel
/// space and sums the per-pair losses.
pub fn match_and_score(pred: &[StampedState], obs: &[StampedState], params: &AlignParams) -> MatchReport {
    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.sort_by(|&a, &b| obs[a].t.total_cmp(&obs[b].t).then(a.cmp(&b)));
    let mut report = MatchReport::default();
    for (i, p) in pred.iter().enumerate() {
        let lo = order.partition_point(|&j| obs[j].t < p.t - params.time_tolerance);
        let hi = order.partition_point(|&j| obs[j].t <= p.t + params.time_tolerance);
        let mut window: Vec<usize> = order[lo..hi].to_vec();
        window.sort_unstable();
        let Some(j) = nearest_within(
            &p.state.pixel,
            window.iter().map(|&j| (j, &obs[j])),
            params.match_radius,
        ) else {
            report.unmatched += 1;
            continue;
        };
        match score_pair(&p.state, &obs[j].state, params.lambda) {
            PairOutcome::Scored {
                cosine,
                state_loss,
                loss,
            } => report.pairs.push(MatchedPair {
                pred: i,
                obs: j,
                cosine,
                state_loss,
                loss,
            }),
            PairOutcome::Degenerate { .. } => report.degenerate += 1,
        }
    }
    let losses: Vec<f64> = report.pairs.iter().map(|p| p.loss).collect();
    report.total = pairwise_sum(&losses);
    report
}

/// Builds the LiDAR trajectory and the observation grid once, then evaluates
/// corrections against it.
#[derive(Debug, Clone)]
pub struct AlignmentProblem {
    trajectory: Trajectory,
    camera: CameraModel,
    params: AlignParams,
    /// Evaluation times (camera clock) at which labels can be produced.
    times: Vec<f64>,
    /// Observed states per evaluation time.
    observations: Vec<Vec<StampedState>>,
    /// Indices into `times` used by the optimizer.
    subset: Vec<usize>,
    exec: Exec,
}

/// Outcome of [`refine_calibration`].
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub correction: CalibrationCorrection,
    pub labels: Vec<PseudoLabel>,
    /// Objective after the start and after every accepted step.
    pub loss_history: Vec<f64>,
    pub initial_matches: usize,
    pub sweeps: usize,
}

impl AlignmentResult {
    pub fn initial_loss(&self) -> f64 {
        self.loss_history[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("history is never empty")
    }
}

impl AlignmentProblem {
    pub fn new(
        trajectory: Trajectory,
        tracks: &[FeatureTrack],
        camera: CameraModel,
        params: AlignParams,
    ) -> Result<Self> {
        Self::with_exec(trajectory, tracks, camera, params, Exec::default())
    }

    pub fn with_exec(
        trajectory: Trajectory,
        tracks: &[FeatureTrack],
        camera: CameraModel,
        params: AlignParams,
        exec: Exec,
    ) -> Result<Self> {
        params.validate()?;
        let (Some(t0), Some(t1)) = (trajectory.start_time(), trajectory.end_time()) else {
            return Err(Error::TooFewMatches {
                needed: MIN_MATCHES,
                got: 0,
            });
        };
        let dt = params.state_dt;
        let margin = params.time_offset_bound;
        // every offset within bounds must keep τ−dt … τ+2dt on the trajectory
        let (lo, hi) = (t0 + margin + dt, t1 - margin - 2.0 * dt);
        let mut times: Vec<f64> = tracks
            .iter()
            .flat_map(|tr| tr.samples().iter().map(|s| s.t))
            .filter(|&t| t >= lo && t <= hi)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();

        let observations: Vec<Vec<StampedState>> = exec.map(&times, |&t| {
            tracks
                .iter()
                .filter_map(|tr| {
                    orb_motion_state(tr, t, dt)
                        .ok()
                        .map(|state| StampedState { t, id: tr.id, state })
                })
                .collect()
        });
        let n = times.len();
        let m = params.max_states.min(n);
        let subset: Vec<usize> = (0..m).map(|k| if m == 1 { 0 } else { k * (n - 1) / (m - 1) }).collect();
        Ok(Self {
            trajectory,
            camera,
            params,
            times,
            observations,
            subset,
            exec,
        })
    }

    pub fn params(&self) -> &AlignParams {
        &self.params
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Temporal vectors `τ → τ+dt → τ+2dt` on the trajectory, read at LiDAR
    /// time `τ + c` and stamped in camera time.
    fn vectors_at(&self, k: usize, c: f64) -> Option<(TemporalVector, TemporalVector)> {
        let tau = self.times[k];
        let dt = self.params.state_dt;
        let point = |step: f64| {
            let position = self.trajectory.position_at(tau + c + step * dt)?;
            Some(FramePoint {
                position,
                timestamp: tau + step * dt,
                frame: k,
                index: step as usize,
            })
        };
        let (a, b, d) = (point(0.0)?, point(1.0)?, point(2.0)?);
        Some((TemporalVector::new(a, b, 0.0), TemporalVector::new(b, d, 0.0)))
    }

    pub fn predict(&self, k: usize, correction: &CalibrationCorrection, camera: &CameraModel) -> Option<StampedState> {
        let (first, second) = self.vectors_at(k, correction.time_offset)?;
        let pv = project_temporal_vector(camera, &first, Some(&second)).ok()?;
        Some(StampedState {
            t: self.times[k],
            id: 0,
            state: pv.state,
        })
    }

    /// Truncated objective over the optimizer subset: each prediction pays
    /// `min(ℓ, cap)`, and unmatched or unprojectable predictions pay `cap`.
    pub fn objective(&self, correction: &CalibrationCorrection) -> f64 {
        let camera = correction.apply(&self.camera);
        let cap = self.params.loss_cap();
        let lambda = self.params.lambda;
        let terms = self.exec.map(&self.subset, |&k| {
            let Some(pred) = self.predict(k, correction, &camera) else {
                return cap;
            };
            let obs = &self.observations[k];
            match nearest_within(&pred.state.pixel, obs.iter().enumerate(), self.params.match_radius) {
                None => cap,
                Some(j) => match score_pair(&pred.state, &obs[j].state, lambda) {
                    PairOutcome::Scored { loss, .. } => loss.min(cap),
                    PairOutcome::Degenerate { state_loss } => (1.0 + lambda * state_loss).min(cap),
                },
            }
        });
        pairwise_sum(&terms)
    }

    /// Predictions and observations on the optimizer subset, matched and
    /// scored without truncation.
    pub fn score(&self, correction: &CalibrationCorrection) -> MatchReport {
        let camera = correction.apply(&self.camera);
        let preds: Vec<StampedState> = self
            .exec
            .map(&self.subset, |&k| self.predict(k, correction, &camera))
            .into_iter()
            .flatten()
            .collect();
        let obs: Vec<StampedState> = self
            .subset
            .iter()
            .flat_map(|&k| self.observations[k].iter().copied())
            .collect();
        match_and_score(&preds, &obs, &self.params)
    }

    fn world_state(&self, tau: f64, c: f64) -> Option<KinematicState3> {
        let dt = self.params.state_dt;
        let p = self.trajectory.position_at(tau + c)?;
        let before = self.trajectory.position_at(tau + c - dt)?;
        let after = self.trajectory.position_at(tau + c + dt)?;
        Some(KinematicState3::new(
            p,
            (after - before) / (2.0 * dt),
            (after - 2.0 * p + before) / (dt * dt),
            tau,
        ))
    }

    /// One label per evaluation time whose prediction matches an observation,
    /// rebuilt under `correction`, in time order.
    pub fn emit_pseudo_labels(&self, correction: &CalibrationCorrection) -> Vec<PseudoLabel> {
        let camera = correction.apply(&self.camera);
        let lambda = self.params.lambda;
        let all: Vec<usize> = (0..self.times.len()).collect();
        self.exec
            .map(&all, |&k| {
                let pred = self.predict(k, correction, &camera)?;
                let obs = &self.observations[k];
                let j = nearest_within(&pred.state.pixel, obs.iter().enumerate(), self.params.match_radius)?;
                let residual = match score_pair(&pred.state, &obs[j].state, lambda) {
                    PairOutcome::Scored { loss, .. } => loss,
                    PairOutcome::Degenerate { .. } => return None,
                };
                Some(PseudoLabel {
                    timestamp: pred.t,
                    pixel: pred.state.pixel,
                    image_state: pred.state,
                    world_state: self.world_state(pred.t, correction.time_offset)?,
                    residual,
                })
            })
            .into_iter()
            .flatten()
            .collect()
    }

    /// Coordinate descent from the zero correction.
    pub fn refine(&self) -> Result<AlignmentResult> {
        let start = CalibrationCorrection::zero();
        let initial = self.score(&start);
        let matched = initial.pairs.len();
        if matched < MIN_MATCHES {
            return Err(Error::TooFewMatches {
                needed: MIN_MATCHES,
                got: matched,
            });
        }

        let bounds = self.params.bounds();
        let x_tol = [1e-5, 1e-6, 1e-6, 1e-6, 1e-5, 1e-5, 1e-5];
        let eval = |x: &[f64; 7]| self.objective(&CalibrationCorrection::from_array(x));
        let mut x = [0.0; 7];
        let mut f = eval(&x);
        let mut history = vec![f];
        let mut step = bounds;
        let mut sweeps = 0;
        while sweeps < self.params.max_iters {
            sweeps += 1;
            let f_sweep = f;
            for i in 0..7 {
                if !self.params.free[i] || bounds[i] == 0.0 {
                    continue;
                }
                let (lo, hi) = ((x[i] - step[i]).max(-bounds[i]), (x[i] + step[i]).min(bounds[i]));
                let line = |v: f64| {
                    let mut y = x;
                    y[i] = v;
                    eval(&y)
                };
                let (v, fv) = line_search(&line, lo, hi, self.params.grid_points, x_tol[i]);
                if fv < f - self.params.convergence_tol {
                    x[i] = v;
                    f = fv;
                    history.push(f);
                }
            }
            for (s, b) in step.iter_mut().zip(&bounds) {
                *s = (*s * 0.5).max(b * 1e-3);
            }
            if f_sweep - f < self.params.convergence_tol && sweeps > 1 {
                break;
            }
        }

        let correction = CalibrationCorrection::from_array(&x);
        Ok(AlignmentResult {
            correction,
            labels: self.emit_pseudo_labels(&correction),
            loss_history: history,
            initial_matches: matched,
            sweeps,
        })
    }
}

/// Coarse scan of `grid` points over `[lo, hi]`, then golden-section search
/// inside the cell around the best grid point.
fn line_search<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, grid: usize, tol: f64) -> (f64, f64) {
    if !(hi > lo) {
        return (lo, f(lo));
    }
    let h = (hi - lo) / (grid - 1) as f64;
    let xs: Vec<f64> = (0..grid)
        .map(|k| if k + 1 == grid { hi } else { lo + h * k as f64 })
        .collect();
    let fs: Vec<f64> = xs.iter().map(|&v| f(v)).collect();
    let best = (0..grid).fold(0, |b, k| if fs[k] < fs[b] { k } else { b });
    let (mut a, mut b) = (xs[best.saturating_sub(1)], xs[(best + 1).min(grid - 1)]);
    let (mut best_x, mut best_f) = (xs[best], fs[best]);

    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
        for (v, fv) in [(c, fc), (d, fd)] {
            if fv < best_f {
                best_x = v;
                best_f = fv;
            }
        }
    }
    (best_x, best_f)
}

/// Chains `vectors` into a trajectory and refines the correction against `tracks`.
pub fn refine_calibration(
    vectors: &[TemporalVector],
    tracks: &[FeatureTrack],
    camera: &CameraModel,
    params: &AlignParams,
) -> Result<AlignmentResult> {
    let trajectory = chain_trajectory_with(vectors, &params.chain);
    AlignmentProblem::new(trajectory, tracks, *camera, *params)?.refine()
}

/// Labels under a fixed correction (e.g. no alignment at all).
pub fn emit_pseudo_labels(
    trajectory: &Trajectory,
    tracks: &[FeatureTrack],
    camera: &CameraModel,
    correction: &CalibrationCorrection,
    params: &AlignParams,
) -> Result<Vec<PseudoLabel>> {
    Ok(AlignmentProblem::new(trajectory.clone(), tracks, *camera, *params)?.emit_pseudo_labels(correction))
}

const LABEL_HEADER: [&str; 17] = [
    "t", "u", "v", "du", "dv", "ddu", "ddv", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az", "residual",
];

pub fn write_labels_csv<W: Write>(w: W, labels: &[PseudoLabel]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(LABEL_HEADER)?;
    for l in labels {
        let (s, ws) = (&l.image_state, &l.world_state);
        let row: [f64; 17] = [
            l.timestamp,
            l.pixel.x,
            l.pixel.y,
            s.pixel_velocity.x,
            s.pixel_velocity.y,
            s.pixel_acceleration.x,
            s.pixel_acceleration.y,
            ws.position.x,
            ws.position.y,
            ws.position.z,
            ws.velocity.x,
            ws.velocity.y,
            ws.velocity.z,
            ws.acceleration.x,
            ws.acceleration.y,
            ws.acceleration.z,
            l.residual,
        ];
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_labels_csv<R: Read>(r: R) -> Result<Vec<PseudoLabel>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(&mut rd, &LABEL_HEADER)?;
    let mut out = Vec::new();
    for row in rd.deserialize::<[f64; 17]>() {
        let v = row?;
        let pixel = Vector2::new(v[1], v[2]);
        out.push(PseudoLabel {
            timestamp: v[0],
            pixel,
            image_state: ImageMotionState2::new(pixel, Vector2::new(v[3], v[4]), Vector2::new(v[5], v[6])),
            world_state: KinematicState3::new(
                Point3::new(v[7], v[8], v[9]),
                Vector3::new(v[10], v[11], v[12]),
                Vector3::new(v[13], v[14], v[15]),
                v[0],
            ),
            residual: v[16],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pinhole() -> CameraModel {
        CameraModel::pinhole(600.0, 600.0, 640.0, 360.0, 1280, 720)
    }

    fn fp(p: Point3, t: f64) -> FramePoint {
        FramePoint {
            position: p,
            timestamp: t,
            frame: 0,
            index: 0,
        }
    }

    fn st(t: f64, px: (f64, f64), vel: (f64, f64)) -> StampedState {
        StampedState {
            t,
            id: 1,
            state: ImageMotionState2::new(Vector2::new(px.0, px.1), Vector2::new(vel.0, vel.1), Vector2::zeros()),
        }
    }

    #[test]
    fn on_axis_endpoints_have_no_flow() {
        let tv = TemporalVector::new(
            fp(Point3::new(0.0, 0.0, 5.0), 0.0),
            fp(Point3::new(0.0, 0.0, 10.0), 1.0),
            0.0,
        );
        let pv = project_temporal_vector(&pinhole(), &tv, None).unwrap();
        assert_eq!(pv.flow, Vector2::zeros());
        assert!(!pv.has_acceleration);
    }

    #[test]
    fn pinhole_vector() {
        let tv = TemporalVector::new(
            fp(Point3::new(0.0, 0.0, 10.0), 0.0),
            fp(Point3::new(1.0, 0.0, 10.0), 1.0),
            0.0,
        );
        let pv = project_temporal_vector(&pinhole(), &tv, None).unwrap();
        assert!((pv.flow - Vector2::new(60.0, 0.0)).norm() < 1e-12);
        assert!((pv.state.pixel_velocity - Vector2::new(60.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn successor_gives_second_difference() {
        let a = fp(Point3::new(0.0, 0.0, 10.0), 0.0);
        let b = fp(Point3::new(1.0, 0.0, 10.0), 0.5);
        let c = fp(Point3::new(3.0, 0.0, 10.0), 1.0);
        let pv = project_temporal_vector(
            &pinhole(),
            &TemporalVector::new(a, b, 0.0),
            Some(&TemporalVector::new(b, c, 0.0)),
        )
        .unwrap();
        assert!(pv.has_acceleration);
        // pixels 640, 700, 820 at 0.5 s spacing
        assert!((pv.state.pixel_acceleration - Vector2::new(240.0, 0.0)).norm() < 1e-9);
        // a successor that does not continue the vector is ignored
        let pv = project_temporal_vector(
            &pinhole(),
            &TemporalVector::new(a, b, 0.0),
            Some(&TemporalVector::new(a, c, 0.0)),
        )
        .unwrap();
        assert!(!pv.has_acceleration);
    }

    #[test]
    fn behind_camera_endpoint_fails() {
        let tv = TemporalVector::new(
            fp(Point3::new(0.0, 0.0, 10.0), 0.0),
            fp(Point3::new(0.0, 0.0, -1.0), 1.0),
            0.0,
        );
        assert!(matches!(
            project_temporal_vector(&pinhole(), &tv, None),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn cosine_cases() {
        let c = |a: (f64, f64), b: (f64, f64)| cosine_similarity(&Vector2::new(a.0, a.1), &Vector2::new(b.0, b.1));
        assert!((c((1.0, 0.0), (2.0, 0.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!(c((1.0, 0.0), (0.0, 3.0)).unwrap().abs() < 1e-15);
        assert!((c((1.0, 1.0), (-1.0, -1.0)).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(c((0.0, 0.0), (1.0, 0.0)), Err(Error::DegenerateVector(_))));
    }

    #[test]
    fn state_loss_cases() {
        let a = ImageMotionState2::default();
        assert_eq!(full_state_loss(&a, &a), 0.0);
        let mut b = a;
        b.pixel = Vector2::new(3.0, 4.0);
        assert_eq!(full_state_loss(&a, &b), 25.0);
    }

    #[test]
    fn perfect_predictions_score_zero() {
        let obs = vec![st(0.0, (10.0, 10.0), (5.0, 0.0)), st(0.1, (11.0, 10.0), (5.0, 1.0))];
        let r = match_and_score(&obs, &obs, &AlignParams::default());
        assert_eq!(r.pairs.len(), 2);
        assert!(r.total.abs() < 1e-15);
    }

    #[test]
    fn single_pair_formula() {
        // cos = 0.5 and state loss 2
        let a = 60f64.to_radians();
        let mut pred = st(0.0, (0.0, 0.0), (1.0, 0.0));
        pred.state.pixel_acceleration = Vector2::new(1.0, 1.0);
        let obs = st(0.0, (0.0, 0.0), (a.cos(), a.sin()));
        let sl = full_state_loss(&pred.state, &obs.state);
        let expected = 1.0 - 0.5 + 0.1 * sl;
        let r = match_and_score(&[pred], &[obs], &AlignParams::default());
        assert!((r.total - expected).abs() < 1e-12);
        // the same formula with state loss exactly 2
        let pair = 1.0 - 0.5 + 0.1 * 2.0;
        assert!((pair - 0.7f64).abs() < 1e-15);
    }

    #[test]
    fn matching_respects_radius_time_and_degeneracy() {
        let params = AlignParams::default();
        let pred = [st(0.0, (0.0, 0.0), (1.0, 0.0))];
        let far = [st(0.0, (30.0, 0.0), (1.0, 0.0))];
        assert_eq!(match_and_score(&pred, &far, &params).unmatched, 1);
        let later = [st(0.5, (0.0, 0.0), (1.0, 0.0))];
        assert_eq!(match_and_score(&pred, &later, &params).unmatched, 1);
        let still = [st(0.0, (1.0, 0.0), (0.0, 0.0))];
        let r = match_and_score(&pred, &still, &params);
        assert_eq!((r.degenerate, r.pairs.len()), (1, 0));
        // nearest wins, duplicates allowed
        let obs = [st(0.0, (5.0, 0.0), (1.0, 0.0)), st(0.0, (2.0, 0.0), (0.0, 1.0))];
        let r = match_and_score(&[pred[0], pred[0]], &obs, &params);
        assert_eq!(r.pairs.iter().map(|p| p.obs).collect::<Vec<_>>(), vec![1, 1]);
    }

    #[test]
    fn correction_array_round_trip() {
        let x = [0.05, 0.001, -0.002, 0.003, 0.1, -0.2, 0.3];
        assert_eq!(CalibrationCorrection::from_array(&x).to_array(), x);
    }

    #[test]
    fn line_search_finds_parabola_minimum() {
        let (x, fx) = line_search(&|v: f64| (v - 0.123).powi(2) + 1.0, -1.0, 1.0, 9, 1e-8);
        assert!((x - 0.123).abs() < 1e-6);
        assert!((fx - 1.0).abs() < 1e-10);
    }

    #[test]
    fn labels_csv_round_trip() {
        let l = PseudoLabel {
            timestamp: 1.25,
            pixel: Vector2::new(640.5, 360.25),
            image_state: ImageMotionState2::new(
                Vector2::new(640.5, 360.25),
                Vector2::new(1.0, -2.0),
                Vector2::new(0.1, 0.2),
            ),
            world_state: KinematicState3::new(
                Point3::new(1.0, 2.0, 3.0),
                Vector3::new(4.0, 5.0, 6.0),
                Vector3::new(7.0, 8.0, 9.0),
                1.25,
            ),
            residual: 0.5,
        };
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, &[l]).unwrap();
        assert_eq!(read_labels_csv(&buf[..]).unwrap(), vec![l]);
    }
}
