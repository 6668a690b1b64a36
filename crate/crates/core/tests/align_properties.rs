mod common;

use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;
use trajalign::align::{
    cosine_similarity, emit_pseudo_labels, match_and_score, AlignParams, AlignmentProblem, CalibrationCorrection,
    StampedState,
};
use trajalign::flow::{orb_motion_state, FeatureTrack, TrackSample};
use trajalign::projection::project_world;
use trajalign::sim::{simulate, Perturbation, Scene, TrajectoryModel};
use trajalign::tknn::{build_temporal_vectors, chain_trajectory_with, ChainParams, TknnParams};
use trajalign::{Exec, ImageMotionState2, Trajectory};

fn state(p: (f64, f64), v: (f64, f64), a: (f64, f64)) -> ImageMotionState2 {
    ImageMotionState2::new(Vector2::new(p.0, p.1), Vector2::new(v.0, v.1), Vector2::new(a.0, a.1))
}

fn arb_state() -> impl Strategy<Value = ImageMotionState2> {
    let pair = || (-50.0..50.0f64, -50.0..50.0f64);
    (pair(), pair(), pair()).prop_map(|(p, v, a)| state((p.0 + 300.0, p.1 + 300.0), v, a))
}

fn stamped(states: Vec<ImageMotionState2>) -> Vec<StampedState> {
    states
        .into_iter()
        .enumerate()
        .map(|(i, state)| StampedState {
            t: (i % 4) as f64,
            id: i as u64,
            state,
        })
        .collect()
}

proptest! {
    #[test]
    fn cosine_ignores_magnitudes(a in (-10.0..10.0f64, -10.0..10.0f64), b in (-10.0..10.0f64, -10.0..10.0f64)) {
        let (a, b) = (Vector2::new(a.0, a.1), Vector2::new(b.0, b.1));
        prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3);
        let base = cosine_similarity(&a, &b).unwrap();
        for s in [0.5, 2.0, 10.0] {
            prop_assert!((cosine_similarity(&(a * s), &b).unwrap() - base).abs() < 1e-12);
            prop_assert!((cosine_similarity(&a, &(b * s)).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn total_is_the_sum_of_pair_losses(
        pred in prop::collection::vec(arb_state(), 0..20),
        obs in prop::collection::vec(arb_state(), 0..20),
        lambda in 0.0..2.0f64,
    ) {
        let params = AlignParams { lambda, match_radius: 40.0, ..AlignParams::default() };
        let report = match_and_score(&stamped(pred.clone()), &stamped(obs), &params);
        let sum: f64 = report.pairs.iter().map(|p| p.loss).sum();
        prop_assert!((report.total - sum).abs() <= 1e-9 * sum.abs().max(1.0));
        prop_assert_eq!(report.pairs.len() + report.unmatched + report.degenerate, pred.len());
        for p in &report.pairs {
            prop_assert!((p.loss - (1.0 - p.cosine + lambda * p.state_loss)).abs() < 1e-9);
        }
    }

    #[test]
    fn without_state_term_only_direction_matters(
        base in arb_state(),
        shift in (-5.0..5.0f64, -5.0..5.0f64),
        scale in 0.1..10.0f64,
    ) {
        prop_assume!(base.pixel_velocity.norm() > 1e-3);
        let params = AlignParams { lambda: 0.0, ..AlignParams::default() };
        let obs = ImageMotionState2::new(
            base.pixel + Vector2::new(shift.0, shift.1),
            base.pixel_velocity * scale,
            base.pixel_acceleration * 3.0,
        );
        let report = match_and_score(&stamped(vec![base]), &stamped(vec![obs]), &params);
        prop_assert_eq!(report.pairs.len(), 1);
        prop_assert!(report.total.abs() < 1e-12);

        // scaling both direction vectors leaves the loss unchanged
        let turned = ImageMotionState2::new(obs.pixel, Vector2::new(-obs.pixel_velocity.y, obs.pixel_velocity.x), obs.pixel_acceleration);
        let reference = match_and_score(&stamped(vec![base]), &stamped(vec![turned]), &params).total;
        for s in [0.5, 2.0, 10.0] {
            let scaled = ImageMotionState2::new(turned.pixel, turned.pixel_velocity * s, turned.pixel_acceleration);
            let total = match_and_score(&stamped(vec![base]), &stamped(vec![scaled]), &params).total;
            prop_assert!((total - reference).abs() < 1e-12);
        }
    }
}

fn track(id: u64, pixels: &[(f64, f64)], dt: f64) -> FeatureTrack {
    let samples = pixels
        .iter()
        .enumerate()
        .map(|(k, p)| TrackSample {
            t: k as f64 * dt,
            pixel: Vector2::new(p.0, p.1),
        })
        .collect();
    FeatureTrack::new(id, samples).unwrap()
}

proptest! {
    #[test]
    fn linear_tracks_have_zero_acceleration(
        origin in (0.0..1000.0f64, 0.0..700.0f64),
        v in (-30.0..30.0f64, -30.0..30.0f64),
        dt in 0.1..1.0f64,
    ) {
        let pixels: Vec<(f64, f64)> = (0..3).map(|k| (origin.0 + v.0 * k as f64 * dt, origin.1 + v.1 * k as f64 * dt)).collect();
        let s = orb_motion_state(&track(0, &pixels, dt), 0.0, dt).unwrap();
        prop_assert!(s.pixel_acceleration.norm() < 1e-9);
        prop_assert!((s.pixel_velocity - Vector2::new(v.0, v.1)).norm() < 1e-9);
    }

    #[test]
    fn constant_pixel_offset_moves_only_the_position(
        pixels in prop::collection::vec((0.0..1000.0f64, 0.0..700.0f64), 3),
        offset in (-100.0..100.0f64, -100.0..100.0f64),
        dt in 0.1..1.0f64,
    ) {
        let shifted: Vec<(f64, f64)> = pixels.iter().map(|p| (p.0 + offset.0, p.1 + offset.1)).collect();
        let a = orb_motion_state(&track(0, &pixels, dt), 0.0, dt).unwrap();
        let b = orb_motion_state(&track(0, &shifted, dt), 0.0, dt).unwrap();
        prop_assert!((b.pixel - a.pixel - Vector2::new(offset.0, offset.1)).norm() < 1e-9);
        prop_assert!((b.pixel_velocity - a.pixel_velocity).norm() < 1e-9);
        prop_assert!((b.pixel_acceleration - a.pixel_acceleration).norm() < 1e-6);
    }

    #[test]
    fn reversing_time_negates_velocity_and_keeps_acceleration(
        pixels in prop::collection::vec((0.0..1000.0f64, 0.0..700.0f64), 3),
        dt in 0.1..1.0f64,
    ) {
        let reversed: Vec<(f64, f64)> = pixels.iter().rev().cloned().collect();
        let a = orb_motion_state(&track(0, &pixels, dt), 0.0, dt).unwrap();
        let b = orb_motion_state(&track(0, &reversed, dt), 0.0, dt).unwrap();
        // the reversed track starts on the forward track's last segment
        let last_segment = a.pixel_velocity + a.pixel_acceleration * dt;
        prop_assert!((b.pixel_velocity + last_segment).norm() < 1e-9 * (1.0 + last_segment.norm()));
        prop_assert!((a.pixel_acceleration - b.pixel_acceleration).norm() < 1e-6 * (1.0 + a.pixel_acceleration.norm()));
    }
}

const TKNN: TknnParams = TknnParams {
    k: 1,
    frame_offset: 1,
    tau: 25.0,
    max_neighbor_distance: f64::INFINITY,
};

fn aligned_params() -> AlignParams {
    AlignParams {
        chain: ChainParams {
            gap_max: 3,
            cluster_radius: 2.0,
            max_link_speed: 30.0,
        },
        ..AlignParams::default()
    }
}

fn orbit_scene(seed: u64, perturbation: Perturbation, pixel_noise: f64, point_noise: f64) -> Scene {
    let mut cfg = common::scene(common::orbit(20.0, 4.5, 28.0), 20.0, seed);
    cfg.sensors[0] = common::sensor(point_noise, 50);
    cfg.tracks.pixel_noise = pixel_noise;
    cfg.tracks.n_background = 10;
    cfg.perturbation = perturbation;
    simulate(&cfg, &common::camera(), Exec::Parallel).unwrap()
}

fn extracted(scene: &Scene, params: &AlignParams) -> Trajectory {
    let vectors = build_temporal_vectors(&scene.streams[0].frames, &TKNN).unwrap();
    chain_trajectory_with(&vectors, &params.chain)
}

#[test]
fn true_offset_scores_below_zero_correction() {
    let params = aligned_params();
    let offset = Perturbation {
        time_offset: 0.05,
        ..Perturbation::default()
    };
    for seed in 0..20 {
        let scene = orbit_scene(seed, offset, 1.0, 0.05);
        let problem =
            AlignmentProblem::new(extracted(&scene, &params), &scene.tracks, common::camera(), params).unwrap();
        let truth = CalibrationCorrection {
            time_offset: 0.05,
            ..CalibrationCorrection::zero()
        };
        let (at_truth, at_zero) = (
            problem.objective(&truth),
            problem.objective(&CalibrationCorrection::zero()),
        );
        assert!(at_truth < at_zero, "seed {seed}: {at_truth} vs {at_zero}");
    }
}

#[test]
fn accepted_steps_never_increase_the_loss() {
    let params = aligned_params();
    for seed in 0..4 {
        let p = Perturbation {
            rotation_deg: 0.5,
            axis: [0.0, 0.0, 1.0],
            translation: [0.05, 0.0, 0.0],
            time_offset: 0.03,
        };
        let scene = orbit_scene(seed, p, 1.0, 0.05);
        let problem =
            AlignmentProblem::new(extracted(&scene, &params), &scene.tracks, common::camera(), params).unwrap();
        let result = problem.refine().unwrap();
        assert!(result.loss_history.len() >= 2);
        for w in result.loss_history.windows(2) {
            assert!(w[1] <= w[0], "seed {seed}: {:?}", result.loss_history);
        }
        assert_eq!(result.final_loss(), problem.objective(&result.correction));
    }
}

#[test]
fn half_degree_rotation_is_recovered_within_a_fifth() {
    let params = AlignParams {
        free: [false, true, true, true, false, false, false],
        ..aligned_params()
    };
    let axis = [0.0, 0.0, 1.0];
    let p = Perturbation {
        rotation_deg: 0.5,
        axis,
        ..Perturbation::default()
    };
    let scene = orbit_scene(3, p, 0.0, 0.0);
    let problem = AlignmentProblem::new(extracted(&scene, &params), &scene.tracks, common::camera(), params).unwrap();
    let recovered = problem.refine().unwrap().correction.rotation;
    let truth = Vector3::from(axis) * 0.5f64.to_radians();
    assert!(
        (recovered - truth).norm() <= 0.2 * truth.norm(),
        "recovered {recovered:?}, injected {truth:?}"
    );
}

#[test]
fn noise_free_labels_hit_the_true_projection() {
    let params = aligned_params();
    // labels interpolate the 10 Hz trajectory linearly, which is exact for straight motion
    let motion = TrajectoryModel::ConstantVelocity {
        start: [-9.0, 26.0, 8.0],
        velocity: [1.5, 0.2, 0.1],
    };
    let cfg = common::scene(motion, 12.0, 2);
    let scene = simulate(&cfg, &common::camera(), Exec::Parallel).unwrap();
    let traj = extracted(&scene, &params);
    let labels = emit_pseudo_labels(
        &traj,
        &scene.tracks,
        &common::camera(),
        &CalibrationCorrection::zero(),
        &params,
    )
    .unwrap();
    assert!(labels.len() > 100);
    for l in &labels {
        let want = project_world(&scene.true_camera, &scene.truth.position(l.timestamp))
            .unwrap()
            .pixel;
        assert!(
            (l.pixel - want).norm() < 1e-6,
            "t = {}: {:?} vs {:?}",
            l.timestamp,
            l.pixel,
            want
        );
        assert!(l.residual >= 0.0);
    }
}
