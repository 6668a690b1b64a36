use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{Matrix3, Vector3};
use trajalign::align::{AlignParams, AlignmentProblem, CalibrationCorrection};
use trajalign::sim::{
    simulate, Bounds, ClutterMode, Perturbation, SceneConfig, SensorConfig, TrackConfig, TrajectoryModel, Waypoint,
};
use trajalign::tknn::{build_temporal_vectors_with, chain_trajectory_with, ChainParams, TknnParams};
use trajalign::{CameraModel, Exec, Extrinsic};

fn camera() -> CameraModel {
    let r = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
    CameraModel::pinhole(700.0, 700.0, 640.0, 360.0, 1280, 720)
        .with_unified(0.9, -0.05, 0.01)
        .with_extrinsic(Extrinsic::new(r, Vector3::new(0.0, 1.5, 0.0)).unwrap())
}

fn scene(clutter: usize) -> SceneConfig {
    let waypoints = (0..=20)
        .map(|k| {
            let a = k as f64 * std::f64::consts::TAU / 4.5;
            Waypoint {
                t: k as f64,
                position: [14.0 * a.sin(), 28.0 + 6.0 * a.cos(), 8.0 + 2.0 * (0.5 * a).sin()],
            }
        })
        .collect();
    SceneConfig {
        duration: 20.0,
        trajectory: TrajectoryModel::WaypointSpline { waypoints },
        max_speed: None,
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
            clutter_density: clutter,
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
        seed: 1,
    }
}

const BACKENDS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn tknn(c: &mut Criterion) {
    let params = TknnParams {
        k: 4,
        frame_offset: 1,
        tau: 25.0,
        max_neighbor_distance: f64::INFINITY,
    };
    let mut group = c.benchmark_group("build_temporal_vectors");
    group.sample_size(10);
    for clutter in [500, 2000] {
        let sim = simulate(&scene(clutter), &camera(), Exec::Parallel).unwrap();
        let frames = &sim.streams[0].frames;
        for (name, exec) in BACKENDS {
            group.bench_with_input(BenchmarkId::new(name, clutter), frames, |b, frames| {
                b.iter(|| black_box(build_temporal_vectors_with(frames, &params, exec).unwrap()))
            });
        }
    }
    group.finish();
}

fn alignment(c: &mut Criterion) {
    let sim = simulate(&scene(50), &camera(), Exec::Parallel).unwrap();
    let params = AlignParams {
        chain: ChainParams {
            gap_max: 3,
            cluster_radius: 2.0,
            max_link_speed: 30.0,
        },
        ..AlignParams::default()
    };
    let tknn = TknnParams {
        k: 1,
        frame_offset: 1,
        tau: 25.0,
        max_neighbor_distance: f64::INFINITY,
    };
    let vectors = build_temporal_vectors_with(&sim.streams[0].frames, &tknn, Exec::Parallel).unwrap();
    let traj = chain_trajectory_with(&vectors, &params.chain);
    let correction = CalibrationCorrection {
        time_offset: 0.05,
        ..CalibrationCorrection::zero()
    };
    let mut group = c.benchmark_group("alignment_objective");
    for (name, exec) in BACKENDS {
        let problem = AlignmentProblem::with_exec(traj.clone(), &sim.tracks, camera(), params, exec).unwrap();
        group.bench_function(name, |b| b.iter(|| black_box(problem.objective(&correction))));
    }
    group.finish();
}

criterion_group!(benches, tknn, alignment);
criterion_main!(benches);
