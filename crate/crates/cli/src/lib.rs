//! Command-line front end: simulate → extract → align → forecast → eval,
//! plus chart emission, all driven by one JSON run configuration.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use trajalign::Exec;

use crate::commands::Context;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

const CAMERA_KEYS: &str = "camera.fx, camera.fy, camera.cx, camera.cy, camera.xi, camera.k1, camera.k2, \
camera.width, camera.height, camera.extrinsic.rotation, camera.extrinsic.translation";
const SIM_KEYS: &str = "sim.duration, sim.trajectory.kind, sim.trajectory.start, sim.trajectory.velocity, \
sim.trajectory.acceleration, sim.trajectory.waypoints, sim.max_speed, sim.max_acceleration, sim.bounds.min, \
sim.bounds.max, sim.sensors[].id, sim.sensors[].rate, sim.sensors[].timestamp_jitter, sim.sensors[].offset, \
sim.sensors[].point_noise, sim.sensors[].dropout, sim.sensors[].clutter_density, sim.sensors[].clutter_jitter, \
sim.sensors[].clutter_mode, sim.tracks.rate, sim.tracks.pixel_noise, sim.tracks.n_background, \
sim.perturbation.rotation_deg, sim.perturbation.axis, sim.perturbation.translation, sim.perturbation.time_offset, sim.seed";
const TKNN_KEYS: &str = "tknn.k, tknn.frame_offset, tknn.tau, tknn.max_neighbor_distance";
const CHAIN_KEYS: &str = "align.chain.gap_max, align.chain.cluster_radius, align.chain.max_link_speed";
const ALIGN_KEYS: &str = "align.lambda, align.match_radius, align.time_offset_bound, align.rotation_bound, \
align.translation_bound, align.max_iters, align.convergence_tol, align.state_dt, align.max_states, \
align.time_tolerance, align.grid_points, align.free";
const FORECAST_KEYS: &str = "forecast.horizons, forecast.window, forecast.issue_stride, forecast.methods, \
forecast.mlp.horizons, forecast.mlp.horizon_norm, forecast.mlp.hidden, forecast.mlp.epochs, \
forecast.mlp.learning_rate, forecast.mlp.batch_size, forecast.mlp.seed, forecast.mlp.target_tolerance";

#[derive(Debug, Parser)]
#[command(
    name = "trajalign",
    version,
    about = "Trajectory extraction, LiDAR/camera alignment and forecasting"
)]
pub struct Cli {
    /// JSON run configuration (defaults to the built-in nominal scene).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory that relative artifact paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overrides sim.seed and forecast.mlp.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate point clouds, feature tracks and a ground-truth manifest.
    #[command(after_help = simulate_help())]
    Simulate,
    /// Build filtered temporal vectors and chain them into a trajectory.
    #[command(after_help = extract_help())]
    Extract {
        /// Point-cloud file (CSV or binary); defaults to io.clouds.
        #[arg(long)]
        clouds: Option<PathBuf>,
    },
    /// Refine the LiDAR/camera correction and emit pseudo-labels.
    #[command(after_help = align_help())]
    Align {
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        tracks: Option<PathBuf>,
    },
    /// Predict future positions at every configured horizon.
    #[command(after_help = forecast_help())]
    Forecast {
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Score predictions against the simulator ground truth.
    #[command(after_help = eval_help())]
    Eval {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Run every stage in sequence.
    #[command(after_help = pipeline_help())]
    Pipeline,
    /// Write CSV series and SVG charts of metrics and trajectories.
    #[command(after_help = plot_help())]
    Plot {
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
}

fn keys(groups: &[&str]) -> String {
    format!("Config keys read:\n  {}", groups.join(",\n  "))
}

fn simulate_help() -> String {
    keys(&[
        CAMERA_KEYS,
        SIM_KEYS,
        "io.cloud_format, io.clouds, io.tracks, io.manifest",
    ])
}

fn extract_help() -> String {
    keys(&[TKNN_KEYS, CHAIN_KEYS, "io.clouds, io.vectors, io.trajectory"])
}

fn align_help() -> String {
    keys(&[
        CAMERA_KEYS,
        ALIGN_KEYS,
        "io.trajectory, io.tracks, io.labels, io.correction",
    ])
}

fn forecast_help() -> String {
    keys(&[
        FORECAST_KEYS,
        "io.labels, io.trajectory, io.correction, io.predictions, io.head",
    ])
}

fn eval_help() -> String {
    keys(&[
        "forecast.horizons, eval.time_eps",
        "io.predictions, io.manifest, io.metrics",
    ])
}

fn plot_help() -> String {
    keys(&["io.metrics, io.trajectory, io.manifest, io.plots"])
}

fn pipeline_help() -> String {
    keys(&[
        CAMERA_KEYS,
        SIM_KEYS,
        TKNN_KEYS,
        CHAIN_KEYS,
        ALIGN_KEYS,
        FORECAST_KEYS,
        "eval.time_eps",
        "io.cloud_format, io.clouds, io.tracks, io.manifest, io.vectors, io.trajectory, io.correction, \
io.labels, io.predictions, io.head, io.metrics, io.plots",
    ])
}

/// Loads the configuration and applies the command-line overrides.
pub fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
        cfg.forecast.mlp.seed = seed;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> CliResult<()> {
    let config = load_config(&cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    let ctx = Context::new(config, cli.out.clone(), Exec::Parallel);
    pool.install(|| match &cli.command {
        Command::Simulate => commands::cmd_simulate(&ctx),
        Command::Extract { clouds } => commands::cmd_extract(&ctx, clouds.as_deref()),
        Command::Align { trajectory, tracks } => commands::cmd_align(&ctx, trajectory.as_deref(), tracks.as_deref()),
        Command::Forecast { labels, trajectory } => {
            commands::cmd_forecast(&ctx, labels.as_deref(), trajectory.as_deref())
        }
        Command::Eval { predictions, manifest } => {
            commands::cmd_eval(&ctx, predictions.as_deref(), manifest.as_deref())
        }
        Command::Pipeline => commands::cmd_pipeline(&ctx),
        Command::Plot { metrics, trajectory } => commands::cmd_plot(&ctx, metrics.as_deref(), trajectory.as_deref()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_config_key_is_documented() {
        let value = serde_json::to_value(RunConfig::default()).unwrap();
        let mut leaves = Vec::new();
        fn walk(prefix: &str, v: &serde_json::Value, out: &mut Vec<String>) {
            match v {
                serde_json::Value::Object(map) => {
                    for (k, child) in map {
                        let p = if prefix.is_empty() {
                            k.clone()
                        } else {
                            format!("{prefix}.{k}")
                        };
                        walk(&p, child, out);
                    }
                }
                _ => out.push(prefix.to_string()),
            }
        }
        walk("", &value, &mut leaves);
        let help = pipeline_help();
        for key in leaves {
            // nested sensor and waypoint entries are documented per element
            if key.starts_with("sim.sensors") || key.starts_with("sim.trajectory") {
                continue;
            }
            assert!(help.contains(&key), "{key} missing from help");
        }
    }
}
