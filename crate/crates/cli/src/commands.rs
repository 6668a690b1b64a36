//! The pipeline stages. Stages exchange data only through files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trajalign::align::{read_labels_csv, write_labels_csv, AlignmentProblem, CalibrationCorrection, PseudoLabel};
use trajalign::flow::{load_tracks, save_tracks};
use trajalign::forecast::{
    extrapolate, fit_state, rmse_eval, train_head, write_metrics_csv, write_predictions_csv, ForecastModel,
    HeadDescriptor, Metrics, Prediction,
};
use trajalign::io::{
    atomic_write, load_clouds, read_trajectory_csv, split_streams, write_clouds_bin, write_clouds_csv,
    write_trajectory_csv, write_vectors_csv,
};
use trajalign::sim::{simulate, Manifest};
use trajalign::tknn::{build_temporal_vectors_with, chain_trajectory_with, TemporalVector};
use trajalign::{Exec, Trajectory};

use crate::config::{resolve, CloudFormat, Method, RunConfig};
use crate::error::{CliError, CliResult};
use crate::plot;

/// Configuration plus where artifacts go.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub exec: Exec,
}

impl Context {
    pub fn new(config: RunConfig, out: impl Into<PathBuf>, exec: Exec) -> Self {
        Self {
            config,
            out: out.into(),
            exec,
        }
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        resolve(&self.out, p)
    }

    pub fn clouds_path(&self) -> PathBuf {
        self.path(&self.config.io.clouds)
    }

    pub fn tracks_path(&self) -> PathBuf {
        self.path(&self.config.io.tracks)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.path(&self.config.io.manifest)
    }

    pub fn vectors_path(&self) -> PathBuf {
        self.path(&self.config.io.vectors)
    }

    pub fn trajectory_path(&self) -> PathBuf {
        self.path(&self.config.io.trajectory)
    }

    pub fn correction_path(&self) -> PathBuf {
        self.path(&self.config.io.correction)
    }

    pub fn labels_path(&self) -> PathBuf {
        self.path(&self.config.io.labels)
    }

    pub fn predictions_path(&self) -> PathBuf {
        self.path(&self.config.io.predictions)
    }

    pub fn head_paths(&self) -> (PathBuf, PathBuf) {
        let stem = self.path(&self.config.io.head);
        (with_suffix(&stem, ".bin"), with_suffix(&stem, ".json"))
    }

    pub fn metrics_report_path(&self) -> PathBuf {
        with_suffix(&self.path(&self.config.io.metrics), ".json")
    }

    pub fn metrics_csv_path(&self, method: &str) -> PathBuf {
        with_suffix(&self.path(&self.config.io.metrics), &format!("_{method}.csv"))
    }

    pub fn plots_dir(&self) -> PathBuf {
        self.path(&self.config.io.plots)
    }
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn require(path: &Path, stage: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::UpstreamStageMissing(format!(
            "{} not found; run `{stage}` first",
            path.display()
        )))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    atomic_write(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn cmd_simulate(ctx: &Context) -> CliResult<()> {
    let cfg = &ctx.config;
    let scene = simulate(&cfg.sim, &cfg.camera, ctx.exec)?;
    let frames = scene.frames();
    let clouds = ctx.clouds_path();
    match cfg.io.cloud_format {
        CloudFormat::Bin => atomic_write(&clouds, |w| write_clouds_bin(w, &frames))?,
        CloudFormat::Csv => atomic_write(&clouds, |w| write_clouds_csv(w, &frames))?,
    }
    save_tracks(&ctx.tracks_path(), &scene.tracks)?;
    write_json(&ctx.manifest_path(), &scene.manifest)
}

/// Vectors of every sensor stream, and the longest chained trajectory
/// among the streams (ties go to the lowest sensor id).
pub fn extract(ctx: &Context, frames: &[trajalign::PointCloudFrame]) -> CliResult<(Vec<TemporalVector>, Trajectory)> {
    let mut vectors = Vec::new();
    let mut best = Trajectory::empty();
    for (_, stream) in split_streams(frames) {
        let v = build_temporal_vectors_with(&stream, &ctx.config.tknn, ctx.exec)?;
        let traj = chain_trajectory_with(&v, &ctx.config.align.chain);
        if traj.len() > best.len() {
            best = traj;
        }
        vectors.extend(v);
    }
    Ok((vectors, best))
}

pub fn cmd_extract(ctx: &Context, clouds: Option<&Path>) -> CliResult<()> {
    let path = clouds.map(Path::to_path_buf).unwrap_or_else(|| ctx.clouds_path());
    require(&path, "simulate")?;
    let frames = load_clouds(&path)?;
    let (vectors, traj) = extract(ctx, &frames)?;
    if traj.len() < 2 {
        return Err(CliError::Stage(format!(
            "extraction kept {} vectors but no trajectory of 2 or more frames",
            vectors.len()
        )));
    }
    atomic_write(&ctx.vectors_path(), |w| write_vectors_csv(w, &vectors))?;
    atomic_write(&ctx.trajectory_path(), |w| write_trajectory_csv(w, &traj))?;
    Ok(())
}

/// Refined correction and its optimization record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub correction: CalibrationCorrection,
    pub loss_history: Vec<f64>,
    pub initial_matches: usize,
    pub sweeps: usize,
    pub labels: usize,
}

pub fn cmd_align(ctx: &Context, trajectory: Option<&Path>, tracks: Option<&Path>) -> CliResult<()> {
    let traj_path = trajectory
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.trajectory_path());
    let tracks_path = tracks.map(Path::to_path_buf).unwrap_or_else(|| ctx.tracks_path());
    require(&traj_path, "extract")?;
    require(&tracks_path, "simulate")?;
    let traj = read_trajectory_csv(trajalign::io::open(&traj_path)?)?;
    let tracks = load_tracks(&tracks_path)?;
    let problem = AlignmentProblem::with_exec(traj, &tracks, ctx.config.camera, ctx.config.align, ctx.exec)?;
    let result = problem.refine()?;
    atomic_write(&ctx.labels_path(), |w| write_labels_csv(w, &result.labels))?;
    write_json(
        &ctx.correction_path(),
        &CorrectionReport {
            correction: result.correction,
            loss_history: result.loss_history,
            initial_matches: result.initial_matches,
            sweeps: result.sweeps,
            labels: result.labels.len(),
        },
    )
}

/// Analytic predictions from states fitted on the (time-corrected)
/// trajectory at each issue time.
pub fn analytic_predictions(traj: &Trajectory, issue: &[f64], horizons: &[f64], window: f64) -> Vec<Prediction> {
    let mut out = Vec::new();
    for &t in issue {
        let Ok(state) = fit_state(traj, t, window) else {
            continue;
        };
        for &h in horizons {
            out.push(Prediction {
                method: Method::Analytic.name().into(),
                t,
                horizon: h,
                position: extrapolate(&state, h),
            });
        }
    }
    out
}

/// Head predictions at the issue labels; horizon 0 is the label position.
pub fn mlp_predictions(model: &ForecastModel, issue: &[&PseudoLabel], horizons: &[f64]) -> CliResult<Vec<Prediction>> {
    let mut out = Vec::new();
    for l in issue {
        for &h in horizons {
            let d = if h == 0.0 {
                nalgebra::Vector3::zeros()
            } else {
                model.predict_displacement(l, h)?
            };
            out.push(Prediction {
                method: Method::Mlp.name().into(),
                t: l.timestamp,
                horizon: h,
                position: l.world_state.position + d,
            });
        }
    }
    Ok(out)
}

pub fn cmd_forecast(ctx: &Context, labels: Option<&Path>, trajectory: Option<&Path>) -> CliResult<()> {
    let cfg = &ctx.config.forecast;
    let labels_path = labels.map(Path::to_path_buf).unwrap_or_else(|| ctx.labels_path());
    let traj_path = trajectory
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.trajectory_path());
    require(&labels_path, "align")?;
    let labels = read_labels_csv(trajalign::io::open(&labels_path)?)?;
    let issue: Vec<&PseudoLabel> = labels.iter().step_by(cfg.issue_stride).collect();
    let issue_times: Vec<f64> = issue.iter().map(|l| l.timestamp).collect();

    let mut preds = Vec::new();
    for method in sorted_methods(&cfg.methods) {
        match method {
            Method::Analytic => {
                require(&traj_path, "extract")?;
                let correction_path = ctx.correction_path();
                require(&correction_path, "align")?;
                let report: CorrectionReport = read_json(&correction_path)?;
                let traj = read_trajectory_csv(trajalign::io::open(&traj_path)?)?;
                let traj = traj.shifted(report.correction.time_offset);
                preds.extend(analytic_predictions(&traj, &issue_times, &cfg.horizons, cfg.window));
            }
            Method::Mlp => {
                let (model, report) = train_head(&labels, &cfg.mlp)?;
                let (blob, desc) = model.to_parts();
                let (bin, json) = ctx.head_paths();
                atomic_write(&bin, |w| Ok(w.write_all(&blob)?))?;
                write_json(
                    &json,
                    &HeadReport {
                        head: desc,
                        loss_curve: report.loss_curve,
                        best_epoch: report.best_epoch,
                    },
                )?;
                preds.extend(mlp_predictions(&model, &issue, &cfg.horizons)?);
            }
        }
    }
    if preds.is_empty() {
        return Err(CliError::Stage(
            "no issue time had enough history for a prediction".into(),
        ));
    }
    atomic_write(&ctx.predictions_path(), |w| write_predictions_csv(w, &preds))?;
    Ok(())
}

fn sorted_methods(methods: &[Method]) -> Vec<Method> {
    let mut m = methods.to_vec();
    m.sort();
    m.dedup();
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadReport {
    pub head: HeadDescriptor,
    pub loss_curve: Vec<f64>,
    pub best_epoch: usize,
}

/// Metrics of every method found in the predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub methods: BTreeMap<String, Metrics>,
}

/// Ground truth for every prediction whose target time lies inside the
/// simulated span.
pub fn truth_for(preds: &[Prediction], manifest: &Manifest) -> (Vec<Prediction>, Vec<Prediction>) {
    let truth = manifest.trajectory.evaluator();
    let mut kept = Vec::new();
    let mut gt = Vec::new();
    for p in preds {
        let target = p.t + p.horizon;
        if target < 0.0 || target > manifest.duration + 1e-9 {
            continue;
        }
        kept.push(p.clone());
        gt.push(Prediction {
            position: truth.position(target),
            ..p.clone()
        });
    }
    (kept, gt)
}

pub fn evaluate(preds: &[Prediction], gt: &[Prediction], horizons: &[f64], time_eps: f64) -> CliResult<MetricsReport> {
    let mut methods = BTreeMap::new();
    let mut names: Vec<&str> = preds.iter().map(|p| p.method.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    for name in names {
        let p: Vec<Prediction> = preds.iter().filter(|p| p.method == name).cloned().collect();
        let g: Vec<Prediction> = gt.iter().filter(|p| p.method == name).cloned().collect();
        methods.insert(name.to_string(), rmse_eval(&p, &g, horizons, time_eps)?);
    }
    Ok(MetricsReport { methods })
}

pub fn cmd_eval(ctx: &Context, predictions: Option<&Path>, manifest: Option<&Path>) -> CliResult<()> {
    let pred_path = predictions
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.predictions_path());
    let manifest_path = manifest.map(Path::to_path_buf).unwrap_or_else(|| ctx.manifest_path());
    require(&pred_path, "forecast")?;
    require(&manifest_path, "simulate")?;
    let preds = trajalign::forecast::read_predictions_csv(trajalign::io::open(&pred_path)?)?;
    let manifest: Manifest = read_json(&manifest_path)?;
    let (kept, gt) = truth_for(&preds, &manifest);
    let report = evaluate(&kept, &gt, &ctx.config.forecast.horizons, ctx.config.eval.time_eps)?;
    write_metrics(ctx, &report)
}

pub fn write_metrics(ctx: &Context, report: &MetricsReport) -> CliResult<()> {
    for (name, m) in &report.methods {
        atomic_write(&ctx.metrics_csv_path(name), |w| write_metrics_csv(w, m))?;
    }
    write_json(&ctx.metrics_report_path(), report)
}

pub fn cmd_plot(ctx: &Context, metrics: Option<&Path>, trajectory: Option<&Path>) -> CliResult<()> {
    let metrics_path = metrics
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.metrics_report_path());
    let traj_path = trajectory
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.trajectory_path());
    let dir = ctx.plots_dir();
    let mut any = false;
    if metrics_path.exists() {
        let report: MetricsReport = read_json(&metrics_path)?;
        plot::write_error_plots(&dir, &report)?;
        any = true;
    }
    if traj_path.exists() {
        let traj = read_trajectory_csv(trajalign::io::open(&traj_path)?)?;
        let manifest_path = ctx.manifest_path();
        let truth = if manifest_path.exists() {
            let m: Manifest = read_json(&manifest_path)?;
            Some(m.truth_samples)
        } else {
            None
        };
        plot::write_trajectory_plots(&dir, &traj, truth.as_ref())?;
        any = true;
    }
    if !any {
        return Err(CliError::UpstreamStageMissing(format!(
            "neither {} nor {} exists; run `eval` or `extract` first",
            metrics_path.display(),
            traj_path.display()
        )));
    }
    Ok(())
}

pub fn cmd_pipeline(ctx: &Context) -> CliResult<()> {
    fs::create_dir_all(&ctx.out).map_err(|e| CliError::Io(format!("{}: {e}", ctx.out.display())))?;
    write_json(&ctx.out.join("config.json"), &ctx.config)?;
    cmd_simulate(ctx)?;
    cmd_extract(ctx, None)?;
    cmd_align(ctx, None, None)?;
    cmd_forecast(ctx, None, None)?;
    cmd_eval(ctx, None, None)?;
    cmd_plot(ctx, None, None)
}
