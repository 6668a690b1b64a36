//! Future-position prediction: constant-acceleration extrapolation from a
//! fitted state, a small trainable feedforward head, and horizon metrics.

mod metrics;
mod mlp;

pub use metrics::{
    read_predictions_csv, rmse_eval, write_metrics_csv, write_predictions_csv, HorizonMetrics, Metrics, Prediction,
};
pub use mlp::{
    mlp_backward, mlp_forward, train_head, train_samples, ForecastModel, ForecastSample, Gradients, HeadDescriptor,
    Layer, MlpHead, Standardizer, TrainParams, TrainReport, MIN_LABELS,
};

use nalgebra::{DMatrix, DVector, Vector3};

use crate::align::PseudoLabel;
use crate::error::{Error, Result};
use crate::types::{KinematicState3, Point3, Trajectory};

/// Horizons (s) the head is trained for.
pub const DEFAULT_HORIZONS: [f64; 4] = [1.0, 2.0, 3.0, 5.0];

/// `X₃ ⊕ X₂ ⊕ X₂ᴼᴿᴮ ⊕ t ⊕ Δt/norm`
pub const INPUT_DIM: usize = 9 + 6 + 6 + 1 + 1;

/// Least-squares quadratic per axis over the samples in `[t − window, t]`,
/// read off at `t`.
pub fn fit_state(traj: &Trajectory, t: f64, window: f64) -> Result<KinematicState3> {
    let samples = traj.window(t - window, t);
    if samples.len() < 3 {
        return Err(Error::InsufficientSamples(format!(
            "{} sample(s) in [{}, {t}], need 3",
            samples.len(),
            t - window
        )));
    }
    let n = samples.len();
    let design = DMatrix::from_fn(n, 3, |r, c| (samples[r].t - t).powi(c as i32));
    let rhs = DMatrix::from_fn(n, 3, |r, c| samples[r].position[c]);
    let coeffs = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InsufficientSamples(e.to_string()))?;
    let row = |k: usize| Vector3::new(coeffs[(k, 0)], coeffs[(k, 1)], coeffs[(k, 2)]);
    Ok(KinematicState3::new(row(0), row(1), 2.0 * row(2), t))
}

/// `p + V·h + ½·α·h²`
pub fn extrapolate(state: &KinematicState3, horizon: f64) -> Point3 {
    state.position + state.velocity * horizon + state.acceleration * (0.5 * horizon * horizon)
}

/// Raw feature vector for one label and horizon.
pub fn forecast_features(label: &PseudoLabel, horizon: f64, horizon_norm: f64) -> DVector<f64> {
    let mut x = DVector::zeros(INPUT_DIM);
    x.rows_mut(0, 9).copy_from(&label.world_state.to_vector());
    let image = label.image_state.to_vector();
    x.rows_mut(9, 6).copy_from(&image);
    // the observed track state is not kept in a label; the matched
    // prediction stands in for it
    x.rows_mut(15, 6).copy_from(&image);
    x[21] = label.timestamp;
    x[22] = horizon / horizon_norm;
    x
}

/// Training samples: for each label and horizon, the displacement to the
/// label closest to `t + h` (within `tolerance`).
pub fn samples_from_labels(
    labels: &[PseudoLabel],
    horizons: &[f64],
    horizon_norm: f64,
    tolerance: f64,
) -> Vec<ForecastSample> {
    let mut sorted: Vec<&PseudoLabel> = labels.iter().collect();
    sorted.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let mut out = Vec::new();
    for l in &sorted {
        for &h in horizons {
            let goal = l.timestamp + h;
            let k = sorted.partition_point(|m| m.timestamp < goal);
            let best = [k.wrapping_sub(1), k]
                .into_iter()
                .filter_map(|i| sorted.get(i))
                .filter(|m| (m.timestamp - goal).abs() <= tolerance)
                .min_by(|a, b| (a.timestamp - goal).abs().total_cmp(&(b.timestamp - goal).abs()));
            if let Some(m) = best {
                out.push(ForecastSample {
                    input: forecast_features(l, h, horizon_norm),
                    target: DVector::from_column_slice((m.world_state.position - l.world_state.position).as_slice()),
                });
            }
        }
    }
    out
}
