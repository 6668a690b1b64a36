//! Feedforward regression head with hand-written reverse accumulation.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{forecast_features, samples_from_labels, DEFAULT_HORIZONS, INPUT_DIM};
use crate::align::PseudoLabel;
use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Fewest labels accepted for training.
pub const MIN_LABELS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Affine layers with rectifiers between them and an identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    pub layers: Vec<Layer>,
    /// Frozen layers receive exactly zero gradient.
    pub frozen: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            push_row_major(&mut out, w);
            out.extend(b.iter());
        }
        out
    }
}

fn push_row_major(out: &mut Vec<f64>, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        out.extend(m.row(r).iter());
    }
}

impl MlpHead {
    /// Uniform in `±√(6/(fan_in + fan_out))`, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer sizes {sizes:?}")));
        }
        let mut rng = seeded_rng(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..=limit)),
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect::<Vec<_>>();
        let frozen = vec![false; layers.len()];
        Ok(Self { layers, frozen })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].weights.ncols()];
        s.extend(self.layers.iter().map(|l| l.weights.nrows()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Per layer: weights row-major, then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            push_row_major(&mut out, &l.weights);
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: values.len(),
            });
        }
        let mut k = 0;
        for l in &mut self.layers {
            for r in 0..l.weights.nrows() {
                for c in 0..l.weights.ncols() {
                    l.weights[(r, c)] = values[k];
                    k += 1;
                }
            }
            for b in l.bias.iter_mut() {
                *b = values[k];
                k += 1;
            }
        }
        Ok(())
    }

    fn check_input(&self, input: &DVector<f64>) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations of every layer.
    fn pre_activations(&self, input: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut zs = Vec::with_capacity(self.layers.len());
        let mut a = input.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let z = &l.weights * &a + &l.bias;
            a = if i + 1 < self.layers.len() {
                z.map(|v| v.max(0.0))
            } else {
                z.clone()
            };
            zs.push(z);
        }
        zs
    }
}

pub fn mlp_forward(head: &MlpHead, input: &DVector<f64>) -> Result<DVector<f64>> {
    head.check_input(input)?;
    Ok(head.pre_activations(input).pop().expect("at least one layer"))
}

/// Mean squared error over the outputs and its exact parameter gradients.
pub fn mlp_backward(head: &MlpHead, input: &DVector<f64>, target: &DVector<f64>) -> Result<(f64, Gradients)> {
    head.check_input(input)?;
    if target.len() != head.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: head.output_dim(),
            got: target.len(),
        });
    }
    let zs = head.pre_activations(input);
    let n = head.layers.len();
    let activation = |i: usize| -> DVector<f64> {
        if i == 0 {
            input.clone()
        } else {
            zs[i - 1].map(|v| v.max(0.0))
        }
    };
    let err = &zs[n - 1] - target;
    let loss = err.norm_squared() / err.len() as f64;
    let mut delta = err * (2.0 / target.len() as f64);

    let mut weights = vec![DMatrix::zeros(0, 0); n];
    let mut biases = vec![DVector::zeros(0); n];
    for i in (0..n).rev() {
        let layer = &head.layers[i];
        if head.frozen[i] {
            weights[i] = DMatrix::zeros(layer.weights.nrows(), layer.weights.ncols());
            biases[i] = DVector::zeros(layer.bias.len());
        } else {
            weights[i] = &delta * activation(i).transpose();
            biases[i] = delta.clone();
        }
        if i > 0 {
            let back = layer.weights.tr_mul(&delta);
            delta = back.zip_map(&zs[i - 1], |d, z| if z > 0.0 { d } else { 0.0 });
        }
    }
    Ok((loss, Gradients { weights, biases }))
}

/// Per-feature affine normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Features with (near-)zero spread keep unit scale.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a DVector<f64>>, dim: usize) -> Self {
        let rows: Vec<&DVector<f64>> = rows.into_iter().collect();
        if rows.is_empty() {
            return Self::identity(dim);
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd > 1e-9 * (1.0 + m.abs()) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| (x[i] - self.mean[i]) / self.std[i])
    }

    pub fn invert(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(y.len(), |i, _| y[i] * self.std[i] + self.mean[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSample {
    pub input: DVector<f64>,
    /// Displacement from the current position (m).
    pub target: DVector<f64>,
}

/// A head together with its input and output normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    pub head: MlpHead,
    pub input_norm: Standardizer,
    pub output_norm: Standardizer,
    pub horizon_norm: f64,
}

/// JSON companion of the flat parameter blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadDescriptor {
    pub sizes: Vec<usize>,
    pub frozen: Vec<bool>,
    pub input_norm: Standardizer,
    pub output_norm: Standardizer,
    pub horizon_norm: f64,
    pub num_params: usize,
}

impl ForecastModel {
    /// Displacement predicted `horizon` seconds after `label`.
    pub fn predict_displacement(&self, label: &PseudoLabel, horizon: f64) -> Result<Vector3<f64>> {
        let x = self
            .input_norm
            .apply(&forecast_features(label, horizon, self.horizon_norm));
        let y = self.output_norm.invert(&mlp_forward(&self.head, &x)?);
        Ok(Vector3::new(y[0], y[1], y[2]))
    }

    pub fn to_parts(&self) -> (Vec<u8>, HeadDescriptor) {
        let blob = self.head.params_flat().iter().flat_map(|v| v.to_le_bytes()).collect();
        let desc = HeadDescriptor {
            sizes: self.head.sizes(),
            frozen: self.head.frozen.clone(),
            input_norm: self.input_norm.clone(),
            output_norm: self.output_norm.clone(),
            horizon_norm: self.horizon_norm,
            num_params: self.head.num_params(),
        };
        (blob, desc)
    }

    pub fn from_parts(blob: &[u8], desc: &HeadDescriptor) -> Result<Self> {
        let mut head = MlpHead::new(&desc.sizes, 0)?;
        if blob.len() != 8 * head.num_params() || desc.num_params != head.num_params() {
            return Err(Error::DimensionMismatch {
                expected: 8 * head.num_params(),
                got: blob.len(),
            });
        }
        if desc.frozen.len() != head.layers.len() {
            return Err(Error::DimensionMismatch {
                expected: head.layers.len(),
                got: desc.frozen.len(),
            });
        }
        let values: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        head.set_params_flat(&values)?;
        head.frozen = desc.frozen.clone();
        Ok(Self {
            head,
            input_norm: desc.input_norm.clone(),
            output_norm: desc.output_norm.clone(),
            horizon_norm: desc.horizon_norm,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub horizons: Vec<f64>,
    /// Divides the horizon before it enters the head (s).
    pub horizon_norm: f64,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Largest gap between `t + h` and the label used as its target (s).
    pub target_tolerance: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            horizons: DEFAULT_HORIZONS.to_vec(),
            horizon_norm: 5.0,
            hidden: vec![128, 64],
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            target_tolerance: 0.05,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.iter().any(|h| !(*h >= 0.0)) {
            return Err(Error::InvalidConfig(
                "forecast.horizons must be non-empty and >= 0".into(),
            ));
        }
        if !(self.horizon_norm > 0.0) || !(self.learning_rate >= 0.0) || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "forecast.horizon_norm > 0, learning_rate >= 0 and batch_size >= 1 required".into(),
            ));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("forecast.hidden sizes must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean squared error (normalized targets) before training and after each epoch.
    pub loss_curve: Vec<f64>,
    /// Epoch whose parameters were kept (0 = untouched).
    pub best_epoch: usize,
}

fn dataset_loss(head: &MlpHead, data: &[(DVector<f64>, DVector<f64>)]) -> f64 {
    let losses: Vec<f64> = data
        .iter()
        .map(|(x, y)| {
            let out = mlp_forward(head, x).expect("checked dimensions");
            (out - y).norm_squared() / y.len() as f64
        })
        .collect();
    crate::par::pairwise_sum(&losses) / data.len().max(1) as f64
}

/// Adam on shuffled mini-batches; the parameters with the lowest full-data
/// loss seen are kept.
pub fn train_samples(
    model: &mut ForecastModel,
    samples: &[ForecastSample],
    params: &TrainParams,
) -> Result<TrainReport> {
    let data: Vec<(DVector<f64>, DVector<f64>)> = samples
        .iter()
        .map(|s| (model.input_norm.apply(&s.input), model.output_norm.apply(&s.target)))
        .collect();
    if let Some((x, y)) = data.first() {
        model.head.check_input(x)?;
        if y.len() != model.head.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.head.output_dim(),
                got: y.len(),
            });
        }
    }
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let n_params = model.head.num_params();
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let mut step = 0i32;
    let mut rng = seeded_rng(params.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();

    let mut curve = vec![dataset_loss(&model.head, &data)];
    let mut best = (curve[0], 0, model.head.params_flat());
    for epoch in 1..=params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let mut grad = vec![0.0; n_params];
            for &i in batch {
                let (_, g) = mlp_backward(&model.head, &data[i].0, &data[i].1)?;
                for (a, b) in grad.iter_mut().zip(g.flat()) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            step += 1;
            let (c1, c2) = (1.0 - beta1.powi(step), 1.0 - beta2.powi(step));
            let mut theta = model.head.params_flat();
            for k in 0..n_params {
                let g = grad[k] * scale;
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                theta[k] -= params.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
            model.head.set_params_flat(&theta)?;
        }
        let loss = dataset_loss(&model.head, &data);
        curve.push(loss);
        if loss < best.0 {
            best = (loss, epoch, model.head.params_flat());
        }
    }
    model.head.set_params_flat(&best.2)?;
    Ok(TrainReport {
        loss_curve: curve,
        best_epoch: best.1,
    })
}

/// Builds samples from time-ordered labels, fits the normalization, and
/// trains a freshly initialized head.
pub fn train_head(labels: &[PseudoLabel], params: &TrainParams) -> Result<(ForecastModel, TrainReport)> {
    params.validate()?;
    if labels.len() < MIN_LABELS {
        return Err(Error::TooFewLabels {
            needed: MIN_LABELS,
            got: labels.len(),
        });
    }
    let samples = samples_from_labels(labels, &params.horizons, params.horizon_norm, params.target_tolerance);
    if samples.is_empty() {
        return Err(Error::InsufficientSamples("no label pairs span any horizon".into()));
    }
    let mut sizes = vec![INPUT_DIM];
    sizes.extend(&params.hidden);
    sizes.push(3);
    let mut model = ForecastModel {
        head: MlpHead::new(&sizes, params.seed)?,
        input_norm: Standardizer::fit(samples.iter().map(|s| &s.input), INPUT_DIM),
        output_norm: Standardizer::fit(samples.iter().map(|s| &s.target), 3),
        horizon_norm: params.horizon_norm,
    };
    let report = train_samples(&mut model, &samples, params)?;
    Ok((model, report))
}
