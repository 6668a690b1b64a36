//! Per-axis and per-horizon RMSE between predicted and reference positions.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::check_header;
use crate::par::pairwise_sum;
use crate::types::Point3;

const HORIZON_EPS: f64 = 1e-9;

/// Position predicted at issue time `t` for `t + horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub method: String,
    pub t: f64,
    pub horizon: f64,
    pub position: Point3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub horizon: f64,
    /// RMSE along x, y and z.
    pub axis: [f64; 3],
    /// RMSE of the Euclidean error.
    pub euclidean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `D_x, D_y, D_z` over every matched pair.
    pub axis: [f64; 3],
    pub count: usize,
    pub horizons: Vec<HorizonMetrics>,
}

impl Metrics {
    pub fn horizon(&self, h: f64) -> Option<&HorizonMetrics> {
        self.horizons.iter().find(|m| (m.horizon - h).abs() <= HORIZON_EPS)
    }

    /// `(metric, horizon, value)` rows.
    pub fn rows(&self) -> Vec<(String, String, f64)> {
        let mut rows = Vec::new();
        for (k, name) in ["D_x", "D_y", "D_z"].iter().enumerate() {
            rows.push((name.to_string(), "all".to_string(), self.axis[k]));
        }
        for h in &self.horizons {
            for (k, name) in ["D_x", "D_y", "D_z"].iter().enumerate() {
                rows.push((name.to_string(), h.horizon.to_string(), h.axis[k]));
            }
            rows.push((format!("E_{}s", h.horizon), h.horizon.to_string(), h.euclidean));
        }
        rows
    }
}

fn rms(squares: &[f64]) -> f64 {
    (pairwise_sum(squares) / squares.len() as f64).sqrt()
}

/// Pairs each prediction with the reference entry of the same horizon whose
/// issue time is closest (within `time_eps`). Predictions at horizons not in
/// `horizons` are ignored; horizons without any pair are left out.
pub fn rmse_eval(pred: &[Prediction], gt: &[Prediction], horizons: &[f64], time_eps: f64) -> Result<Metrics> {
    let mut by_horizon = Vec::new();
    let mut all: [Vec<f64>; 3] = Default::default();
    for &h in horizons {
        let mut refs: Vec<&Prediction> = gt.iter().filter(|g| (g.horizon - h).abs() <= HORIZON_EPS).collect();
        refs.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut sq: [Vec<f64>; 3] = Default::default();
        let mut euclid = Vec::new();
        for p in pred.iter().filter(|p| (p.horizon - h).abs() <= HORIZON_EPS) {
            let k = refs.partition_point(|g| g.t < p.t);
            let best = [k.wrapping_sub(1), k]
                .into_iter()
                .filter_map(|i| refs.get(i))
                .filter(|g| (g.t - p.t).abs() <= time_eps)
                .min_by(|a, b| (a.t - p.t).abs().total_cmp(&(b.t - p.t).abs()));
            let Some(g) = best else { continue };
            let d = p.position - g.position;
            for a in 0..3 {
                sq[a].push(d[a] * d[a]);
            }
            euclid.push(d.x * d.x + d.y * d.y + d.z * d.z);
        }
        if euclid.is_empty() {
            continue;
        }
        by_horizon.push(HorizonMetrics {
            horizon: h,
            axis: [rms(&sq[0]), rms(&sq[1]), rms(&sq[2])],
            euclidean: rms(&euclid),
            count: euclid.len(),
        });
        for a in 0..3 {
            all[a].extend_from_slice(&sq[a]);
        }
    }
    if all[0].is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(Metrics {
        axis: [rms(&all[0]), rms(&all[1]), rms(&all[2])],
        count: all[0].len(),
        horizons: by_horizon,
    })
}

pub fn write_predictions_csv<W: Write>(w: W, preds: &[Prediction]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["method", "t", "horizon", "x", "y", "z"])?;
    for p in preds {
        wr.serialize((&p.method, p.t, p.horizon, p.position.x, p.position.y, p.position.z))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_predictions_csv<R: Read>(r: R) -> Result<Vec<Prediction>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(&mut rd, &["method", "t", "horizon", "x", "y", "z"])?;
    let mut out = Vec::new();
    for row in rd.deserialize::<(String, f64, f64, f64, f64, f64)>() {
        let (method, t, horizon, x, y, z) = row?;
        out.push(Prediction {
            method,
            t,
            horizon,
            position: Point3::new(x, y, z),
        });
    }
    Ok(out)
}

pub fn write_metrics_csv<W: Write>(w: W, metrics: &Metrics) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["metric", "horizon", "value"])?;
    for row in metrics.rows() {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(offset: Point3) -> Vec<Prediction> {
        let mut out = Vec::new();
        for k in 0..10 {
            for h in [0.0, 1.0, 3.0, 5.0] {
                let t = k as f64 * 0.1;
                out.push(Prediction {
                    method: "m".into(),
                    t,
                    horizon: h,
                    position: Point3::new(t, 2.0 * t + h, -h) + offset,
                });
            }
        }
        out
    }

    #[test]
    fn identical_series_score_zero() {
        let s = series(Point3::zeros());
        let m = rmse_eval(&s, &s, &[0.0, 1.0, 3.0, 5.0], 1e-6).unwrap();
        assert_eq!(m.axis, [0.0; 3]);
        assert_eq!(m.horizons.len(), 4);
        assert!(m.horizons.iter().all(|h| h.euclidean == 0.0 && h.count == 10));
    }

    #[test]
    fn constant_offset() {
        let m = rmse_eval(
            &series(Point3::new(3.0, 4.0, 0.0)),
            &series(Point3::zeros()),
            &[1.0],
            1e-6,
        )
        .unwrap();
        assert!((m.axis[0] - 3.0).abs() < 1e-12);
        assert!((m.axis[1] - 4.0).abs() < 1e-12);
        assert_eq!(m.axis[2], 0.0);
        assert!((m.horizon(1.0).unwrap().euclidean - 5.0).abs() < 1e-12);
    }

    #[test]
    fn no_overlap() {
        let a = series(Point3::zeros());
        let mut b = a.clone();
        b.iter_mut().for_each(|p| p.t += 100.0);
        assert!(matches!(rmse_eval(&a, &b, &[1.0], 1e-6), Err(Error::NoOverlap)));
    }

    #[test]
    fn metric_names() {
        let s = series(Point3::zeros());
        let m = rmse_eval(&s, &s, &[0.0, 1.0, 3.0, 5.0], 1e-6).unwrap();
        let names: Vec<String> = m.rows().into_iter().map(|r| r.0).collect();
        for want in ["D_x", "D_y", "D_z", "E_0s", "E_1s", "E_3s", "E_5s"] {
            assert!(names.iter().any(|n| n == want), "{want}");
        }
    }

    #[test]
    fn predictions_csv_round_trip() {
        let s = series(Point3::new(0.1, 0.2, 0.3));
        let mut buf = Vec::new();
        write_predictions_csv(&mut buf, &s).unwrap();
        assert_eq!(read_predictions_csv(&buf[..]).unwrap(), s);
    }
}
