//! File formats for point clouds, temporal vectors and trajectories.
//!
//! Point-cloud frames have no explicit delimiter in either format: a frame is
//! a run of consecutive rows sharing `(t, sensor_id)`, so empty frames are not
//! representable and vanish on a round trip.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tknn::{FramePoint, TemporalVector};
use crate::types::{Point3, PointCloudFrame, Trajectory, TrajectorySample};

pub const CLOUD_MAGIC: &[u8; 8] = b"ATPC0001";

/// Writes through a sibling temporary file and renames it into place.
pub fn atomic_write<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        Ok(())
    })();
    match result {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

#[derive(Debug, Serialize, Deserialize)]
struct CloudRow {
    t: f64,
    sensor_id: u32,
    x: f64,
    y: f64,
    z: f64,
}

fn group_rows(rows: impl IntoIterator<Item = Result<CloudRow>>) -> Result<Vec<PointCloudFrame>> {
    let mut frames: Vec<PointCloudFrame> = Vec::new();
    for row in rows {
        let r = row?;
        let p = Point3::new(r.x, r.y, r.z);
        match frames.last_mut() {
            Some(f) if f.timestamp == r.t && f.sensor_id == r.sensor_id => f.points.push(p),
            _ => frames.push(PointCloudFrame::new(r.t, r.sensor_id, vec![p])?),
        }
    }
    for f in &frames {
        if let Some(p) = f.points.iter().find(|p| !crate::types::is_finite3(p)) {
            return Err(Error::InvalidInput(format!(
                "non-finite point {p:?} at t={}",
                f.timestamp
            )));
        }
    }
    Ok(frames)
}

pub fn write_clouds_csv<W: Write>(w: W, frames: &[PointCloudFrame]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "sensor_id", "x", "y", "z"])?;
    for f in frames {
        for p in &f.points {
            wr.serialize((f.timestamp, f.sensor_id, p.x, p.y, p.z))?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn read_clouds_csv<R: Read>(r: R) -> Result<Vec<PointCloudFrame>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(&mut rd, &["t", "sensor_id", "x", "y", "z"])?;
    group_rows(rd.deserialize::<CloudRow>().map(|r| r.map_err(Error::from)))
}

pub fn write_clouds_bin<W: Write>(mut w: W, frames: &[PointCloudFrame]) -> Result<()> {
    w.write_all(CLOUD_MAGIC)?;
    for f in frames {
        for p in &f.points {
            for v in [f.timestamp, f.sensor_id as f64, p.x, p.y, p.z] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_clouds_bin<R: Read>(mut r: R) -> Result<Vec<PointCloudFrame>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..8] != CLOUD_MAGIC {
        return Err(Error::Parse {
            line: 0,
            message: "missing ATPC0001 magic".into(),
        });
    }
    let body = &bytes[8..];
    if body.len() % 40 != 0 {
        return Err(Error::Parse {
            line: 0,
            message: format!("truncated record: {} trailing bytes", body.len() % 40),
        });
    }
    let rows = body.chunks_exact(40).enumerate().map(|(i, rec)| {
        let f = |k: usize| f64::from_le_bytes(rec[8 * k..8 * k + 8].try_into().expect("8-byte slice"));
        let sid = f(1);
        if !(sid >= 0.0 && sid <= u32::MAX as f64 && sid.fract() == 0.0) {
            return Err(Error::Parse {
                line: i as u64 + 1,
                message: format!("sensor id {sid} is not a small integer"),
            });
        }
        Ok(CloudRow {
            t: f(0),
            sensor_id: sid as u32,
            x: f(2),
            y: f(3),
            z: f(4),
        })
    });
    group_rows(rows)
}

/// Dispatches on the magic bytes: binary if present, CSV otherwise.
pub fn load_clouds(path: &Path) -> Result<Vec<PointCloudFrame>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(CLOUD_MAGIC) {
        read_clouds_bin(&bytes[..])
    } else {
        read_clouds_csv(&bytes[..])
    }
}

/// Splits frames by sensor id, each stream in timestamp order.
pub fn split_streams(frames: &[PointCloudFrame]) -> Vec<(u32, Vec<PointCloudFrame>)> {
    let mut ids: Vec<u32> = frames.iter().map(|f| f.sensor_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let mut s: Vec<PointCloudFrame> = frames.iter().filter(|f| f.sensor_id == id).cloned().collect();
            s.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
            (id, s)
        })
        .collect()
}

pub(crate) fn check_header<R: Read>(rd: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let h = rd.headers()?;
    if h.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header {}, got {}",
                expected.join(","),
                h.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorRow {
    t0: f64,
    frame0: usize,
    index0: usize,
    x0: f64,
    y0: f64,
    z0: f64,
    t1: f64,
    frame1: usize,
    index1: usize,
    x1: f64,
    y1: f64,
    z1: f64,
    gradient: f64,
}

pub fn write_vectors_csv<W: Write>(w: W, vectors: &[TemporalVector]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    if vectors.is_empty() {
        wr.write_record([
            "t0", "frame0", "index0", "x0", "y0", "z0", "t1", "frame1", "index1", "x1", "y1", "z1", "gradient",
        ])?;
    }
    for v in vectors {
        let (o, t) = (&v.origin, &v.target);
        wr.serialize(VectorRow {
            t0: o.timestamp,
            frame0: o.frame,
            index0: o.index,
            x0: o.position.x,
            y0: o.position.y,
            z0: o.position.z,
            t1: t.timestamp,
            frame1: t.frame,
            index1: t.index,
            x1: t.position.x,
            y1: t.position.y,
            z1: t.position.z,
            gradient: v.gradient,
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_vectors_csv<R: Read>(r: R) -> Result<Vec<TemporalVector>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(
        &mut rd,
        &[
            "t0", "frame0", "index0", "x0", "y0", "z0", "t1", "frame1", "index1", "x1", "y1", "z1", "gradient",
        ],
    )?;
    let mut out = Vec::new();
    for row in rd.deserialize::<VectorRow>() {
        let r = row?;
        let origin = FramePoint {
            position: Point3::new(r.x0, r.y0, r.z0),
            timestamp: r.t0,
            frame: r.frame0,
            index: r.index0,
        };
        let target = FramePoint {
            position: Point3::new(r.x1, r.y1, r.z1),
            timestamp: r.t1,
            frame: r.frame1,
            index: r.index1,
        };
        out.push(TemporalVector::new(origin, target, r.gradient));
    }
    Ok(out)
}

pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "x", "y", "z"])?;
    for s in traj.samples() {
        wr.serialize((s.t, s.position.x, s.position.y, s.position.z))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: Read>(r: R) -> Result<Trajectory> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(&mut rd, &["t", "x", "y", "z"])?;
    let mut samples = Vec::new();
    for row in rd.deserialize::<(f64, f64, f64, f64)>() {
        let (t, x, y, z) = row?;
        samples.push(TrajectorySample::new(t, Point3::new(x, y, z)));
    }
    Trajectory::new(samples)
}
