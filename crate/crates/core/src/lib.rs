//! Temporal-KNN trajectory extraction from asynchronous point clouds,
//! cross-modal alignment against image feature motion through a unified
//! fisheye camera, and multi-horizon position forecasting, with a synthetic
//! scene generator that provides ground truth for every stage.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod camera;
pub mod error;
pub mod flow;
pub mod forecast;
pub mod io;
pub mod knn;
pub mod par;
pub mod projection;
pub mod rng;
pub mod sim;
pub mod tknn;
pub mod types;

pub use camera::{CameraModel, Extrinsic};
pub use error::{Error, Result};
pub use par::Exec;
pub use types::{ImageMotionState2, KinematicState3, Point3, PointCloudFrame, Trajectory, TrajectorySample};
