//! Targetless LiDAR-camera extrinsic calibration by calibration flow.
//!
//! The pipeline projects a LiDAR scan under an initial extrinsic, obtains a
//! per-pixel flow towards where the points should land, turns the shifted
//! pixels into 2D-3D correspondences and solves the pose with EPnP inside
//! RANSAC, repeated over a coarse-to-fine schedule. A semantic initializer
//! provides the starting extrinsic from matched instance centroids.

pub mod dataio;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod metrics;
pub mod pnp;
pub mod refine;
pub mod semantic;

pub use error::{Error, Result};
pub use flow::FlowField;
pub use geometry::{
    CameraIntrinsics, CropWindow, DepthImage, PointCloud, ProjectedCloud, Quaternion,
    RigidTransform,
};
pub use metrics::{AngleConvention, MetricsReport};
pub use pnp::{Correspondence, CorrespondenceSet, RansacConfig};
pub use refine::{FlowPredictor, RefinementConfig};
pub use semantic::{Category, InstanceSet2D, InstanceSet3D};
