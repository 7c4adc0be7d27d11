//! Rigid-body algebra, camera model and point-cloud projection.

mod angles;
mod camera;
mod projection;
mod quaternion;
mod transform;

pub use angles::{atan2_paper, euler_to_rotation, rotation_to_euler, EulerAngles};
pub use camera::CameraIntrinsics;
pub use projection::{
    pixel_bin, project, render_depth, CropWindow, DepthImage, PointCloud, ProjectedCloud,
    ProjectedPoint, ZBuffer,
};
pub use quaternion::Quaternion;
pub use transform::{nearest_rotation, orthonormality_error, RigidTransform, ORTHONORMAL_TOLERANCE};
