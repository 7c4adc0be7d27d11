//! File formats and synthetic data: KITTI-style velodyne scans, calibration
//! and pose text files, perturbation sampling and synthetic scene archives.

mod calib;
mod perturb;
mod pose;
mod scene;
mod velodyne;

pub use calib::{load_calib, parse_calib, save_calib, Calibration};
pub use perturb::{sample_perturbation, PerturbationRange};
pub use pose::{format_pose, parse_pose, parse_pose_list, read_pose, read_pose_list, write_pose, POSE_TOLERANCE};
pub use scene::{
    derive_instance_set_2d, project_instance_centroids, generate_scene, read_scene, write_scene, Scene,
    SceneSpec,
};
pub use velodyne::{decode_velodyne, encode_velodyne, load_velodyne_bin, save_velodyne_bin};
