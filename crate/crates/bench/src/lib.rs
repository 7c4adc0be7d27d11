//! Fixtures shared by the benchmarks.

use calibflow::dataio::{generate_scene, sample_perturbation, PerturbationRange, Scene, SceneSpec};
use calibflow::geometry::project;
use calibflow::pnp::Correspondence;
use calibflow::{CorrespondenceSet, RigidTransform};
use nalgebra::Vector2;

pub fn scene(points: usize, seed: u64) -> Scene {
    generate_scene(&SceneSpec {
        points,
        seed,
        ..SceneSpec::default()
    })
    .expect("valid scene spec")
}

/// Initial extrinsic drawn from the coarsest training range.
pub fn perturbed(scene: &Scene, seed: u64) -> RigidTransform {
    sample_perturbation(&PerturbationRange::new(1.5, 20.0), seed)
        .expect("valid range")
        .compose(&scene.t_gt)
}

/// Exact 2D-3D pairs of the first `n` visible points; every `outlier_every`-th
/// pixel is shifted by 40 px.
pub fn correspondences(scene: &Scene, n: usize, outlier_every: Option<usize>) -> CorrespondenceSet {
    let projected = project(&scene.cloud, &scene.intrinsics, &scene.t_gt).expect("non-empty cloud");
    let pairs = projected
        .valid()
        .take(n)
        .enumerate()
        .map(|(k, p)| {
            let shift = match outlier_every {
                Some(m) if k % m == 0 => Vector2::new(40.0, -40.0),
                _ => Vector2::zeros(),
            };
            Correspondence {
                pixel: p.pixel + shift,
                point: scene.cloud.points[p.source_index],
                source_index: p.source_index,
            }
        })
        .collect();
    CorrespondenceSet::new(scene.intrinsics, pairs)
}
