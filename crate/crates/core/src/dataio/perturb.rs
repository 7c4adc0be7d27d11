use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

/// Per-axis bounds of a random extrinsic offset `ΔT`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationRange {
    pub max_translation: f64,
    pub max_rotation_deg: f64,
}

impl PerturbationRange {
    /// The five training ranges, coarse to fine.
    pub const STAGES: [PerturbationRange; 5] = [
        PerturbationRange::new(1.5, 20.0),
        PerturbationRange::new(1.0, 10.0),
        PerturbationRange::new(0.5, 5.0),
        PerturbationRange::new(0.2, 2.0),
        PerturbationRange::new(0.1, 1.0),
    ];

    pub const fn new(max_translation: f64, max_rotation_deg: f64) -> Self {
        Self {
            max_translation,
            max_rotation_deg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.max_translation) || !ok(self.max_rotation_deg) {
            return Err(Error::InvalidArgument(format!(
                "perturbation range must be finite and non-negative, got {} m / {} deg",
                self.max_translation, self.max_rotation_deg
            )));
        }
        Ok(())
    }
}

fn symmetric(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    if bound == 0.0 {
        0.0
    } else {
        rng.random_range(-bound..=bound)
    }
}

/// Draws `ΔT` with translation components uniform in `[-x, x]` and roll, pitch
/// and yaw uniform in `[-y, y]`, composed as `Rz·Ry·Rx`.
pub fn sample_perturbation(range: &PerturbationRange, seed: u64) -> Result<RigidTransform> {
    range.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = range.max_translation;
    let translation = Vector3::new(symmetric(&mut rng, t), symmetric(&mut rng, t), symmetric(&mut rng, t));
    let r = range.max_rotation_deg.to_radians();
    let (roll, pitch, yaw) = (symmetric(&mut rng, r), symmetric(&mut rng, r), symmetric(&mut rng, r));
    Ok(RigidTransform::from_euler_zyx(roll, pitch, yaw).with_translation(translation))
}
