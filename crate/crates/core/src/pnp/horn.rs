use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3};

use crate::geometry::{Quaternion, RigidTransform};

/// Closed-form absolute orientation (Horn's unit-quaternion method): the rigid
/// transform `T` minimizing `Σ ‖target_i − T·source_i‖²`.
///
/// Returns `None` for fewer than three pairs.
pub fn absolute_orientation(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
) -> Option<RigidTransform> {
    let n = source.len();
    if n < 3 || target.len() != n {
        return None;
    }
    let sc = source.iter().sum::<Vector3<f64>>() / n as f64;
    let tc = target.iter().sum::<Vector3<f64>>() / n as f64;
    let mut s = Matrix3::zeros();
    for (p, q) in source.iter().zip(target) {
        s += (p - sc) * (q - tc).transpose();
    }
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    #[rustfmt::skip]
    let nmat = Matrix4::new(
        sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(nmat);
    let best = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(best);
    let q = Quaternion::new(v[0], v[1], v[2], v[3]).normalized();
    let rotation = q.to_rotation();
    let translation = tc - rotation * sc;
    Some(RigidTransform::new(rotation, translation).unwrap_or_else(|_| {
        RigidTransform::new(crate::geometry::nearest_rotation(&rotation), translation)
            .expect("nearest rotation is orthonormal")
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_known_transform() {
        let t = RigidTransform::from_euler_zyx(0.4, -0.3, 2.0).with_translation(Vector3::new(1.0, 2.0, -3.0));
        let src: Vec<_> = [
            (0.0, 0.0, 0.0),
            (1.0, 0.2, -0.5),
            (-0.3, 2.0, 0.7),
            (0.5, -1.0, 3.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vector3::new(x, y, z))
        .collect();
        let dst: Vec<_> = src.iter().map(|p| t.transform_point(p)).collect();
        let est = absolute_orientation(&src, &dst).unwrap();
        assert!((est.rotation() - t.rotation()).amax() < 1e-12);
        assert!((est.translation() - t.translation()).amax() < 1e-12);
    }

    #[test]
    fn three_points_suffice() {
        let t = RigidTransform::from_euler_zyx(-1.0, 0.2, 0.1).with_translation(Vector3::new(0.0, 0.5, 8.0));
        let src = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)];
        let dst: Vec<_> = src.iter().map(|p| t.transform_point(p)).collect();
        let est = absolute_orientation(&src, &dst).unwrap();
        assert!((est.rotation() - t.rotation()).amax() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        assert!(absolute_orientation(&[Vector3::zeros(); 2], &[Vector3::zeros(); 2]).is_none());
    }
}
