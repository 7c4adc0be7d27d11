//! EPnP: every 3D point is written as a barycentric combination of a few
//! control points, whose camera-frame coordinates span the (small) null space
//! of a linear system. The null-space weights ("betas") are fixed by requiring
//! the control points to keep their world distances.

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};

use super::horn::absolute_orientation;
use super::{CorrespondenceSet, PnpSolution};
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

/// `s_k / s_1` below which the cloud is treated as lying on a line.
const COLLINEAR_RATIO: f64 = 1e-8;
/// `s_3 / s_1` below which the cloud is treated as planar (three control points).
const PLANAR_RATIO: f64 = 1e-6;
const GAUSS_NEWTON_ITERATIONS: usize = 10;
const GAUSS_NEWTON_GRADIENT_TOL: f64 = 1e-12;

struct ControlFrame {
    /// World control points; the first is the centroid.
    world: Vec<Vector3<f64>>,
    /// Barycentric weights per correspondence, one per control point.
    alphas: Vec<Vec<f64>>,
}

fn control_frame(set: &CorrespondenceSet) -> Result<ControlFrame> {
    let n = set.len() as f64;
    let centroid = set.pairs.iter().map(|p| p.point).sum::<Vector3<f64>>() / n;
    let mut cov = nalgebra::Matrix3::zeros();
    for p in &set.pairs {
        let d = p.point - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let spreads: Vec<f64> = order
        .iter()
        .map(|&k| (eig.eigenvalues[k].max(0.0) / n).sqrt())
        .collect();
    if !(spreads[0] > 0.0) || spreads[1] < COLLINEAR_RATIO * spreads[0] {
        return Err(Error::Degenerate);
    }
    let axes = if spreads[2] < PLANAR_RATIO * spreads[0] { 2 } else { 3 };

    let directions: Vec<Vector3<f64>> = order[..axes]
        .iter()
        .map(|&k| eig.eigenvectors.column(k).into_owned())
        .collect();
    let mut world = vec![centroid];
    world.extend(
        directions
            .iter()
            .zip(&spreads)
            .map(|(dir, s)| centroid + dir * *s),
    );
    let alphas = set
        .pairs
        .iter()
        .map(|p| {
            let d = p.point - centroid;
            let mut a = vec![0.0; axes + 1];
            for k in 0..axes {
                a[k + 1] = directions[k].dot(&d) / spreads[k];
            }
            a[0] = 1.0 - a[1..].iter().sum::<f64>();
            a
        })
        .collect();
    Ok(ControlFrame { world, alphas })
}

/// Distance-constraint system over the null-space basis.
struct BetaProblem {
    /// `dv[pair][k]`: difference of the two control points of `pair` in kernel vector `k`.
    dv: Vec<Vec<Vector3<f64>>>,
    /// Squared world distance of each control-point pair.
    rho: Vec<f64>,
}

impl BetaProblem {
    fn new(world: &[Vector3<f64>], kernel: &[DVector<f64>]) -> Self {
        let nc = world.len();
        let mut dv = Vec::new();
        let mut rho = Vec::new();
        for a in 0..nc {
            for b in a + 1..nc {
                dv.push(
                    kernel
                        .iter()
                        .map(|v| {
                            Vector3::new(
                                v[3 * a] - v[3 * b],
                                v[3 * a + 1] - v[3 * b + 1],
                                v[3 * a + 2] - v[3 * b + 2],
                            )
                        })
                        .collect(),
                );
                rho.push((world[a] - world[b]).norm_squared());
            }
        }
        Self { dv, rho }
    }

    /// Coefficient of `β_k β_m` (k ≤ m) in the squared distance of `pair`.
    fn coeff(&self, pair: usize, k: usize, m: usize) -> f64 {
        let d = &self.dv[pair];
        if k == m {
            d[k].norm_squared()
        } else {
            2.0 * d[k].dot(&d[m])
        }
    }

    /// Least squares for the listed products `β_k β_m`.
    fn solve_linearized(&self, products: &[(usize, usize)]) -> Option<DVector<f64>> {
        let rows = self.rho.len();
        let l = DMatrix::from_fn(rows, products.len(), |r, c| {
            let (k, m) = products[c];
            self.coeff(r, k, m)
        });
        let rhs = DVector::from_column_slice(&self.rho);
        l.svd(true, true).solve(&rhs, 1e-14).ok()
    }

    /// Approximation from `β_1 β_k` for all `k` (the full kernel).
    fn approx_first_row(&self, dims: usize) -> Option<Vec<f64>> {
        let products: Vec<_> = (0..dims).map(|k| (0, k)).collect();
        let b = self.solve_linearized(&products)?;
        let (b11, sign) = if b[0] < 0.0 { (-b[0], -1.0) } else { (b[0], 1.0) };
        let beta1 = b11.sqrt();
        if beta1 == 0.0 {
            return None;
        }
        Some((0..dims).map(|k| if k == 0 { beta1 } else { sign * b[k] / beta1 }).collect())
    }

    /// Approximation from `β_11, β_12, β_22`.
    fn approx_two(&self, dims: usize) -> Option<Vec<f64>> {
        let b = self.solve_linearized(&[(0, 0), (0, 1), (1, 1)])?;
        let (mut beta1, beta2) = if b[0] < 0.0 {
            ((-b[0]).sqrt(), if b[2] < 0.0 { (-b[2]).sqrt() } else { 0.0 })
        } else {
            (b[0].sqrt(), if b[2] > 0.0 { b[2].sqrt() } else { 0.0 })
        };
        if b[1] < 0.0 {
            beta1 = -beta1;
        }
        let mut out = vec![0.0; dims];
        out[0] = beta1;
        out[1] = beta2;
        Some(out)
    }

    /// Approximation from `β_11, β_12, β_22, β_13, β_23`.
    fn approx_three(&self, dims: usize) -> Option<Vec<f64>> {
        let b = self.solve_linearized(&[(0, 0), (0, 1), (1, 1), (0, 2), (1, 2)])?;
        let (mut beta1, beta2) = if b[0] < 0.0 {
            ((-b[0]).sqrt(), if b[2] < 0.0 { (-b[2]).sqrt() } else { 0.0 })
        } else {
            (b[0].sqrt(), if b[2] > 0.0 { b[2].sqrt() } else { 0.0 })
        };
        if b[1] < 0.0 {
            beta1 = -beta1;
        }
        if beta1 == 0.0 {
            return None;
        }
        let mut out = vec![0.0; dims];
        out[0] = beta1;
        out[1] = beta2;
        out[2] = b[3] / beta1;
        Some(out)
    }

    fn residuals_and_jacobian(&self, betas: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let rows = self.rho.len();
        let mut r = DVector::zeros(rows);
        let mut j = DMatrix::zeros(rows, betas.len());
        for p in 0..rows {
            let w: Vector3<f64> = self.dv[p]
                .iter()
                .zip(betas)
                .map(|(d, b)| d * *b)
                .sum();
            r[p] = w.norm_squared() - self.rho[p];
            for k in 0..betas.len() {
                j[(p, k)] = 2.0 * w.dot(&self.dv[p][k]);
            }
        }
        (r, j)
    }

    fn gauss_newton(&self, mut betas: Vec<f64>) -> Vec<f64> {
        for _ in 0..GAUSS_NEWTON_ITERATIONS {
            let (r, j) = self.residuals_and_jacobian(&betas);
            if (j.transpose() * &r).norm() < GAUSS_NEWTON_GRADIENT_TOL {
                break;
            }
            let Ok(step) = j.clone().svd(true, true).solve(&(-r), 1e-14) else {
                break;
            };
            for (b, s) in betas.iter_mut().zip(step.iter()) {
                *b += s;
            }
        }
        betas
    }
}

fn pose_from_betas(
    set: &CorrespondenceSet,
    frame: &ControlFrame,
    kernel: &[DVector<f64>],
    betas: &[f64],
) -> Option<RigidTransform> {
    let nc = frame.world.len();
    let mut cam_ctrl = vec![Vector3::zeros(); nc];
    for (v, b) in kernel.iter().zip(betas) {
        for (j, c) in cam_ctrl.iter_mut().enumerate() {
            *c += Vector3::new(v[3 * j], v[3 * j + 1], v[3 * j + 2]) * *b;
        }
    }
    let mut cam: Vec<Vector3<f64>> = frame
        .alphas
        .iter()
        .map(|a| a.iter().zip(&cam_ctrl).map(|(w, c)| c * *w).sum())
        .collect();
    let behind = cam.iter().filter(|p| p.z < 0.0).count();
    if 2 * behind > cam.len() {
        cam.iter_mut().for_each(|p| *p = -*p);
    }
    let world: Vec<Vector3<f64>> = set.pairs.iter().map(|p| p.point).collect();
    absolute_orientation(&world, &cam)
}

/// Camera-from-world pose of at least four 2D-3D correspondences.
pub fn epnp(set: &CorrespondenceSet) -> Result<PnpSolution> {
    if set.len() < 4 {
        return Err(Error::TooFewCorrespondences {
            needed: 4,
            got: set.len(),
        });
    }
    if set
        .pairs
        .iter()
        .any(|p| !p.pixel.iter().chain(p.point.iter()).all(|v| v.is_finite()))
    {
        return Err(Error::InvalidArgument("non-finite correspondence".into()));
    }
    let frame = control_frame(set)?;
    let nc = frame.world.len();
    let dim = 3 * nc;

    // Accumulate MᵀM directly; each correspondence contributes two rows.
    let k = &set.intrinsics;
    let mut mtm = DMatrix::<f64>::zeros(dim, dim);
    let mut row_u = vec![0.0; dim];
    let mut row_v = vec![0.0; dim];
    for (pair, alpha) in set.pairs.iter().zip(&frame.alphas) {
        let n = k.normalize(&pair.pixel);
        for j in 0..nc {
            row_u[3 * j] = alpha[j];
            row_u[3 * j + 1] = 0.0;
            row_u[3 * j + 2] = -alpha[j] * n.x;
            row_v[3 * j] = 0.0;
            row_v[3 * j + 1] = alpha[j];
            row_v[3 * j + 2] = -alpha[j] * n.y;
        }
        for a in 0..dim {
            let (ua, va) = (row_u[a], row_v[a]);
            if ua == 0.0 && va == 0.0 {
                continue;
            }
            for b in a..dim {
                mtm[(a, b)] += ua * row_u[b] + va * row_v[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            mtm[(a, b)] = mtm[(b, a)];
        }
    }

    let eig = SymmetricEigen::new(mtm);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let kernel: Vec<DVector<f64>> = order[..nc]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();

    let problem = BetaProblem::new(&frame.world, &kernel);
    let mut starts = Vec::new();
    starts.extend(problem.approx_first_row(nc));
    starts.extend(problem.approx_two(nc));
    if nc == 4 {
        starts.extend(problem.approx_three(nc));
    }

    let mut best: Option<PnpSolution> = None;
    for start in starts {
        let betas = problem.gauss_newton(start);
        let Some(pose) = pose_from_betas(set, &frame, &kernel, &betas) else {
            continue;
        };
        let rms_px = set.rms_error(&pose);
        if !rms_px.is_finite() && best.is_some() {
            continue;
        }
        if best.map_or(true, |b| rms_px < b.rms_px || !b.rms_px.is_finite()) {
            best = Some(PnpSolution { pose, rms_px });
        }
    }
    best.ok_or(Error::Degenerate)
}
