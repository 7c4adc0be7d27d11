//! Iterative extrinsic refinement: per stage, project the cloud under the
//! current estimate, predict calibration flow in a crop around the projected
//! points, rectify, and re-solve the pose with EPnP inside RANSAC.

mod median;
mod predictor;

pub use median::{sequence_median, SequenceMedian, DEFAULT_OUTLIER_THRESHOLD};
pub use predictor::{
    FilePredictor, FlowPredictor, OraclePredictor, OraclePredictorConfig, PredictorInput,
};

use nalgebra::Vector2;

use crate::dataio::PerturbationRange;
use crate::error::{Error, Result};
use crate::flow::rectify_in_window;
use crate::geometry::{
    project, render_depth, CameraIntrinsics, CropWindow, PointCloud, ProjectedCloud,
    RigidTransform,
};
use crate::pnp::{ransac_pnp, RansacConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct StageDescriptor {
    pub label: String,
    /// Error range the stage's model was trained for. Oracle predictors ignore it.
    pub range: PerturbationRange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementConfig {
    pub stages: Vec<StageDescriptor>,
    /// A stage proceeds only with strictly more rectified correspondences.
    pub n_valid: usize,
    pub crop_width: usize,
    pub crop_height: usize,
    pub ransac: RansacConfig,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        let stages = PerturbationRange::STAGES
            .iter()
            .map(|r| StageDescriptor {
                label: format!("±{} m / ±{}°", r.max_translation, r.max_rotation_deg),
                range: *r,
            })
            .collect();
        Self {
            stages,
            n_valid: 10,
            crop_width: 960,
            crop_height: 320,
            ransac: RansacConfig::default(),
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidArgument("at least one stage is required".into()));
        }
        if self.n_valid < 4 {
            return Err(Error::InvalidArgument("n_valid must be at least 4".into()));
        }
        if self.crop_width == 0 || self.crop_height == 0 {
            return Err(Error::InvalidArgument("crop must be non-empty".into()));
        }
        self.ransac.validate()
    }
}

/// Offset of a `crop`-long window centred at `center` inside `[0, size)`.
/// Half-pixel offsets round down.
fn window_start(center: f64, size: usize, crop: usize) -> usize {
    let max = (size - crop) as f64;
    (center - crop as f64 / 2.0 - 0.5).ceil().clamp(0.0, max) as usize
}

/// Crop window centred on the mean pixel of the valid projections (the image
/// centre when there are none) and shifted to lie inside the image.
pub fn adaptive_crop(
    projected: &ProjectedCloud,
    image: (usize, usize),
    crop: (usize, usize),
) -> Result<CropWindow> {
    let (w, h) = image;
    let (cw, ch) = crop;
    if cw > w || ch > h || cw == 0 || ch == 0 {
        return Err(Error::InvalidArgument(format!(
            "crop {cw}x{ch} does not fit image {w}x{h}"
        )));
    }
    let c = projected
        .valid_centroid()
        .unwrap_or_else(|| Vector2::new(w as f64 / 2.0, h as f64 / 2.0));
    Ok(CropWindow {
        x0: window_start(c.x, w, cw),
        y0: window_start(c.y, h, ch),
        width: cw,
        height: ch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Refined,
    /// Too few rectified correspondences; the input pose was passed through.
    Insufficient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageResult {
    pub pose: RigidTransform,
    pub status: StageStatus,
    pub n_rect: usize,
    pub n_inliers: usize,
    pub window: CropWindow,
}

/// One refinement step from `t_current` with the given predictor.
pub fn refine_once(
    cloud: &PointCloud,
    intrinsics: &CameraIntrinsics,
    t_current: &RigidTransform,
    predictor: &dyn FlowPredictor,
    stage: usize,
    frame_id: &str,
    cfg: &RefinementConfig,
) -> Result<StageResult> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    let projected = project(cloud, intrinsics, t_current)?;
    let (w, h) = (intrinsics.width, intrinsics.height);
    let window = adaptive_crop(
        &projected,
        (w, h),
        (cfg.crop_width.min(w), cfg.crop_height.min(h)),
    )?;
    let depth = render_depth(&projected).crop(&window);
    let input = PredictorInput {
        frame_id,
        stage,
        image: None,
        cloud,
        intrinsics,
        t_current,
        projected: &projected,
        depth: &depth,
        window,
    };
    let flow = predictor.predict(&input)?;
    let set = rectify_in_window(cloud, intrinsics, &projected, &flow, &window)?;
    let n_rect = set.len();
    if n_rect <= cfg.n_valid {
        log::debug!("stage {stage}: {n_rect} rectified points, passing pose through");
        return Ok(StageResult {
            pose: *t_current,
            status: StageStatus::Insufficient,
            n_rect,
            n_inliers: 0,
            window,
        });
    }
    let result = ransac_pnp(&set, &cfg.ransac)?;
    log::debug!(
        "stage {stage}: {n_rect} rectified, {} inliers, mean error {:.3} px",
        result.inliers.len(),
        result.mean_inlier_error
    );
    Ok(StageResult {
        pose: result.pose,
        status: StageStatus::Refined,
        n_rect,
        n_inliers: result.inliers.len(),
        window,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport {
    pub pose: RigidTransform,
    /// Results of the stages that ran, in order.
    pub stages: Vec<StageResult>,
    /// Number of stages that produced a new pose before any break.
    pub completed: usize,
}

/// Runs every stage in order, feeding each output into the next stage.
///
/// A stage with too few correspondences, or whose RANSAC finds no consensus,
/// ends the loop and the last successful pose is returned. If the first
/// stage already fails, [`Error::RefinementFailed`] is returned.
pub fn refine_full(
    cloud: &PointCloud,
    intrinsics: &CameraIntrinsics,
    t_init: &RigidTransform,
    predictors: &[&dyn FlowPredictor],
    frame_id: &str,
    cfg: &RefinementConfig,
) -> Result<RefinementReport> {
    cfg.validate()?;
    if predictors.len() != cfg.stages.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictors for {} stages",
            predictors.len(),
            cfg.stages.len()
        )));
    }
    let mut pose = *t_init;
    let mut stages = Vec::with_capacity(predictors.len());
    for (k, predictor) in predictors.iter().enumerate() {
        let stage = k + 1;
        let outcome = match refine_once(cloud, intrinsics, &pose, *predictor, stage, frame_id, cfg) {
            Ok(r) => r,
            Err(Error::RansacFailed | Error::Degenerate) => {
                log::warn!("stage {stage}: no consensus pose");
                break;
            }
            Err(e) => return Err(e),
        };
        let refined = outcome.status == StageStatus::Refined;
        if refined {
            pose = outcome.pose;
        }
        stages.push(outcome);
        if !refined {
            break;
        }
    }
    let completed = stages
        .iter()
        .take_while(|s| s.status == StageStatus::Refined)
        .count();
    if completed == 0 {
        return Err(Error::RefinementFailed);
    }
    Ok(RefinementReport {
        pose,
        stages,
        completed,
    })
}

/// Convenience wrapper running the same predictor at every stage.
pub fn refine_with(
    cloud: &PointCloud,
    intrinsics: &CameraIntrinsics,
    t_init: &RigidTransform,
    predictor: &dyn FlowPredictor,
    frame_id: &str,
    cfg: &RefinementConfig,
) -> Result<RefinementReport> {
    let predictors = vec![predictor; cfg.stages.len()];
    refine_full(cloud, intrinsics, t_init, &predictors, frame_id, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_scene, sample_perturbation, SceneSpec};
    use crate::flow::FlowField;
    use crate::geometry::{pixel_bin, ProjectedPoint};
    use crate::metrics::{rotation_error, translation_error, AngleConvention};

    fn cloud_at(pixels: &[(f64, f64)], w: usize, h: usize) -> ProjectedCloud {
        ProjectedCloud {
            width: w,
            height: h,
            points: pixels
                .iter()
                .enumerate()
                .map(|(i, &(u, v))| ProjectedPoint {
                    pixel: Vector2::new(u, v),
                    depth: 10.0,
                    valid: true,
                    source_index: i,
                })
                .collect(),
        }
    }

    #[test]
    fn crop_centered_and_clamped() {
        let p = cloud_at(&[(621.0, 187.5)], 1242, 375);
        let win = adaptive_crop(&p, (1242, 375), (960, 320)).unwrap();
        assert_eq!((win.x0, win.y0), (141, 27));
        let left = cloud_at(&[(10.0, 187.5)], 1242, 375);
        assert_eq!(adaptive_crop(&left, (1242, 375), (960, 320)).unwrap().x0, 0);
        let right = cloud_at(&[(1240.0, 370.0)], 1242, 375);
        let win = adaptive_crop(&right, (1242, 375), (960, 320)).unwrap();
        assert_eq!((win.x0, win.y0), (282, 55));
        let none = ProjectedCloud { width: 1242, height: 375, points: vec![] };
        let win = adaptive_crop(&none, (1242, 375), (960, 320)).unwrap();
        assert_eq!((win.x0, win.y0), (141, 27));
        assert!(adaptive_crop(&none, (900, 375), (960, 320)).is_err());
    }

    #[test]
    fn crop_rounding_matches_binning() {
        for c in [0.0, 0.5, 1.5, 2.5, 100.25, 100.75] {
            assert_eq!(window_start(c + 480.0, 5000, 960), pixel_bin(c, 5000));
        }
    }

    fn scene() -> crate::dataio::Scene {
        generate_scene(&SceneSpec { points: 2000, seed: 21, ..SceneSpec::default() }).unwrap()
    }

    #[test]
    fn exact_oracle_single_stage_recovers() {
        let s = scene();
        let delta = sample_perturbation(&PerturbationRange::new(1.5, 20.0), 4).unwrap();
        let t_init = delta.compose(&s.t_gt);
        let oracle = OraclePredictor::exact(s.t_gt);
        let cfg = RefinementConfig::default();
        let r = refine_once(&s.cloud, &s.intrinsics, &t_init, &oracle, 1, "f", &cfg).unwrap();
        assert_eq!(r.status, StageStatus::Refined);
        assert!(translation_error(&r.pose, &s.t_gt).e_t < 1e-4);
        assert!(rotation_error(&r.pose, &s.t_gt, AngleConvention::Geodesic) < 0.01);
    }

    #[test]
    fn ground_truth_is_a_fixed_point() {
        let s = scene();
        let oracle = OraclePredictor::exact(s.t_gt);
        let r = refine_once(&s.cloud, &s.intrinsics, &s.t_gt, &oracle, 1, "f", &RefinementConfig::default()).unwrap();
        assert!(translation_error(&r.pose, &s.t_gt).e_t < 1e-9);
    }

    #[test]
    fn too_few_points_pass_through() {
        let s = scene();
        let cloud = PointCloud::new(s.cloud.points[..3].to_vec());
        let t_init = RigidTransform::from_translation(nalgebra::Vector3::new(0.1, 0.0, 0.0)).compose(&s.t_gt);
        let oracle = OraclePredictor::exact(s.t_gt);
        let cfg = RefinementConfig::default();
        let r = refine_once(&cloud, &s.intrinsics, &t_init, &oracle, 1, "f", &cfg).unwrap();
        assert_eq!(r.status, StageStatus::Insufficient);
        assert_eq!(r.pose, t_init);
        assert!(matches!(
            refine_full(&cloud, &s.intrinsics, &t_init, &vec![&oracle as &dyn FlowPredictor; 5], "f", &cfg),
            Err(Error::RefinementFailed)
        ));
    }

    /// Exact until the given stage, then predicts nothing.
    struct BreakAt(usize, OraclePredictor);

    impl FlowPredictor for BreakAt {
        fn predict(&self, input: &PredictorInput<'_>) -> Result<FlowField> {
            if input.stage >= self.0 {
                Ok(FlowField::zeros(input.window.width, input.window.height))
            } else {
                self.1.predict(input)
            }
        }
    }

    #[test]
    fn break_returns_previous_stage() {
        let s = scene();
        let delta = sample_perturbation(&PerturbationRange::new(1.0, 10.0), 8).unwrap();
        let t_init = delta.compose(&s.t_gt);
        let p = BreakAt(3, OraclePredictor::exact(s.t_gt));
        let report = refine_with(&s.cloud, &s.intrinsics, &t_init, &p, "f", &RefinementConfig::default()).unwrap();
        assert_eq!(report.completed, 2);
        assert_eq!(report.stages.len(), 3);
        assert_eq!(report.pose, report.stages[1].pose);
    }

    #[test]
    fn monotone_under_exact_oracle() {
        let s = scene();
        for seed in 0..5 {
            let delta = sample_perturbation(&PerturbationRange::new(1.5, 20.0), seed).unwrap();
            let t_init = delta.compose(&s.t_gt);
            let oracle = OraclePredictor::exact(s.t_gt);
            let report = refine_with(&s.cloud, &s.intrinsics, &t_init, &oracle, "f", &RefinementConfig::default()).unwrap();
            assert_eq!(report.completed, 5);
            let mut prev = translation_error(&t_init, &s.t_gt).e_t;
            for st in &report.stages {
                let e = translation_error(&st.pose, &s.t_gt).e_t;
                assert!(e <= prev + 1e-9, "seed {seed}: {e} > {prev}");
                prev = e;
            }
        }
    }

    #[test]
    fn noisy_oracle_is_deterministic() {
        let s = scene();
        let t_init = sample_perturbation(&PerturbationRange::new(0.5, 5.0), 1).unwrap().compose(&s.t_gt);
        let cfg = OraclePredictorConfig {
            noise_sigma_px: 0.5,
            outlier_fraction: 0.1,
            seed: 3,
            ..OraclePredictorConfig::exact(s.t_gt)
        };
        let p = OraclePredictor::new(cfg).unwrap();
        let a = refine_with(&s.cloud, &s.intrinsics, &t_init, &p, "f", &RefinementConfig::default()).unwrap();
        let b = refine_with(&s.cloud, &s.intrinsics, &t_init, &p, "f", &RefinementConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predictor_count_must_match() {
        let s = scene();
        let oracle = OraclePredictor::exact(s.t_gt);
        let err = refine_full(&s.cloud, &s.intrinsics, &s.t_gt, &[&oracle], "f", &RefinementConfig::default());
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = RefinementConfig::default();
        cfg.n_valid = 3;
        assert!(cfg.validate().is_err());
        cfg = RefinementConfig { stages: vec![], ..RefinementConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
