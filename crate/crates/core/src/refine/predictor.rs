use std::path::PathBuf;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::flow::{flow_between, read_cfl, FlowField};
use crate::geometry::{
    project, CameraIntrinsics, CropWindow, DepthImage, PointCloud, ProjectedCloud, RigidTransform,
};

/// Everything a flow predictor may look at for one refinement stage.
#[derive(Debug, Clone, Copy)]
pub struct PredictorInput<'a> {
    pub frame_id: &'a str,
    /// 1-based stage number.
    pub stage: usize,
    /// Opaque handle to the camera image; geometric predictors ignore it.
    pub image: Option<&'a str>,
    pub cloud: &'a PointCloud,
    pub intrinsics: &'a CameraIntrinsics,
    pub t_current: &'a RigidTransform,
    /// Full-image projection under `t_current`.
    pub projected: &'a ProjectedCloud,
    /// Sparse depth inside `window`.
    pub depth: &'a DepthImage,
    pub window: CropWindow,
}

/// Produces calibration flow for the crop window, sized `window.width ×
/// window.height`.
pub trait FlowPredictor {
    fn predict(&self, input: &PredictorInput<'_>) -> Result<FlowField>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OraclePredictorConfig {
    pub t_gt: RigidTransform,
    pub noise_sigma_px: f64,
    /// Share of valid flow pixels replaced by a uniform displacement.
    pub outlier_fraction: f64,
    pub outlier_radius_px: f64,
    pub seed: u64,
}

impl OraclePredictorConfig {
    pub fn exact(t_gt: RigidTransform) -> Self {
        Self {
            t_gt,
            noise_sigma_px: 0.0,
            outlier_fraction: 0.0,
            outlier_radius_px: 50.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma_px >= 0.0 && self.noise_sigma_px.is_finite()) {
            return Err(Error::InvalidArgument("noise sigma must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidArgument("outlier fraction must lie in [0, 1)".into()));
        }
        if !(self.outlier_radius_px >= 0.0 && self.outlier_radius_px.is_finite()) {
            return Err(Error::InvalidArgument("outlier radius must be non-negative".into()));
        }
        Ok(())
    }
}

/// Stand-in for a trained network: returns the ground-truth flow towards a
/// known extrinsic, optionally corrupted by Gaussian noise and outliers.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    cfg: OraclePredictorConfig,
}

impl OraclePredictor {
    pub fn new(cfg: OraclePredictorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn exact(t_gt: RigidTransform) -> Self {
        Self {
            cfg: OraclePredictorConfig::exact(t_gt),
        }
    }

    pub fn config(&self) -> &OraclePredictorConfig {
        &self.cfg
    }
}

impl FlowPredictor for OraclePredictor {
    fn predict(&self, input: &PredictorInput<'_>) -> Result<FlowField> {
        let gt = project(input.cloud, input.intrinsics, &self.cfg.t_gt)?;
        let mut flow = flow_between(input.projected, &gt)?.crop(&input.window);
        let cfg = &self.cfg;
        if cfg.noise_sigma_px > 0.0 || cfg.outlier_fraction > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(input.stage as u64);
            let noise = Normal::new(0.0, cfg.noise_sigma_px).expect("validated sigma");
            let r = cfg.outlier_radius_px;
            flow.map_valid(|_, _, f| {
                if cfg.outlier_fraction > 0.0 && rng.random::<f64>() < cfg.outlier_fraction {
                    if r > 0.0 {
                        Vector2::new(rng.random_range(-r..=r), rng.random_range(-r..=r))
                    } else {
                        Vector2::zeros()
                    }
                } else {
                    f + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng))
                }
            });
        }
        Ok(flow)
    }
}

/// Reads precomputed flow from `<dir>/stage<k>_<frame-id>.cfl`. A file covering
/// the whole image is cropped to the window.
#[derive(Debug, Clone)]
pub struct FilePredictor {
    pub dir: PathBuf,
}

impl FilePredictor {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, stage: usize, frame_id: &str) -> PathBuf {
        self.dir.join(format!("stage{stage}_{frame_id}.cfl"))
    }
}

impl FlowPredictor for FilePredictor {
    fn predict(&self, input: &PredictorInput<'_>) -> Result<FlowField> {
        let flow = read_cfl(self.path_for(input.stage, input.frame_id))?;
        let w = &input.window;
        if (flow.width, flow.height) == (w.width, w.height) {
            Ok(flow)
        } else if (flow.width, flow.height) == (input.projected.width, input.projected.height) {
            Ok(flow.crop(w))
        } else {
            Err(Error::DimensionMismatch {
                expected: (w.width, w.height),
                actual: (flow.width, flow.height),
            })
        }
    }
}
