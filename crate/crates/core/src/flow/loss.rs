use nalgebra::Vector2;

use super::FlowField;
use crate::error::{Error, Result};

/// Parameters of the generalized Charbonnier penalty `ρ(x) = (‖x‖² + ε²)^α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub epsilon: f64,
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-9,
            alpha: 0.25,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Charbonnier requires epsilon > 0 and 0 < alpha <= 1 (got {}, {})",
                self.epsilon, self.alpha
            )));
        }
        Ok(())
    }
}

#[inline]
pub fn charbonnier(diff: &Vector2<f64>, cfg: &LossConfig) -> f64 {
    (diff.norm_squared() + cfg.epsilon * cfg.epsilon).powf(cfg.alpha)
}

fn check_dims(a: &FlowField, width: usize, height: usize) -> Result<()> {
    if (a.width, a.height) != (width, height) {
        return Err(Error::DimensionMismatch {
            expected: (width, height),
            actual: (a.width, a.height),
        });
    }
    Ok(())
}

/// Mean L1 distance between `pred` and `gt` over the pixels where `gt` is valid.
pub fn photometric_loss(pred: &FlowField, gt: &FlowField) -> Result<f64> {
    check_dims(pred, gt.width, gt.height)?;
    let (sum, n) = gt.iter_valid().fold((0.0, 0usize), |(s, n), (x, y, g)| {
        let d = g - pred.value(x, y);
        (s + d.x.abs() + d.y.abs(), n + 1)
    });
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(sum / n as f64)
}

/// `ρ(F(u,v) − F(u+1,v)) + ρ(F(u,v) − F(u,v+1))`, skipping neighbours that fall
/// off the image.
pub fn smoothness_term(pred: &FlowField, x: usize, y: usize, cfg: &LossConfig) -> f64 {
    let here = pred.value(x, y);
    let mut d = 0.0;
    if x + 1 < pred.width {
        d += charbonnier(&(here - pred.value(x + 1, y)), cfg);
    }
    if y + 1 < pred.height {
        d += charbonnier(&(here - pred.value(x, y + 1)), cfg);
    }
    d
}

/// Mean smoothness term over the pixels where `gt_mask` is unset.
pub fn smoothness_loss(pred: &FlowField, gt_mask: &[bool], cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    if gt_mask.len() != pred.width * pred.height {
        return Err(Error::InvalidArgument(format!(
            "mask has {} entries for a {}x{} field",
            gt_mask.len(),
            pred.width,
            pred.height
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, &valid) in gt_mask.iter().enumerate() {
        if !valid {
            sum += smoothness_term(pred, k % pred.width, k / pred.width, cfg);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoInvalidPixels);
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(width: usize, height: usize, f: impl Fn(usize, usize) -> Option<Vector2<f64>>) -> FlowField {
        let mut out = FlowField::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                if let Some(v) = f(x, y) {
                    out.set(x, y, v);
                }
            }
        }
        out
    }

    #[test]
    fn photometric_zero_on_identical() {
        let gt = field(8, 6, |x, y| ((x + y) % 3 == 0).then(|| Vector2::new(x as f64, -(y as f64))));
        assert_eq!(photometric_loss(&gt, &gt).unwrap(), 0.0);
    }

    #[test]
    fn photometric_constant_offset() {
        let gt = field(8, 6, |x, y| ((x * y) % 2 == 0).then(|| Vector2::new(0.5, 2.0)));
        let pred = field(8, 6, |x, y| ((x * y) % 2 == 0).then(|| Vector2::new(1.5, 3.0)));
        assert_eq!(photometric_loss(&pred, &gt).unwrap(), 2.0);
    }

    #[test]
    fn photometric_ignores_unmasked_pixels() {
        let gt = field(4, 4, |x, _| (x < 2).then(|| Vector2::new(1.0, 1.0)));
        let mut pred = gt.clone();
        pred.set(3, 3, Vector2::new(100.0, -100.0));
        pred.set(2, 0, Vector2::new(7.0, 7.0));
        assert_eq!(photometric_loss(&pred, &gt).unwrap(), 0.0);
    }

    #[test]
    fn photometric_requires_valid_pixels() {
        let gt = FlowField::zeros(4, 4);
        assert!(matches!(photometric_loss(&gt, &gt), Err(Error::NoValidPixels)));
    }

    #[test]
    fn smoothness_of_constant_field() {
        let cfg = LossConfig::default();
        let pred = field(6, 5, |_, _| Some(Vector2::new(3.0, -1.0)));
        // Interior pixel: two terms of (ε²)^α = (1e-18)^0.25.
        let term = smoothness_term(&pred, 2, 2, &cfg);
        assert!((term - 2.0 * 1e-18f64.powf(0.25)).abs() < 1e-18);
        assert!((term - 6.3246e-5).abs() < 1e-9);
        // Corner pixel has no right/down neighbour.
        assert_eq!(smoothness_term(&pred, 5, 4, &cfg), 0.0);
    }

    #[test]
    fn unit_step_contributes_about_one() {
        let cfg = LossConfig::default();
        let pred = field(3, 3, |x, _| Some(Vector2::new(if x == 0 { 1.0 } else { 0.0 }, 0.0)));
        let term = smoothness_term(&pred, 0, 1, &cfg);
        let eps_term = 1e-18f64.powf(0.25);
        assert!((term - (1.0 + eps_term)).abs() < 1e-12);
    }

    #[test]
    fn smoothness_excludes_masked_pixels() {
        let cfg = LossConfig::default();
        let mask: Vec<bool> = (0..16).map(|k| k % 4 == 0).collect();
        let a = field(4, 4, |_, _| Some(Vector2::new(1.0, 1.0)));
        // Masked pixels at x = 0 contribute only through their neighbours.
        let mut b = a.clone();
        b.set(1, 1, Vector2::new(1.0, 1.0));
        assert_eq!(smoothness_loss(&a, &mask, &cfg).unwrap(), smoothness_loss(&b, &mask, &cfg).unwrap());
    }

    #[test]
    fn smoothness_is_translation_invariant() {
        let cfg = LossConfig::default();
        let mask: Vec<bool> = (0..48).map(|k| k % 5 == 0).collect();
        let a = field(8, 6, |x, y| Some(Vector2::new((x * y) as f64 * 0.3, x as f64 - y as f64)));
        let mut b = a.clone();
        b.map_valid(|_, _, v| v + Vector2::new(12.5, -7.0));
        let la = smoothness_loss(&a, &mask, &cfg).unwrap();
        let lb = smoothness_loss(&b, &mask, &cfg).unwrap();
        assert!((la - lb).abs() < 1e-12);
    }

    #[test]
    fn smoothness_requires_invalid_pixels() {
        let pred = FlowField::zeros(2, 2);
        assert!(matches!(
            smoothness_loss(&pred, &[true; 4], &LossConfig::default()),
            Err(Error::NoInvalidPixels)
        ));
    }

    #[test]
    fn rejects_bad_config() {
        let pred = FlowField::zeros(2, 2);
        let cfg = LossConfig { epsilon: 0.0, alpha: 0.25 };
        assert!(smoothness_loss(&pred, &[false; 4], &cfg).is_err());
    }
}
