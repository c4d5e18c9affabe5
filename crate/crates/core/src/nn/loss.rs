//! Box, mask and class losses and their weighted sum.

use crate::ndtensor::{Result, Tensor, TensorError};
use std::f64::consts::PI;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_CLAMP_EPS: f64 = 1e-7;

/// Class-dependent weights of the mask cross-entropy. `alpha_fn > alpha_fp`
/// makes missed foreground costlier than spurious foreground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymConfig {
    pub alpha_fn: f64,
    pub alpha_fp: f64,
}

impl Default for AsymConfig {
    fn default() -> Self {
        Self {
            alpha_fn: 1.1,
            alpha_fp: 0.9,
        }
    }
}

impl AsymConfig {
    pub fn new(alpha_fn: f64, alpha_fp: f64) -> Result<Self> {
        if !(alpha_fn > 0.0 && alpha_fp > 0.0 && alpha_fn.is_finite() && alpha_fp.is_finite()) {
            return Err(TensorError::Param(format!(
                "asymmetry coefficients must be positive, got ({alpha_fn}, {alpha_fp})"
            )));
        }
        Ok(Self { alpha_fn, alpha_fp })
    }

    /// Plain binary cross-entropy.
    pub const fn symmetric() -> Self {
        Self {
            alpha_fn: 1.0,
            alpha_fp: 1.0,
        }
    }
}

fn check_pair(p: &Tensor, y: &Tensor) -> Result<()> {
    if p.shape() != y.shape() {
        return Err(TensorError::Shape(format!(
            "prediction {:?} vs target {:?}",
            p.shape(),
            y.shape()
        )));
    }
    if p.is_empty() {
        return Err(TensorError::Shape("empty prediction".into()));
    }
    if let Some(v) = p.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(TensorError::Param(format!("probability {v} outside [0, 1]")));
    }
    if let Some(v) = y.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(TensorError::Param(format!("label {v} outside [0, 1]")));
    }
    Ok(())
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP_EPS, 1.0 - PROB_CLAMP_EPS)
}

/// Mean of `-[α_FN·y·ln p + α_FP·(1-y)·ln(1-p)]`.
pub fn asym_bce(p: &Tensor, y: &Tensor, cfg: &AsymConfig) -> Result<f64> {
    check_pair(p, y)?;
    let total: f64 = p
        .data()
        .iter()
        .zip(y.data())
        .map(|(&pv, &yv)| {
            let pc = clamp_prob(pv);
            -(cfg.alpha_fn * yv * pc.ln() + cfg.alpha_fp * (1.0 - yv) * (1.0 - pc).ln())
        })
        .sum();
    Ok(total / p.len() as f64)
}

/// `∂ asym_bce / ∂ p`; zero where the clamp is active.
pub fn asym_bce_grad(p: &Tensor, y: &Tensor, cfg: &AsymConfig) -> Result<Tensor> {
    check_pair(p, y)?;
    let n = p.len() as f64;
    let data = p
        .data()
        .iter()
        .zip(y.data())
        .map(|(&pv, &yv)| {
            if clamp_prob(pv) != pv {
                return 0.0;
            }
            -(cfg.alpha_fn * yv / pv - cfg.alpha_fp * (1.0 - yv) / (1.0 - pv)) / n
        })
        .collect();
    Tensor::new(p.shape().to_vec(), data)
}

pub fn bce(p: &Tensor, y: &Tensor) -> Result<f64> {
    asym_bce(p, y, &AsymConfig::symmetric())
}

/// Axis-aligned box given by centre and size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.cx, self.cy, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(TensorError::Param(format!("degenerate box {self:?}")));
        }
        Ok(())
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }
}

/// Complete-IoU loss: `1 - IoU + ρ²/c² + α·v`, where ρ is the centre
/// distance, c the enclosing-box diagonal, `v = 4/π²·(atan(w_g/h_g) -
/// atan(w_p/h_p))²` and `α = v / (1 - IoU + v)`.
pub fn ciou_loss(pred: &BBox, gt: &BBox) -> Result<f64> {
    pred.validate()?;
    gt.validate()?;
    let (px0, py0, px1, py1) = pred.bounds();
    let (gx0, gy0, gx1, gy1) = gt.bounds();
    let iw = (px1.min(gx1) - px0.max(gx0)).max(0.0);
    let ih = (py1.min(gy1) - py0.max(gy0)).max(0.0);
    let inter = iw * ih;
    let union = pred.w * pred.h + gt.w * gt.h - inter;
    let iou = inter / union;
    let rho2 = (pred.cx - gt.cx).powi(2) + (pred.cy - gt.cy).powi(2);
    let c2 = (px1.max(gx1) - px0.min(gx0)).powi(2) + (py1.max(gy1) - py0.min(gy0)).powi(2);
    let v = 4.0 / (PI * PI) * ((gt.w / gt.h).atan() - (pred.w / pred.h).atan()).powi(2);
    let aspect = if v == 0.0 { 0.0 } else { v * v / ((1.0 - iou) + v) };
    Ok(1.0 - iou + rho2 / c2 + aspect)
}

/// Weights of the box, mask and class terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_box: f64,
    pub lambda_mask: f64,
    pub lambda_cls: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_box: 1.0,
            lambda_mask: 1.0,
            lambda_cls: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_box: f64, lambda_mask: f64, lambda_cls: f64) -> Result<Self> {
        if [lambda_box, lambda_mask, lambda_cls].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(TensorError::Param("loss weights must be finite and non-negative".into()));
        }
        Ok(Self {
            lambda_box,
            lambda_mask,
            lambda_cls,
        })
    }
}

pub fn total_loss(box_term: f64, mask_term: f64, cls_term: f64, w: &LossWeights) -> f64 {
    w.lambda_box * box_term + w.lambda_mask * mask_term + w.lambda_cls * cls_term
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndtensor::grad_check;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn half_probability_values() {
        let a = asym_bce(&t(&[0.5]), &t(&[1.0]), &AsymConfig::default()).unwrap();
        assert!((a - 1.1 * 2f64.ln()).abs() < 1e-15);
        assert!((a - 0.762462).abs() < 1e-6);
        let b = bce(&t(&[0.5]), &t(&[0.5])).unwrap();
        assert!((b - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn perfect_labels_are_near_zero() {
        let b = bce(&t(&[0.0, 1.0, 1.0, 0.0]), &t(&[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!(b >= 0.0 && b <= 2.0 * PROB_CLAMP_EPS, "{b}");
        let a = asym_bce(&t(&[1.0 - 1e-12]), &t(&[1.0]), &AsymConfig::default()).unwrap();
        assert!(a < 2.0 * PROB_CLAMP_EPS);
    }

    #[test]
    fn symmetric_config_is_plain_bce() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let p = Tensor::random_uniform(&[3, 4, 4], 0.01, 0.99, &mut r);
        let y = Tensor::random_uniform(&[3, 4, 4], 0.0, 1.0, &mut r);
        let a = asym_bce(&p, &y, &AsymConfig::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(a.to_bits(), bce(&p, &y).unwrap().to_bits());
    }

    #[test]
    fn rejects_mismatch_and_out_of_range() {
        assert!(matches!(bce(&t(&[0.5]), &t(&[0.5, 0.5])), Err(TensorError::Shape(_))));
        assert!(matches!(bce(&t(&[1.5]), &t(&[1.0])), Err(TensorError::Param(_))));
        assert!(matches!(bce(&t(&[0.5]), &t(&[-0.1])), Err(TensorError::Param(_))));
        assert!(AsymConfig::new(0.0, 1.0).is_err());
        assert!(LossWeights::new(1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn gradient_ratio_is_alpha() {
        let cfg = AsymConfig::default();
        for p in [0.01, 0.2, 0.5, 0.77, 0.99] {
            let ga = asym_bce_grad(&t(&[p]), &t(&[1.0]), &cfg).unwrap().data()[0];
            let gb = asym_bce_grad(&t(&[p]), &t(&[1.0]), &AsymConfig::symmetric()).unwrap().data()[0];
            assert!((ga / gb - 1.1).abs() < 1e-12);
            let ga0 = asym_bce_grad(&t(&[p]), &t(&[0.0]), &cfg).unwrap().data()[0];
            let gb0 = asym_bce_grad(&t(&[p]), &t(&[0.0]), &AsymConfig::symmetric()).unwrap().data()[0];
            assert!((ga0 / gb0 - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let p = Tensor::random_uniform(&[2, 4, 4], 0.05, 0.95, &mut r);
        let y = Tensor::from_fn(&[2, 4, 4], |_| if r.gen_bool(0.5) { 1.0 } else { 0.0 }).unwrap();
        let cfg = AsymConfig::default();
        let f = |q: &Tensor| Ok((asym_bce(q, &y, &cfg)?, asym_bce_grad(q, &y, &cfg)?));
        assert!(grad_check(f, &p, 1e-7, 1e-6).unwrap().pass);
    }

    #[test]
    fn ciou_identical_is_zero() {
        let b = BBox::new(3.0, -1.0, 2.0, 5.0);
        assert_eq!(ciou_loss(&b, &b).unwrap(), 0.0);
    }

    #[test]
    fn ciou_offset_equal_boxes_hand_oracle() {
        // two 2×2 boxes shifted by 1 along x: IoU = 2/6, enclosing 3×2, ρ² = 1
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BBox::new(1.0, 0.0, 2.0, 2.0);
        let expected = 1.0 - 1.0 / 3.0 + 1.0 / 13.0;
        assert!((ciou_loss(&a, &b).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn ciou_degenerate_box() {
        let ok = BBox::new(0.0, 0.0, 1.0, 1.0);
        assert!(ciou_loss(&BBox::new(0.0, 0.0, 0.0, 1.0), &ok).is_err());
        assert!(ciou_loss(&ok, &BBox::new(0.0, 0.0, 1.0, -2.0)).is_err());
    }

    #[test]
    fn ciou_non_negative_sweep() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let mut b = || BBox::new(r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0), r.gen_range(0.01..4.0), r.gen_range(0.01..4.0));
            let (p, g) = (b(), b());
            let l = ciou_loss(&p, &g).unwrap();
            assert!(l >= 0.0 && l.is_finite(), "{p:?} {g:?} -> {l}");
        }
    }

    #[test]
    fn total_loss_cases() {
        let zero = LossWeights::new(0.0, 0.0, 0.0).unwrap();
        assert_eq!(total_loss(0.2, 0.3, 0.5, &zero), 0.0);
        let mask_only = LossWeights::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(total_loss(0.2, 0.3, 0.5, &mask_only), 0.3);
        let w = LossWeights::new(1.0, 2.0, 3.0).unwrap();
        assert!((total_loss(0.2, 0.3, 0.5, &w) - 2.3).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn asymmetry_is_a_pure_scale(p in 0.001f64..0.999) {
            let cfg = AsymConfig::default();
            let r1 = asym_bce(&t(&[p]), &t(&[1.0]), &cfg).unwrap() / bce(&t(&[p]), &t(&[1.0])).unwrap();
            let r0 = asym_bce(&t(&[p]), &t(&[0.0]), &cfg).unwrap() / bce(&t(&[p]), &t(&[0.0])).unwrap();
            prop_assert!((r1 / 1.1 - 1.0).abs() < 1e-12);
            prop_assert!((r0 / 0.9 - 1.0).abs() < 1e-12);
        }
    }
}
