//! Detection scoring, harvest-success accounting, occlusion banding and the
//! accuracy/success correlation.

mod harvest;
mod matching;
mod report;

pub use harvest::{harvest_success, truncate_percent, HarvestLog, HarvestSummary, LevelCount, LevelHarvest};
pub use matching::{
    average_precision, map_at, match_detections, precision_recall, MatchResult, Outcome, PrPoint,
};
pub use report::{evaluate, ClassReport, EvalOptions, EvalReport, LevelReport};

use crate::maskops::BinaryMask;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAP50_THRESHOLDS: [f64; 1] = [0.50];
pub const MAP50_95_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("parameter error: {0}")]
    Param(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("inconsistent input: {0}")]
    Consistency(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no trials recorded for {0}")]
    UndefinedLevel(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OcclusionLevel {
    Zero,
    Low,
    Medium,
    High,
}

impl OcclusionLevel {
    pub const ALL: [OcclusionLevel; 4] = [Self::Zero, Self::Low, Self::Medium, Self::High];

    pub fn name(self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
        }
    }

    /// Bands on the hidden fraction `r`, upper bounds inclusive.
    pub fn from_ratio(r: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(EvalError::Param(format!("occlusion ratio {r} outside [0, 1]")));
        }
        Ok(if r <= 0.005 {
            Self::Zero
        } else if r <= 0.20 {
            Self::Low
        } else if r <= 0.50 {
            Self::Medium
        } else {
            Self::High
        })
    }
}

impl std::fmt::Display for OcclusionLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OcclusionLevel {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s) || l.name()[..1].eq_ignore_ascii_case(s))
            .ok_or_else(|| EvalError::Param(format!("unknown occlusion level {s:?}")))
    }
}

/// Bands `r = 1 − visible/amodal` using exact integer comparisons.
pub fn occlusion_level(visible_area: usize, amodal_area: usize) -> Result<OcclusionLevel> {
    if amodal_area == 0 {
        return Err(EvalError::Consistency("amodal area is zero".into()));
    }
    if visible_area > amodal_area {
        return Err(EvalError::Consistency(format!(
            "visible area {visible_area} exceeds amodal area {amodal_area}"
        )));
    }
    let hidden = (amodal_area - visible_area) as u128;
    let a = amodal_area as u128;
    Ok(if 200 * hidden <= a {
        OcclusionLevel::Zero
    } else if 5 * hidden <= a {
        OcclusionLevel::Low
    } else if 2 * hidden <= a {
        OcclusionLevel::Medium
    } else {
        OcclusionLevel::High
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: u64,
    pub class_id: u32,
    pub confidence: f64,
    pub mask: BinaryMask,
}

impl Detection {
    pub fn new(image_id: u64, class_id: u32, confidence: f64, mask: BinaryMask) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(EvalError::Param(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self {
            image_id,
            class_id,
            confidence,
            mask,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthInstance {
    pub image_id: u64,
    pub class_id: u32,
    pub amodal: BinaryMask,
    pub visible: Option<BinaryMask>,
    pub occlusion: Option<OcclusionLevel>,
}

impl GroundTruthInstance {
    pub fn new(
        image_id: u64,
        class_id: u32,
        amodal: BinaryMask,
        visible: Option<BinaryMask>,
        occlusion: Option<OcclusionLevel>,
    ) -> Result<Self> {
        if let Some(v) = &visible {
            let inside = v
                .is_subset_of(&amodal)
                .map_err(|e| EvalError::Shape(format!("visible vs amodal mask: {e}")))?;
            if !inside {
                return Err(EvalError::Consistency("visible mask extends outside the amodal mask".into()));
            }
        }
        Ok(Self {
            image_id,
            class_id,
            amodal,
            visible,
            occlusion,
        })
    }

    /// The explicit tag, else the band of the visible/amodal area ratio.
    pub fn level(&self) -> Option<OcclusionLevel> {
        self.occlusion.or_else(|| {
            let v = self.visible.as_ref()?;
            occlusion_level(v.area(), self.amodal.area()).ok()
        })
    }
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn correlate(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(EvalError::Shape(format!("{} x values vs {} y values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(EvalError::Degenerate("need at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(EvalError::Param("non-finite sample".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::Degenerate("x or y is constant".into()));
    }
    Ok((sxy * sxy / (sxx * syy)).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn occlusion_bands() {
        assert_eq!(occlusion_level(100, 100).unwrap(), OcclusionLevel::Zero);
        assert_eq!(occlusion_level(90, 100).unwrap(), OcclusionLevel::Low);
        assert_eq!(occlusion_level(65, 100).unwrap(), OcclusionLevel::Medium);
        assert_eq!(occlusion_level(40, 100).unwrap(), OcclusionLevel::High);
        assert_eq!(occlusion_level(80, 100).unwrap(), OcclusionLevel::Low);
        assert_eq!(occlusion_level(50, 100).unwrap(), OcclusionLevel::Medium);
        assert_eq!(occlusion_level(995, 1000).unwrap(), OcclusionLevel::Zero);
        assert_eq!(occlusion_level(994, 1000).unwrap(), OcclusionLevel::Low);
        assert!(occlusion_level(101, 100).is_err());
        assert!(occlusion_level(0, 0).is_err());
        assert_eq!(OcclusionLevel::from_ratio(0.35).unwrap(), OcclusionLevel::Medium);
        assert!(OcclusionLevel::Zero < OcclusionLevel::High);
        assert_eq!("M".parse::<OcclusionLevel>().unwrap(), OcclusionLevel::Medium);
    }

    fn oracle_r2(x: &[f64], y: &[f64]) -> f64 {
        // slope/intercept fit, then 1 − SSres/SStot
        let n = x.len() as f64;
        let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let icpt = (sy - slope * sx) / n;
        let my = sy / n;
        let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - icpt).powi(2)).sum();
        let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        1.0 - ss_res / ss_tot
    }

    #[test]
    fn correlation_examples() {
        let x = [0.872, 0.888, 0.569, 0.372];
        let y = [92.59, 85.18, 48.14, 22.22];
        let r2 = correlate(&x, &y).unwrap();
        assert!((r2 - 0.986).abs() <= 0.001, "{r2}");
        assert!((r2 - oracle_r2(&x, &y)).abs() < 1e-12);
        assert!((correlate(&[1.0, 2.0, 3.0], &[5.0, 7.0, 9.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(correlate(&[1.0, 1.0], &[2.0, 3.0]).is_err());
        assert!(correlate(&[1.0], &[2.0]).is_err());
        assert!(correlate(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn visible_must_lie_inside_amodal() {
        let a = BinaryMask::from_fn(4, 4, |x, _| x < 2).unwrap();
        let v = BinaryMask::from_fn(4, 4, |x, y| x < 2 && y < 3).unwrap();
        let g = GroundTruthInstance::new(0, 0, a.clone(), Some(v.clone()), None).unwrap();
        assert_eq!(g.level(), Some(OcclusionLevel::Medium));
        assert!(GroundTruthInstance::new(0, 0, v, Some(a), None).is_err());
        assert!(Detection::new(0, 0, 1.5, BinaryMask::new(2, 2).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn r2_matches_regression_oracle(pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..20)) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            if let Ok(r2) = correlate(&x, &y) {
                prop_assert!((0.0..=1.0).contains(&r2));
                prop_assert!((r2 - oracle_r2(&x, &y)).abs() < 1e-9);
            }
        }
    }
}
