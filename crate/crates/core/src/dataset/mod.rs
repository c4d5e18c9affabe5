//! Amodal annotation sets, occlusion-subset cropping, augmentation and
//! synthetic occluded scenes.
//!
//! Annotation documents are JSON:
//!
//! ```json
//! {
//!   "images": [{"id": 1, "w": 640, "h": 480, "file": "a.pgm"}],
//!   "instances": [{"image": 1, "class": 0,
//!                  "amodal": [[10, 10], [60, 10], [60, 50]],
//!                  "visible": [[10, 10], [40, 10], [40, 30]],
//!                  "occlusion": "medium"}]
//! }
//! ```
//!
//! Prediction files reuse the schema; `score` (default 1) carries the
//! confidence and `amodal` the predicted outline.

mod augment;
mod clip;
mod synth;

pub use augment::{augment, augment_all, AffineMap, AugmentSpec, Sample};
pub use clip::{clip_polygon, crop_instance, crop_subset, CropWindow, CROP_SIZE};
pub use synth::{synth_scene, Ellipse, SynthFruit, SynthParams, SyntheticScene};

use crate::evaluation::{Detection, GroundTruthInstance, OcclusionLevel};
use crate::maskops::{rasterize_polygon, BinaryMask, MaskError, Polygon};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("{path}: {msg}")]
    Consistency { path: String, msg: String },
    #[error("out of range: {0}")]
    Range(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("scene generation failed: {0}")]
    Generation(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: u64,
    pub w: usize,
    pub h: usize,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub image: u64,
    pub class: u32,
    pub amodal: Polygon,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible: Option<Polygon>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occlusion: Option<OcclusionLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub images: Vec<ImageEntry>,
    pub instances: Vec<InstanceEntry>,
}

fn consistency(path: String, msg: impl Into<String>) -> DatasetError {
    DatasetError::Consistency { path, msg: msg.into() }
}

impl AnnotationSet {
    pub fn parse(text: &str) -> Result<Self> {
        let set: AnnotationSet = serde_json::from_str(text).map_err(|e| DatasetError::Parse {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotation set serialises")
    }

    pub fn image(&self, id: u64) -> Option<&ImageEntry> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for (i, img) in self.images.iter().enumerate() {
            if !ids.insert(img.id) {
                return Err(consistency(format!("images[{i}].id"), format!("duplicate image id {}", img.id)));
            }
            if img.w == 0 || img.h == 0 {
                return Err(consistency(format!("images[{i}]"), format!("empty image {}x{}", img.w, img.h)));
            }
        }
        for (i, inst) in self.instances.iter().enumerate() {
            if !ids.contains(&inst.image) {
                return Err(consistency(
                    format!("instances[{i}].image"),
                    format!("no image with id {}", inst.image),
                ));
            }
            if let Some(s) = inst.score {
                if !(0.0..=1.0).contains(&s) {
                    return Err(consistency(format!("instances[{i}].score"), format!("{s} outside [0, 1]")));
                }
            }
            let (amodal, visible) = self.instance_masks(i)?;
            if let Some(v) = visible {
                if !v.is_subset_of(&amodal)? {
                    return Err(consistency(
                        format!("instances[{i}].visible"),
                        "visible region extends outside the amodal outline",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Rasterised amodal and visible masks of instance `i`.
    pub fn instance_masks(&self, i: usize) -> Result<(BinaryMask, Option<BinaryMask>)> {
        let inst = &self.instances[i];
        let img = self
            .image(inst.image)
            .ok_or_else(|| consistency(format!("instances[{i}].image"), format!("no image with id {}", inst.image)))?;
        let amodal = rasterize_polygon(&inst.amodal, img.w, img.h)?;
        let visible = inst.visible.as_ref().map(|p| rasterize_polygon(p, img.w, img.h)).transpose()?;
        Ok((amodal, visible))
    }

    pub fn ground_truth(&self) -> Result<Vec<GroundTruthInstance>> {
        (0..self.instances.len())
            .map(|i| {
                let (amodal, visible) = self.instance_masks(i)?;
                let inst = &self.instances[i];
                GroundTruthInstance::new(inst.image, inst.class, amodal, visible, inst.occlusion)
                    .map_err(|e| consistency(format!("instances[{i}]"), e.to_string()))
            })
            .collect()
    }

    /// Instances as scored detections; the amodal outline is the prediction.
    pub fn detections(&self) -> Result<Vec<Detection>> {
        (0..self.instances.len())
            .map(|i| {
                let inst = &self.instances[i];
                let (mask, _) = self.instance_masks(i)?;
                Detection::new(inst.image, inst.class, inst.score.unwrap_or(1.0), mask)
                    .map_err(|e| consistency(format!("instances[{i}]"), e.to_string()))
            })
            .collect()
    }
}

/// Seeded shuffle of `0..n` cut into consecutive parts of the given
/// proportions; rounding leftovers go to the last part.
pub fn split_indices(n: usize, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    if fractions.is_empty() || fractions.iter().any(|f| !(*f >= 0.0)) {
        return Err(DatasetError::Param(format!("bad split fractions {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(DatasetError::Param(format!("split fractions sum to {total}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts = Vec::with_capacity(fractions.len());
    let mut start = 0;
    for (k, f) in fractions.iter().enumerate() {
        let end = if k + 1 == fractions.len() {
            n
        } else {
            (start + (f * n as f64).round() as usize).min(n)
        };
        parts.push(idx[start..end].to_vec());
        start = end;
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FIXTURE: &str = r#"{
  "images": [
    {"id": 1, "w": 40, "h": 30, "file": "a.pgm"},
    {"id": 2, "w": 20, "h": 20, "file": "b.pgm"}
  ],
  "instances": [
    {"image": 1, "class": 0, "amodal": [[2, 2], [12, 2], [12, 10], [2, 10]],
     "visible": [[2, 2], [7, 2], [7, 10], [2, 10]], "occlusion": "medium"},
    {"image": 1, "class": 0, "amodal": [[20, 5], [35, 5], [27.5, 25]]},
    {"image": 2, "class": 1, "amodal": [[0, 0], [20, 0], [20, 20], [0, 20]], "score": 0.5}
  ]
}"#;

    #[test]
    fn fixture_counts_and_areas() {
        let set = AnnotationSet::parse(FIXTURE).unwrap();
        assert_eq!((set.images.len(), set.instances.len()), (2, 3));
        let (a, v) = set.instance_masks(0).unwrap();
        assert_eq!((a.area(), v.unwrap().area()), (80, 40));
        // pixel-centre oracle for the triangle
        let tri = &set.instances[1].amodal;
        let expect = (0..30)
            .flat_map(|y| (0..40).map(move |x| (x, y)))
            .filter(|&(x, y)| tri.contains(x as f64 + 0.5, y as f64 + 0.5))
            .count();
        assert_eq!(set.instance_masks(1).unwrap().0.area(), expect);
        assert_eq!(set.instance_masks(2).unwrap().0.area(), 400);
        let gts = set.ground_truth().unwrap();
        assert_eq!(gts[0].level(), Some(OcclusionLevel::Medium));
        assert_eq!(set.detections().unwrap()[2].confidence, 0.5);
    }

    #[test]
    fn round_trip() {
        let set = AnnotationSet::parse(FIXTURE).unwrap();
        assert_eq!(AnnotationSet::parse(&set.to_json()).unwrap(), set);
    }

    #[test]
    fn diagnostics() {
        let dangling = FIXTURE.replace(r#"{"image": 2, "class": 1"#, r#"{"image": 9, "class": 1"#);
        match AnnotationSet::parse(&dangling) {
            Err(DatasetError::Consistency { path, .. }) => assert_eq!(path, "instances[2].image"),
            other => panic!("{other:?}"),
        }
        let broken = FIXTURE.replace("[27.5, 25]", "[27.5, 25");
        assert!(matches!(AnnotationSet::parse(&broken), Err(DatasetError::Parse { line: 9, .. })));
        let short = FIXTURE.replace("[[20, 5], [35, 5], [27.5, 25]]", "[[20, 5], [35, 5]]");
        assert!(matches!(AnnotationSet::parse(&short), Err(DatasetError::Parse { line: 9, .. })));
        let outside = FIXTURE.replace("[7, 2], [7, 10]", "[14, 2], [14, 10]");
        assert!(matches!(AnnotationSet::parse(&outside), Err(DatasetError::Consistency { .. })));
        let dup = FIXTURE.replace(r#""id": 2"#, r#""id": 1"#);
        assert!(matches!(AnnotationSet::parse(&dup), Err(DatasetError::Consistency { .. })));
    }

    #[test]
    fn seeded_split() {
        let parts = split_indices(1000, &[0.7, 0.2, 0.1], 5).unwrap();
        assert_eq!(parts.iter().map(Vec::len).collect::<Vec<_>>(), vec![700, 200, 100]);
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(parts, split_indices(1000, &[0.7, 0.2, 0.1], 5).unwrap());
        assert!(split_indices(10, &[0.5, 0.2], 0).is_err());
    }
}
