//! Synthetic occluded scenes with exact amodal and visible ground truth.
//!
//! Fruits are ellipses, one per grid cell. Each occluder is the part of the
//! fruit's cell beyond a line; the line offset is bisected until the hidden
//! fraction of the fruit lands within tolerance of its target.

use super::clip::clip_ring;
use super::{AnnotationSet, DatasetError, ImageEntry, InstanceEntry, Result, Sample};
use crate::evaluation::{occlusion_level, OcclusionLevel};
use crate::maskops::{rasterize_polygon, BinaryMask, Polygon};
use crate::pgm::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const ELLIPSE_VERTICES: usize = 72;
const BISECTION_STEPS: usize = 40;
const SHADE_BACKGROUND: u16 = 40;
const SHADE_FRUIT: u16 = 190;
const SHADE_OCCLUDER: u16 = 95;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    /// One fruit per target hidden fraction.
    pub targets: Vec<f64>,
    pub tolerance: f64,
    pub max_retries: usize,
    pub class_id: u32,
}

impl SynthParams {
    pub fn new(targets: Vec<f64>) -> Self {
        Self {
            width: 256,
            height: 256,
            targets,
            tolerance: 0.02,
            max_retries: 8,
            class_id: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

impl Ellipse {
    pub fn polygon(&self) -> Polygon {
        let (s, c) = self.theta.sin_cos();
        Polygon::new(
            (0..ELLIPSE_VERTICES)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / ELLIPSE_VERTICES as f64;
                    let (x, y) = (self.a * t.cos(), self.b * t.sin());
                    [self.cx + c * x - s * y, self.cy + s * x + c * y]
                })
                .collect(),
        )
        .expect("ellipse ring is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFruit {
    pub ellipse: Ellipse,
    pub outline: Polygon,
    pub occluder: Option<Polygon>,
    pub target: f64,
    pub achieved: f64,
    pub amodal: BinaryMask,
    pub visible: BinaryMask,
}

impl SynthFruit {
    pub fn level(&self) -> OcclusionLevel {
        occlusion_level(self.visible.area(), self.amodal.area()).expect("visible inside a non-empty amodal mask")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub fruits: Vec<SynthFruit>,
    pub image: GrayImage,
}

fn hidden_fraction(amodal: &BinaryMask, occ: &BinaryMask) -> f64 {
    let hidden = amodal.and(occ).expect("same canvas").area();
    hidden as f64 / amodal.area() as f64
}

struct Cell {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

/// Part of `cell` where `dir · (p − centre) >= t`.
fn occluder(cell: &Cell, centre: [f64; 2], dir: [f64; 2], t: f64) -> Option<Polygon> {
    let rect = [[cell.x0, cell.y0], [cell.x1, cell.y0], [cell.x1, cell.y1], [cell.x0, cell.y1]];
    let ring = clip_ring(&rect, |p| dir[0] * (p[0] - centre[0]) + dir[1] * (p[1] - centre[1]) - t);
    Polygon::new(ring).ok().filter(|p| p.area() > 0.0)
}

fn place_fruit(
    rng: &mut ChaCha8Rng,
    cell: &Cell,
    target: f64,
    params: &SynthParams,
) -> Option<SynthFruit> {
    let (cw, ch) = (cell.x1 - cell.x0, cell.y1 - cell.y0);
    let r = cw.min(ch) / 2.0;
    let a = rng.gen_range(0.55..0.8) * r;
    let b = rng.gen_range(0.75..1.0) * a;
    let slack = r - a - 1.0;
    let cx = (cell.x0 + cell.x1) / 2.0 + rng.gen_range(-slack..=slack).max(-slack);
    let cy = (cell.y0 + cell.y1) / 2.0 + rng.gen_range(-slack..=slack).max(-slack);
    let ellipse = Ellipse {
        cx,
        cy,
        a,
        b,
        theta: rng.gen_range(0.0..PI),
    };
    let outline = ellipse.polygon();
    let amodal = rasterize_polygon(&outline, params.width, params.height).ok()?;
    if amodal.is_empty() {
        return None;
    }
    if target == 0.0 {
        return Some(SynthFruit {
            ellipse,
            outline,
            occluder: None,
            target,
            achieved: 0.0,
            visible: amodal.clone(),
            amodal,
        });
    }
    let phi = rng.gen_range(0.0..2.0 * PI);
    let dir = [phi.cos(), phi.sin()];
    let centre = [cx, cy];
    let mask_for = |t: f64| -> Option<(Polygon, BinaryMask)> {
        let poly = occluder(cell, centre, dir, t)?;
        let m = rasterize_polygon(&poly, params.width, params.height).ok()?;
        Some((poly, m))
    };
    // hidden fraction falls as t grows
    let (mut lo, mut hi) = (-a - 1.0, a + 1.0);
    let mut best: Option<(f64, Polygon, BinaryMask)> = None;
    for _ in 0..BISECTION_STEPS {
        let mid = (lo + hi) / 2.0;
        let Some((poly, occ)) = mask_for(mid) else {
            hi = mid;
            continue;
        };
        let frac = hidden_fraction(&amodal, &occ);
        if best.as_ref().is_none_or(|(f, _, _)| (frac - target).abs() < (f - target).abs()) {
            best = Some((frac, poly, occ));
        }
        if (frac - target).abs() <= params.tolerance / 4.0 {
            break;
        }
        if frac > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (achieved, poly, occ) = best?;
    if (achieved - target).abs() > params.tolerance {
        return None;
    }
    Some(SynthFruit {
        ellipse,
        outline,
        occluder: Some(poly),
        target,
        achieved,
        visible: amodal.and_not(&occ).expect("same canvas"),
        amodal,
    })
}

pub fn synth_scene(params: &SynthParams, seed: u64) -> Result<SyntheticScene> {
    if params.targets.is_empty() {
        return Err(DatasetError::Param("no fruits requested".into()));
    }
    if let Some(t) = params.targets.iter().find(|t| !(0.0..1.0).contains(*t)) {
        return Err(DatasetError::Param(format!("target ratio {t} outside [0, 1)")));
    }
    if !(params.tolerance > 0.0) {
        return Err(DatasetError::Param(format!("tolerance {} must be positive", params.tolerance)));
    }
    let n = params.targets.len();
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let (cw, ch) = (params.width as f64 / cols as f64, params.height as f64 / rows as f64);
    if cw.min(ch) < 16.0 {
        return Err(DatasetError::Generation(format!(
            "{}x{} canvas too small for {n} fruits",
            params.width, params.height
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fruits = Vec::with_capacity(n);
    for (i, &target) in params.targets.iter().enumerate() {
        let cell = Cell {
            x0: (i % cols) as f64 * cw,
            y0: (i / cols) as f64 * ch,
            x1: (i % cols + 1) as f64 * cw,
            y1: (i / cols + 1) as f64 * ch,
        };
        let fruit = (0..=params.max_retries)
            .find_map(|_| place_fruit(&mut rng, &cell, target, params))
            .ok_or_else(|| {
                DatasetError::Generation(format!(
                    "fruit {i}: no occluder within {} of target {target} after {} attempts",
                    params.tolerance,
                    params.max_retries + 1
                ))
            })?;
        fruits.push(fruit);
    }

    let mut image = GrayImage::new(params.width, params.height, 255);
    image.data.fill(SHADE_BACKGROUND);
    for f in &fruits {
        paint(&mut image, &f.amodal, SHADE_FRUIT);
    }
    for f in &fruits {
        if let Some(o) = &f.occluder {
            paint(&mut image, &rasterize_polygon(o, params.width, params.height)?, SHADE_OCCLUDER);
        }
    }
    Ok(SyntheticScene {
        width: params.width,
        height: params.height,
        seed,
        fruits,
        image,
    })
}

fn paint(img: &mut GrayImage, m: &BinaryMask, v: u16) {
    for (px, &b) in img.data.iter_mut().zip(m.bits()) {
        if b {
            *px = v;
        }
    }
}

impl SyntheticScene {
    /// Annotation document with amodal outlines and level tags. Visible
    /// regions are not polygons and are therefore omitted.
    pub fn annotations(&self, image_id: u64, file: &str, class_id: u32) -> AnnotationSet {
        AnnotationSet {
            images: vec![ImageEntry {
                id: image_id,
                w: self.width,
                h: self.height,
                file: file.to_string(),
            }],
            instances: self
                .fruits
                .iter()
                .map(|f| InstanceEntry {
                    image: image_id,
                    class: class_id,
                    amodal: f.outline.clone(),
                    visible: None,
                    occlusion: Some(f.level()),
                    score: None,
                })
                .collect(),
        }
    }

    pub fn sample(&self, image_id: u64, class_id: u32) -> Sample {
        Sample {
            image: self.image.clone(),
            instances: self.annotations(image_id, "", class_id).instances,
        }
    }
}
