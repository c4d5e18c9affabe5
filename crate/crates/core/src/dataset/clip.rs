//! Polygon clipping (Sutherland–Hodgman) and 256×256 subset crops.

use super::{AnnotationSet, DatasetError, ImageEntry, InstanceEntry, Result};
use crate::maskops::Polygon;

pub const CROP_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl CropWindow {
    pub fn square(x0: usize, y0: usize) -> Self {
        Self {
            x0,
            y0,
            width: CROP_SIZE,
            height: CROP_SIZE,
        }
    }
}

/// Keeps the part of a vertex ring where `inside(p) >= 0`, with `inside`
/// affine along edges.
pub(crate) fn clip_ring(ring: &[[f64; 2]], inside: impl Fn([f64; 2]) -> f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(ring.len() + 2);
    for (i, &cur) in ring.iter().enumerate() {
        let prev = ring[(i + ring.len() - 1) % ring.len()];
        let (dc, dp) = (inside(cur), inside(prev));
        if (dc >= 0.0) != (dp >= 0.0) {
            let t = dp / (dp - dc);
            out.push([prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])]);
        }
        if dc >= 0.0 {
            out.push(cur);
        }
    }
    out
}

/// Intersection with the axis-aligned rectangle `[x0, x1] × [y0, y1]`;
/// `None` when nothing of positive area remains.
pub fn clip_polygon(poly: &Polygon, x0: f64, y0: f64, x1: f64, y1: f64) -> Option<Polygon> {
    let mut ring = poly.vertices().to_vec();
    for f in [
        &(|p: [f64; 2]| p[0] - x0) as &dyn Fn([f64; 2]) -> f64,
        &|p: [f64; 2]| x1 - p[0],
        &|p: [f64; 2]| p[1] - y0,
        &|p: [f64; 2]| y1 - p[1],
    ] {
        if ring.is_empty() {
            return None;
        }
        ring = clip_ring(&ring, f);
    }
    let p = Polygon::new(ring).ok()?;
    (p.area() > 0.0).then_some(p)
}

/// The instance in crop coordinates, or `None` if its amodal outline misses
/// the window. A visible outline that misses the window is dropped.
pub fn crop_instance(inst: &InstanceEntry, w: CropWindow) -> Option<InstanceEntry> {
    let (x0, y0) = (w.x0 as f64, w.y0 as f64);
    let (x1, y1) = (x0 + w.width as f64, y0 + w.height as f64);
    let shift = |p: Polygon| p.map(|[x, y]| [x - x0, y - y0]).expect("finite vertices");
    let amodal = shift(clip_polygon(&inst.amodal, x0, y0, x1, y1)?);
    let visible = inst
        .visible
        .as_ref()
        .and_then(|v| clip_polygon(v, x0, y0, x1, y1))
        .map(shift);
    Some(InstanceEntry {
        amodal,
        visible,
        ..inst.clone()
    })
}

/// One image of `set` cut to `w`, with its instances clipped and shifted.
pub fn crop_subset(set: &AnnotationSet, image_id: u64, w: CropWindow) -> Result<AnnotationSet> {
    let img = set
        .image(image_id)
        .ok_or_else(|| DatasetError::Range(format!("no image with id {image_id}")))?;
    if w.width == 0 || w.height == 0 || w.x0 + w.width > img.w || w.y0 + w.height > img.h {
        return Err(DatasetError::Range(format!(
            "{}x{} window at ({}, {}) exceeds {}x{} image",
            w.width, w.height, w.x0, w.y0, img.w, img.h
        )));
    }
    Ok(AnnotationSet {
        images: vec![ImageEntry {
            w: w.width,
            h: w.height,
            ..img.clone()
        }],
        instances: set
            .instances
            .iter()
            .filter(|i| i.image == image_id)
            .filter_map(|i| crop_instance(i, w))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maskops::{rasterize_polygon, BinaryMask};
    use proptest::prelude::*;

    fn inst(pts: Vec<[f64; 2]>) -> InstanceEntry {
        InstanceEntry {
            image: 1,
            class: 0,
            amodal: Polygon::new(pts).unwrap(),
            visible: None,
            occlusion: None,
            score: None,
        }
    }

    fn big_set(instances: Vec<InstanceEntry>) -> AnnotationSet {
        AnnotationSet {
            images: vec![ImageEntry {
                id: 1,
                w: 400,
                h: 300,
                file: "x.pgm".into(),
            }],
            instances,
        }
    }

    #[test]
    fn origin_crop_is_identity_inside() {
        let i = inst(vec![[10.0, 10.0], [50.5, 12.0], [30.0, 70.25]]);
        let c = crop_instance(&i, CropWindow::square(0, 0)).unwrap();
        assert_eq!(c, i);
    }

    #[test]
    fn disjoint_instance_dropped() {
        let set = big_set(vec![inst(vec![[300.0, 10.0], [350.0, 10.0], [320.0, 40.0]])]);
        assert!(crop_subset(&set, 1, CropWindow::square(0, 0)).unwrap().instances.is_empty());
    }

    #[test]
    fn window_must_fit() {
        let set = big_set(vec![]);
        assert!(crop_subset(&set, 1, CropWindow::square(200, 0)).is_err());
        assert!(crop_subset(&set, 1, CropWindow::square(144, 44)).is_ok());
        assert!(crop_subset(&set, 7, CropWindow::square(0, 0)).is_err());
    }

    proptest! {
        #[test]
        fn clipped_raster_equals_windowed_raster(
            pts in proptest::collection::vec((100.0f64..400.0, 0.0f64..300.0), 3..8),
            x0 in 0usize..144, y0 in 0usize..44,
        ) {
            let i = inst(pts.into_iter().map(|(x, y)| [x, y]).collect());
            let w = CropWindow::square(x0, y0);
            let full = rasterize_polygon(&i.amodal, 400, 300).unwrap();
            let window = BinaryMask::from_fn(256, 256, |x, y| full.get(x + x0, y + y0)).unwrap();
            match crop_instance(&i, w) {
                Some(c) => prop_assert_eq!(rasterize_polygon(&c.amodal, 256, 256).unwrap(), window),
                None => prop_assert!(window.is_empty()),
            }
        }
    }
}
