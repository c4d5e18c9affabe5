//! Seeded geometric and photometric augmentation. Geometry acts on polygon
//! vertices and on the pixel grid alike; exposure and noise touch pixels only.

use super::clip::clip_polygon;
use super::{DatasetError, InstanceEntry, Result};
use crate::maskops::{BinaryMask, Polygon};
use crate::pgm::GrayImage;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSpec {
    pub hflip: bool,
    pub vflip: bool,
    /// Rotation drawn from `[-max, max]` degrees.
    pub max_rotation_deg: f64,
    pub max_shear_deg: f64,
    /// Exposure gain drawn from `1 ± max`.
    pub max_exposure: f64,
    /// Salt-and-pepper on up to this fraction of pixels.
    pub max_noise_fraction: f64,
    pub variants_per_image: usize,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            hflip: true,
            vflip: true,
            max_rotation_deg: 15.0,
            max_shear_deg: 10.0,
            max_exposure: 0.15,
            max_noise_fraction: 0.0145,
            variants_per_image: 2,
            seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64, hi: f64| {
            if (0.0..=hi).contains(&v) {
                Ok(())
            } else {
                Err(DatasetError::Param(format!("{name} = {v} outside [0, {hi}]")))
            }
        };
        check("max_rotation_deg", self.max_rotation_deg, 15.0)?;
        check("max_shear_deg", self.max_shear_deg, 10.0)?;
        check("max_exposure", self.max_exposure, 0.15)?;
        check("max_noise_fraction", self.max_noise_fraction, 0.0145)
    }
}

/// `p ↦ A·p + t` on pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub a: [[f64; 2]; 2],
    pub t: [f64; 2],
}

impl AffineMap {
    pub fn identity() -> Self {
        Self {
            a: [[1.0, 0.0], [0.0, 1.0]],
            t: [0.0, 0.0],
        }
    }

    pub fn hflip(width: usize) -> Self {
        Self {
            a: [[-1.0, 0.0], [0.0, 1.0]],
            t: [width as f64, 0.0],
        }
    }

    pub fn vflip(height: usize) -> Self {
        Self {
            a: [[1.0, 0.0], [0.0, -1.0]],
            t: [0.0, height as f64],
        }
    }

    fn about(c: [f64; 2], a: [[f64; 2]; 2]) -> Self {
        let ac = [a[0][0] * c[0] + a[0][1] * c[1], a[1][0] * c[0] + a[1][1] * c[1]];
        Self {
            a,
            t: [c[0] - ac[0], c[1] - ac[1]],
        }
    }

    pub fn rotation(center: [f64; 2], deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self::about(center, [[c, -s], [s, c]])
    }

    /// Horizontal shear `x += tan(deg)·(y − cy)`.
    pub fn shear_x(center: [f64; 2], deg: f64) -> Self {
        Self::about(center, [[1.0, deg.to_radians().tan()], [0.0, 1.0]])
    }

    /// `self` first, then `next`.
    pub fn then(&self, next: &AffineMap) -> AffineMap {
        let (a, b) = (next.a, self.a);
        AffineMap {
            a: [
                [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
                [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
            ],
            t: next.apply(self.t),
        }
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        let [[a, b], [c, d]] = self.a;
        let det = a * d - b * c;
        if det.abs() < 1e-12 {
            return Err(DatasetError::Param("singular affine map".into()));
        }
        let inv = [[d / det, -b / det], [-c / det, a / det]];
        let t = [
            -(inv[0][0] * self.t[0] + inv[0][1] * self.t[1]),
            -(inv[1][0] * self.t[0] + inv[1][1] * self.t[1]),
        ];
        Ok(AffineMap { a: inv, t })
    }

    pub fn apply(&self, [x, y]: [f64; 2]) -> [f64; 2] {
        [
            self.a[0][0] * x + self.a[0][1] * y + self.t[0],
            self.a[1][0] * x + self.a[1][1] * y + self.t[1],
        ]
    }

    pub fn apply_polygon(&self, p: &Polygon) -> Polygon {
        p.map(|v| self.apply(v)).expect("affine image of finite vertices is finite")
    }

    /// Nearest-neighbour pull-back of every output pixel centre; samples
    /// from outside the source read as `fill`.
    fn pull<T: Copy>(&self, w: usize, h: usize, fill: T, src: impl Fn(usize, usize) -> T) -> Result<Vec<T>> {
        let inv = self.inverse()?;
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let [sx, sy] = inv.apply([x as f64 + 0.5, y as f64 + 0.5]);
                let (fx, fy) = (sx.floor(), sy.floor());
                out.push(if fx >= 0.0 && fy >= 0.0 && fx < w as f64 && fy < h as f64 {
                    src(fx as usize, fy as usize)
                } else {
                    fill
                });
            }
        }
        Ok(out)
    }

    pub fn warp_image(&self, img: &GrayImage) -> Result<GrayImage> {
        let data = self.pull(img.width, img.height, 0, |x, y| img.get(x, y))?;
        Ok(GrayImage { data, ..img.clone() })
    }

    pub fn warp_mask(&self, m: &BinaryMask) -> Result<BinaryMask> {
        let bits = self.pull(m.width(), m.height(), false, |x, y| m.get(x, y))?;
        Ok(BinaryMask::from_bits(m.width(), m.height(), bits)?)
    }
}

/// An image with its instances in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: GrayImage,
    pub instances: Vec<InstanceEntry>,
}

impl Sample {
    /// Applies `map` to pixels and outlines, clipping outlines to the canvas.
    pub fn transformed(&self, map: &AffineMap) -> Result<Sample> {
        let (w, h) = (self.image.width as f64, self.image.height as f64);
        let fit = |p: &Polygon| clip_polygon(&map.apply_polygon(p), 0.0, 0.0, w, h);
        let instances = self
            .instances
            .iter()
            .filter_map(|inst| {
                Some(InstanceEntry {
                    amodal: fit(&inst.amodal)?,
                    visible: inst.visible.as_ref().and_then(fit),
                    ..inst.clone()
                })
            })
            .collect();
        Ok(Sample {
            image: map.warp_image(&self.image)?,
            instances,
        })
    }
}

fn variant(sample: &Sample, spec: &AugmentSpec, rng: &mut ChaCha8Rng) -> Result<Sample> {
    let (w, h) = (sample.image.width, sample.image.height);
    let center = [w as f64 / 2.0, h as f64 / 2.0];
    let sym = |rng: &mut ChaCha8Rng, m: f64| if m > 0.0 { rng.gen_range(-m..=m) } else { 0.0 };
    let mut map = AffineMap::identity();
    if spec.hflip && rng.gen_bool(0.5) {
        map = map.then(&AffineMap::hflip(w));
    }
    if spec.vflip && rng.gen_bool(0.5) {
        map = map.then(&AffineMap::vflip(h));
    }
    let angle = sym(rng, spec.max_rotation_deg);
    let shear = sym(rng, spec.max_shear_deg);
    map = map
        .then(&AffineMap::rotation(center, angle))
        .then(&AffineMap::shear_x(center, shear));
    let mut out = sample.transformed(&map)?;

    let gain = 1.0 + sym(rng, spec.max_exposure);
    let maxval = out.image.maxval;
    for v in &mut out.image.data {
        *v = (*v as f64 * gain).round().clamp(0.0, maxval as f64) as u16;
    }
    let fraction = if spec.max_noise_fraction > 0.0 {
        rng.gen_range(0.0..=spec.max_noise_fraction)
    } else {
        0.0
    };
    let n = out.image.data.len();
    let k = (fraction * n as f64).floor() as usize;
    for i in index::sample(rng, n, k) {
        out.image.data[i] = if rng.gen_bool(0.5) { maxval } else { 0 };
    }
    Ok(out)
}

fn augment_stream(sample: &Sample, spec: &AugmentSpec, stream: u64) -> Result<Vec<Sample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let mut out = Vec::with_capacity(spec.variants_per_image + 1);
    out.push(sample.clone());
    for _ in 0..spec.variants_per_image {
        out.push(variant(sample, spec, &mut rng)?);
    }
    Ok(out)
}

/// The original followed by `variants_per_image` augmented copies.
pub fn augment(sample: &Sample, spec: &AugmentSpec) -> Result<Vec<Sample>> {
    augment_stream(sample, spec, 0)
}

/// `augment` over a list; sample `i` draws from its own random stream.
pub fn augment_all(samples: &[Sample], spec: &AugmentSpec) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(samples.len() * (spec.variants_per_image + 1));
    for (i, s) in samples.iter().enumerate() {
        out.extend(augment_stream(s, spec, i as u64)?);
    }
    Ok(out)
}
