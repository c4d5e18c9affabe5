//! Binary instance masks: rasterisation, overlap, exact distance transform
//! and the maximal-clearance picking point.

mod edt;
mod raster;

pub use edt::{edt, picking_point, picking_point_with, BorderPolicy, DistanceField, PickingPoint, UNREACHABLE};
pub use raster::{rasterize_polygon, Polygon};

use crate::pgm::{self, GrayImage, PgmError};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("parameter error: {0}")]
    Param(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("mask has no background pixels and the border is neutral")]
    NoBackground,
    #[error(transparent)]
    Pgm(#[from] PgmError),
}

pub type Result<T> = std::result::Result<T, MaskError>;

/// Row-major `H×W` bitmap; `true` marks the instance.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BinaryMask {}x{}", self.width, self.height)?;
        for row in self.bits.chunks(self.width) {
            let line: String = row.iter().map(|&b| if b { '#' } else { '.' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(MaskError::Param(format!("mask must be at least 1x1, got {width}x{height}")));
        }
        Ok(Self {
            width,
            height,
            bits: vec![false; width * height],
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut m = Self::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        Ok(m)
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(MaskError::Shape(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    /// Foreground pixel count.
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    fn same_dims(&self, other: &BinaryMask) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(MaskError::Shape(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        self.same_dims(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect();
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> Result<bool> {
        self.same_dims(other)?;
        Ok(self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b))
    }

    /// Shifts the content; pixels moved off the canvas are dropped.
    pub fn translate(&self, dx: i64, dy: i64) -> BinaryMask {
        let (w, h) = (self.width as i64, self.height as i64);
        let mut out = BinaryMask {
            width: self.width,
            height: self.height,
            bits: vec![false; self.bits.len()],
        };
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = (x + dx, y + dy);
                if self.bits[(y * w + x) as usize] && (0..w).contains(&nx) && (0..h).contains(&ny) {
                    out.bits[(ny * w + nx) as usize] = true;
                }
            }
        }
        out
    }

    /// Square dilation with Chebyshev radius `r`.
    pub fn dilate(&self, r: usize) -> BinaryMask {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                if out.bits[y * self.width + x] {
                    continue;
                }
                let ys = y.saturating_sub(r)..(y + r + 1).min(self.height);
                let hit = ys.into_iter().any(|yy| {
                    (x.saturating_sub(r)..(x + r + 1).min(self.width)).any(|xx| self.get(xx, yy))
                });
                out.bits[y * self.width + x] = hit;
            }
        }
        out
    }

    /// Removes every foreground pixel within Chebyshev radius `r` of the
    /// background or the canvas edge.
    pub fn erode(&self, r: usize) -> BinaryMask {
        let mut out = self.clone();
        let (w, h) = (self.width as i64, self.height as i64);
        let r = r as i64;
        for y in 0..h {
            for x in 0..w {
                if !self.bits[(y * w + x) as usize] {
                    continue;
                }
                let keep = (-r..=r).all(|dy| {
                    (-r..=r).all(|dx| {
                        let (xx, yy) = (x + dx, y + dy);
                        (0..w).contains(&xx) && (0..h).contains(&yy) && self.bits[(yy * w + xx) as usize]
                    })
                });
                out.bits[(y * w + x) as usize] = keep;
            }
        }
        out
    }

    pub fn flip_horizontal(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y)).expect("non-empty dims")
    }

    pub fn flip_vertical(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.get(x, self.height - 1 - y)).expect("non-empty dims")
    }

    /// 8-bit image: 0 background, 255 foreground.
    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            maxval: 255,
            data: self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    /// Any non-zero sample is foreground.
    pub fn from_image(img: &GrayImage) -> Result<BinaryMask> {
        BinaryMask::from_bits(img.width, img.height, img.data.iter().map(|&v| v != 0).collect())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        pgm::encode(&self.to_image())
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<BinaryMask> {
        BinaryMask::from_image(&pgm::decode(bytes)?)
    }

    pub fn load(path: &Path) -> Result<BinaryMask> {
        let bytes = std::fs::read(path).map_err(PgmError::from)?;
        BinaryMask::from_pgm(&bytes)
    }
}

/// `|a ∩ b| / |a ∪ b|`; two empty masks overlap perfectly.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
