//! Exact squared Euclidean distance transform (separable lower envelope of
//! parabolas) and the picking point derived from it.

use super::{BinaryMask, MaskError, Result};
use serde::Serialize;

/// Field value for a pixel with no background anywhere in reach.
pub const UNREACHABLE: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BorderPolicy {
    /// Everything outside the image is background.
    #[default]
    BorderIsBackground,
    /// Outside the image is neither foreground nor background.
    BorderIsNeutral,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    policy: BorderPolicy,
    sq: Vec<u64>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn policy(&self) -> BorderPolicy {
        self.policy
    }

    /// Squared distances, row-major.
    pub fn values(&self) -> &[u64] {
        &self.sq
    }

    pub fn squared(&self, x: usize, y: usize) -> u64 {
        self.sq[y * self.width + x]
    }

    pub fn distance(&self, x: usize, y: usize) -> f64 {
        match self.squared(x, y) {
            UNREACHABLE => f64::INFINITY,
            v => (v as f64).sqrt(),
        }
    }
}

const INF: i64 = i64::MAX;

/// One-dimensional pass: `out[q] = min_p (q − p)² + f[p]` over finite sites,
/// plus zero-valued sites at `-1` and `n` when `ring` is set.
fn envelope_1d(f: &[i64], ring: bool, out: &mut [i64], v: &mut Vec<(i64, i64)>, z: &mut Vec<f64>) {
    let n = f.len() as i64;
    v.clear();
    z.clear();
    let sites = ring
        .then_some((-1, 0))
        .into_iter()
        .chain(f.iter().enumerate().filter(|(_, &fv)| fv != INF).map(|(p, &fv)| (p as i64, fv)))
        .chain(ring.then_some((n, 0)));
    for (p, fp) in sites {
        loop {
            let Some(&(vq, fq)) = v.last() else { break };
            let s = ((fp + p * p) - (fq + vq * vq)) as f64 / (2 * (p - vq)) as f64;
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                z.push(s);
                break;
            }
        }
        if v.is_empty() {
            z.push(f64::NEG_INFINITY);
        }
        v.push((p, fp));
    }
    if v.is_empty() {
        out.fill(INF);
        return;
    }
    z.push(f64::INFINITY);
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let (p, fp) = v[k];
        let d = q as i64 - p;
        *o = d * d + fp;
    }
}

pub fn edt(mask: &BinaryMask, policy: BorderPolicy) -> DistanceField {
    let (w, h) = (mask.width(), mask.height());
    let ring = policy == BorderPolicy::BorderIsBackground;
    let mut g = vec![INF; w * h];
    let (mut v, mut z) = (Vec::new(), Vec::new());

    let mut col = vec![0i64; h];
    let mut col_out = vec![0i64; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = if mask.get(x, y) { INF } else { 0 };
        }
        envelope_1d(&col, ring, &mut col_out, &mut v, &mut z);
        for y in 0..h {
            g[y * w + x] = col_out[y];
        }
    }

    let mut row_out = vec![0i64; w];
    let mut sq = vec![0u64; w * h];
    for y in 0..h {
        envelope_1d(&g[y * w..(y + 1) * w], ring, &mut row_out, &mut v, &mut z);
        for x in 0..w {
            sq[y * w + x] = if row_out[x] == INF { UNREACHABLE } else { row_out[x] as u64 };
        }
    }
    DistanceField {
        width: w,
        height: h,
        policy,
        sq,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PickingPoint {
    pub x: usize,
    pub y: usize,
    pub clearance: f64,
}

pub fn picking_point(mask: &BinaryMask) -> Result<PickingPoint> {
    picking_point_with(mask, BorderPolicy::default())
}

/// Foreground pixel of maximal clearance; ties go to the smallest row, then
/// the smallest column.
pub fn picking_point_with(mask: &BinaryMask, policy: BorderPolicy) -> Result<PickingPoint> {
    if mask.is_empty() {
        return Err(MaskError::EmptyMask);
    }
    let field = edt(mask, policy);
    let w = mask.width();
    let mut best: Option<(usize, u64)> = None;
    for (i, (&fg, &d)) in mask.bits().iter().zip(field.values()).enumerate() {
        if fg && best.is_none_or(|(_, bd)| d > bd) {
            best = Some((i, d));
        }
    }
    let (i, d) = best.expect("non-empty mask");
    if d == UNREACHABLE {
        return Err(MaskError::NoBackground);
    }
    Ok(PickingPoint {
        x: i % w,
        y: i / w,
        clearance: (d as f64).sqrt(),
    })
}
