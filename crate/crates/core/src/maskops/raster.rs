use super::{BinaryMask, MaskError, Result};
use serde::{Deserialize, Serialize};

/// Closed ring of `(x, y)` pixel coordinates; the last vertex joins the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Polygon {
    vertices: Vec<[f64; 2]>,
}

impl TryFrom<Vec<[f64; 2]>> for Polygon {
    type Error = MaskError;

    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<[f64; 2]> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

impl Polygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(MaskError::Param(format!("polygon needs 3 vertices, got {}", vertices.len())));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(MaskError::Param("polygon has a non-finite coordinate".into()));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// Signed shoelace area; positive for counter-clockwise rings in a
    /// y-up frame.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        let mut s = 0.0;
        for i in 0..n {
            let [x0, y0] = self.vertices[i];
            let [x1, y1] = self.vertices[(i + 1) % n];
            s += x0 * y1 - x1 * y0;
        }
        s / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let [x0, y0] = self.vertices[i];
                let [x1, y1] = self.vertices[(i + 1) % n];
                (x1 - x0).hypot(y1 - y0)
            })
            .sum()
    }

    /// `[min_x, min_y, max_x, max_y]`.
    pub fn bounds(&self) -> [f64; 4] {
        self.vertices.iter().fold(
            [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
            |[a, b, c, d], &[x, y]| [a.min(x), b.min(y), c.max(x), d.max(y)],
        )
    }

    /// Applies `f` to each vertex, keeping order.
    pub fn map(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Polygon> {
        Polygon::new(self.vertices.iter().map(|&v| f(v)).collect())
    }

    /// Even-odd membership test for a single point.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let ([xi, yi], [xj, yj]) = (v[i], v[j]);
            if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }
}

/// Marks every pixel whose centre lies inside `poly` under the even-odd rule.
pub fn rasterize_polygon(poly: &Polygon, width: usize, height: usize) -> Result<BinaryMask> {
    let mut mask = BinaryMask::new(width, height)?;
    let v = poly.vertices();
    let [_, min_y, _, max_y] = poly.bounds();
    let mut xs: Vec<f64> = Vec::with_capacity(v.len());
    for y in 0..height {
        let yc = y as f64 + 0.5;
        if yc < min_y || yc > max_y {
            continue;
        }
        xs.clear();
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let ([xi, yi], [xj, yj]) = (v[i], v[j]);
            if (yi > yc) != (yj > yc) {
                xs.push((xj - xi) * (yc - yi) / (yj - yi) + xi);
            }
            j = i;
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            // centres in [span[0], span[1]), compared exactly as the point test does
            let (a, b) = (span[0], span[1]);
            let mut x = ((a - 1.5).floor().max(0.0) as usize).min(width);
            while x < width && (x as f64 + 0.5) < a {
                x += 1;
            }
            while x < width && (x as f64 + 0.5) < b {
                mask.set(x, y, true);
                x += 1;
            }
        }
    }
    Ok(mask)
}
