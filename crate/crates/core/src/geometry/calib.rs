//! Calibration text files.
//!
//! ```text
//! [intrinsics]
//! fx fy cx cy
//! [hand_eye]
//! r11 r12 r13
//! r21 r22 r23
//! r31 r32 r33
//! tx ty tz
//! [ee_to_base]
//! ...
//! ```
//!
//! Numbers may be split across lines freely; `#` starts a comment.

use super::{CameraIntrinsics, GeometryError, Result, RigidTransform};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub intrinsics: CameraIntrinsics,
    pub hand_eye: RigidTransform,
    pub ee_to_base: RigidTransform,
}

const SECTIONS: [(&str, usize); 3] = [("intrinsics", 4), ("hand_eye", 12), ("ee_to_base", 12)];

fn perr(line: usize, msg: impl Into<String>) -> GeometryError {
    GeometryError::Parse { line, msg: msg.into() }
}

fn transform(v: &[f64], line: usize) -> Result<RigidTransform> {
    RigidTransform::from_rows(
        [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]],
        [v[9], v[10], v[11]],
    )
    .map_err(|e| perr(line, e.to_string()))
}

impl Calibration {
    pub fn parse(text: &str) -> Result<Self> {
        // (values, header line) per section
        let mut found: [Option<(Vec<f64>, usize)>; 3] = [None, None, None];
        let mut current: Option<usize> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let idx = SECTIONS
                    .iter()
                    .position(|(n, _)| *n == name.trim())
                    .ok_or_else(|| perr(line, format!("unknown section [{name}]")))?;
                if found[idx].is_some() {
                    return Err(perr(line, format!("duplicate section [{name}]")));
                }
                found[idx] = Some((Vec::new(), line));
                current = Some(idx);
                continue;
            }
            let idx = current.ok_or_else(|| perr(line, "values before any section header"))?;
            let vals = &mut found[idx].as_mut().expect("section opened").0;
            for tok in body.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| perr(line, format!("not a number: {tok:?}")))?;
                if !v.is_finite() {
                    return Err(perr(line, format!("non-finite value {tok}")));
                }
                vals.push(v);
            }
        }
        let mut take = |idx: usize| -> Result<(Vec<f64>, usize)> {
            let (name, want) = SECTIONS[idx];
            let (vals, line) = found[idx]
                .take()
                .ok_or_else(|| perr(text.lines().count().max(1), format!("missing section [{name}]")))?;
            if vals.len() != want {
                return Err(perr(line, format!("[{name}] needs {want} numbers, found {}", vals.len())));
            }
            Ok((vals, line))
        };
        let (k, kl) = take(0)?;
        let (he, hl) = take(1)?;
        let (eb, el) = take(2)?;
        Ok(Self {
            intrinsics: CameraIntrinsics::new(k[0], k[1], k[2], k[3]).map_err(|e| perr(kl, e.to_string()))?,
            hand_eye: transform(&he, hl)?,
            ee_to_base: transform(&eb, el)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let k = &self.intrinsics;
        let mut s = format!("[intrinsics]\n{:?} {:?} {:?} {:?}\n", k.fx, k.fy, k.cx, k.cy);
        for (name, t) in [("hand_eye", &self.hand_eye), ("ee_to_base", &self.ee_to_base)] {
            s.push_str(&format!("[{name}]\n"));
            let r = t.rotation();
            for i in 0..3 {
                s.push_str(&format!("{:?} {:?} {:?}\n", r[(i, 0)], r[(i, 1)], r[(i, 2)]));
            }
            let v = t.translation_vector();
            s.push_str(&format!("{:?} {:?} {:?}\n", v.x, v.y, v.z));
        }
        s
    }
}
