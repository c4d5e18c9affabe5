//! Binary PGM (`P5`) reading and writing, 8- and 16-bit.
//!
//! Writers emit the minimal header `P5\n<w> <h>\n<maxval>\n`. 16-bit samples
//! are big-endian as the format requires.

use std::io::{self, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed PGM: {0}")]
    Format(String),
}

/// A grayscale raster with samples widened to `u16`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, maxval: u16) -> Self {
        Self {
            width,
            height,
            maxval,
            data: vec![0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u16) {
        self.data[y * self.width + x] = v;
    }
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<String, PgmError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(PgmError::Format("truncated header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn decode(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos)?;
    if magic != "P5" {
        return Err(PgmError::Format(format!("expected P5 magic, found {magic:?}")));
    }
    let mut num = |what: &str| -> Result<usize, PgmError> {
        let tok = header_token(bytes, &mut pos)?;
        tok.parse()
            .map_err(|_| PgmError::Format(format!("bad {what} {tok:?}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::Format(format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(PgmError::Format(format!("maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height;
    let wide = maxval > 255;
    let need = if wide { 2 * n } else { n };
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| PgmError::Format(format!("raster truncated: need {need} bytes")))?;
    let data: Vec<u16> = if wide {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        raster.iter().map(|&b| b as u16).collect()
    };
    if let Some(v) = data.iter().find(|&&v| v as usize > maxval) {
        return Err(PgmError::Format(format!("sample {v} exceeds maxval {maxval}")));
    }
    Ok(GrayImage {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

pub fn encode(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval > 255 {
        for v in &img.data {
            out.extend_from_slice(&v.to_be_bytes());
        }
    } else {
        out.extend(img.data.iter().map(|&v| v as u8));
    }
    out
}

pub fn read<R: Read>(mut r: R) -> Result<GrayImage, PgmError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn write<W: Write>(mut w: W, img: &GrayImage) -> Result<(), PgmError> {
    w.write_all(&encode(img))?;
    Ok(())
}
