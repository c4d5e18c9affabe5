//! Minimal dense `f64` arrays and the differentiable kernels used by the
//! attention and loss blocks.
//!
//! Every op is a pure function on borrowed tensors. Differentiable ops come
//! with a `*_backward` companion that maps an upstream gradient back onto the
//! op's inputs; [`grad_check`] compares those against central differences.

mod gradcheck;
mod mlp;
mod ops;

pub use gradcheck::{central_difference, grad_check, grad_check_at, GradCheckReport, REL_ERR_FLOOR};
pub use mlp::{mlp_channel, mlp_channel_backward, BottleneckPolicy, ChannelMlp, MlpGrads};
pub use ops::{
    combine, combine_backward, conv2d, conv2d_backward, pool, pool_backward, sigmoid,
    sigmoid_backward, sigmoid_map, CombineOp, ConvGrads, PoolMode, PoolScope,
};

use rand::Rng;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("tensor text line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major array. Feature maps are `[C, H, W]`, convolution kernels
/// `[Cout, Cin, k, k]`, channel vectors `[C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting length mismatches and non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(index));
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for op outputs whose length is correct by
    /// construction.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_parts(shape.to_vec(), vec![0.0; shape.iter().product()])
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        Self::new(shape.to_vec(), vec![value; shape.iter().product()])
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), (0..n).map(f).collect())
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn random_uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// `(C, H, W)` of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            other => Err(TensorError::Shape(format!("expected [C, H, W], got {other:?}"))),
        }
    }

    pub fn at3(&self, c: usize, y: usize, x: usize) -> f64 {
        let (_, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x]
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.len() {
            return Err(TensorError::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self::from_parts(shape.to_vec(), self.data.clone()))
    }

    /// Copy with one element replaced; used by finite-difference probes.
    pub fn with_value(&self, index: usize, value: f64) -> Tensor {
        let mut out = self.clone();
        out.data[index] = value;
        out
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// Flat text: a header line with the dimensions, then the values.
    /// Values use the shortest round-trip representation.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
        out.push_str(&header.join(" "));
        out.push('\n');
        let row = self.shape.last().copied().unwrap_or(1).max(1);
        for chunk in self.data.chunks(row) {
            let line: Vec<String> = chunk.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Tensor> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (hline, header) = lines.next().ok_or(TensorError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let shape = header
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>().map_err(|e| TensorError::Parse {
                    line: hline + 1,
                    msg: format!("bad dimension {tok:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(shape.iter().product());
        for (lno, line) in lines {
            for tok in line.split_whitespace() {
                let v = tok.parse::<f64>().map_err(|e| TensorError::Parse {
                    line: lno + 1,
                    msg: format!("bad value {tok:?}: {e}"),
                })?;
                data.push(v);
            }
        }
        Tensor::new(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_length_and_non_finite() {
        assert!(matches!(Tensor::new(vec![2, 2], vec![0.0; 3]), Err(TensorError::Shape(_))));
        assert_eq!(
            Tensor::new(vec![2], vec![0.0, f64::NAN]),
            Err(TensorError::NonFinite(1))
        );
        assert!(Tensor::full(&[1], f64::INFINITY).is_err());
    }

    #[test]
    fn dims3_requires_rank_three() {
        assert_eq!(Tensor::zeros(&[2, 3, 4]).dims3().unwrap(), (2, 3, 4));
        assert!(Tensor::zeros(&[2, 3]).dims3().is_err());
    }

    #[test]
    fn text_parse_reports_line() {
        let err = Tensor::from_text("1 1 2\n0.5 abc\n").unwrap_err();
        assert!(matches!(err, TensorError::Parse { line: 2, .. }));
        assert!(Tensor::from_text("1 1 2\n0.5\n").is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 12)) {
            let t = Tensor::new(vec![3, 2, 2], vals).unwrap();
            prop_assert_eq!(Tensor::from_text(&t.to_text()).unwrap(), t);
        }
    }
}
