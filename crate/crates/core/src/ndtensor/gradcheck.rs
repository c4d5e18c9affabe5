//! Central-difference verification of analytic gradients.

use super::{Result, Tensor, TensorError};

/// Denominator floor of the per-element relative error. Below this gradient
/// magnitude the comparison degrades gracefully to an absolute one, so that
/// round-off in `f` (≈ ulp(f)/eps) cannot dominate near-zero entries.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub n_elements: usize,
    pub tolerance: f64,
    /// `max_rel_err <= tolerance`.
    pub pass: bool,
}

/// `(f(x + eps·e_i) - f(x - eps·e_i)) / 2eps` for a single coordinate.
pub fn central_difference<F>(f: &F, x: &Tensor, index: usize, eps: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    let v = x.data()[index];
    let plus = f(&x.with_value(index, v + eps))?;
    let minus = f(&x.with_value(index, v - eps))?;
    if !plus.is_finite() || !minus.is_finite() {
        return Err(TensorError::Eval(format!(
            "objective is not finite around flat index {index}"
        )));
    }
    Ok((plus - minus) / (2.0 * eps))
}

/// Checks every coordinate of `x`. `f` returns the objective value and its
/// analytic gradient with respect to `x`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    let all: Vec<usize> = (0..x.len()).collect();
    grad_check_at(f, x, eps, tolerance, &all)
}

/// Like [`grad_check`] but probes only the listed flat indices; used where a
/// full sweep over a wide input would be needlessly slow.
pub fn grad_check_at<F>(f: F, x: &Tensor, eps: f64, tolerance: f64, indices: &[usize]) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(TensorError::Param(format!("finite-difference step must be positive, got {eps}")));
    }
    let (value, analytic) = f(x)?;
    if !value.is_finite() {
        return Err(TensorError::Eval("objective is not finite at the base point".into()));
    }
    if analytic.shape() != x.shape() {
        return Err(TensorError::Shape(format!(
            "analytic gradient {:?} does not match input {:?}",
            analytic.shape(),
            x.shape()
        )));
    }
    let scalar = |t: &Tensor| f(t).map(|(v, _)| v);
    let mut max_abs_err: f64 = 0.0;
    let mut max_rel_err: f64 = 0.0;
    for &i in indices {
        if i >= x.len() {
            return Err(TensorError::Shape(format!("probe index {i} out of range {}", x.len())));
        }
        let numeric = central_difference(&scalar, x, i, eps)?;
        let a = analytic.data()[i];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
        max_abs_err = max_abs_err.max(abs);
        max_rel_err = max_rel_err.max(rel);
    }
    Ok(GradCheckReport {
        max_abs_err,
        max_rel_err,
        n_elements: indices.len(),
        tolerance,
        pass: max_rel_err <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_function_has_zero_gradients() {
        let x = Tensor::from_fn(&[2, 3, 3], |i| i as f64).unwrap();
        let rep = grad_check(|t| Ok((4.2, Tensor::zeros(t.shape()))), &x, 1e-5, 1e-9).unwrap();
        assert_eq!(rep.max_abs_err, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn detects_wrong_gradient() {
        let x = Tensor::from_fn(&[4], |i| i as f64 + 1.0).unwrap();
        let f = |t: &Tensor| {
            let v = t.data().iter().map(|a| a * a).sum();
            Ok((v, t.clone()))
        };
        let rep = grad_check(f, &x, 1e-5, 1e-6).unwrap();
        assert!(!rep.pass);
        assert!((rep.max_rel_err - 0.5).abs() < 1e-6);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let x = Tensor::from_fn(&[2], |i| i as f64).unwrap();
        let f = |t: &Tensor| Ok((t.data()[0].ln() + 0.0 * t.data()[1], Tensor::zeros(&[2])));
        assert!(matches!(grad_check(f, &x, 1e-5, 1e-6), Err(TensorError::Eval(_))));
    }

    #[test]
    fn sampled_probe_checks_only_requested_indices() {
        let x = Tensor::from_fn(&[10], |i| i as f64).unwrap();
        let f = |t: &Tensor| Ok((t.sum(), Tensor::full(t.shape(), 1.0)?));
        let rep = grad_check_at(f, &x, 1e-5, 1e-8, &[1, 5, 9]).unwrap();
        assert_eq!(rep.n_elements, 3);
        assert!(rep.pass);
        assert!(grad_check_at(f, &x, 1e-5, 1e-8, &[10]).is_err());
    }
}
