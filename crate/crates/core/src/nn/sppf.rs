use crate::ndtensor::{
    combine, conv2d, conv2d_backward, pool, pool_backward, CombineOp, PoolMode, PoolScope, Result, Tensor,
    TensorError,
};
use rand::Rng;

/// Widened pooling kernel of the modified backbone.
pub const DEFAULT_SPPF_KERNEL: usize = 7;

/// Spatial pyramid pooling (fast): 1×1 entry conv, three sequential
/// `k×k` max-pools sharing one kernel size, channel concat, 1×1 exit conv.
#[derive(Debug, Clone, PartialEq)]
pub struct SppfConfig {
    pub kernel: usize,
    /// `[hidden, in, 1, 1]`.
    pub entry_weight: Tensor,
    pub entry_bias: Vec<f64>,
    /// `[out, 4·hidden, 1, 1]`.
    pub exit_weight: Tensor,
    pub exit_bias: Vec<f64>,
}

impl SppfConfig {
    pub fn new(
        kernel: usize,
        entry_weight: Tensor,
        entry_bias: Vec<f64>,
        exit_weight: Tensor,
        exit_bias: Vec<f64>,
    ) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(TensorError::Param(format!("SPPF kernel must be odd, got {kernel}")));
        }
        let &[hidden, inc, 1, 1] = entry_weight.shape() else {
            return Err(TensorError::Shape(format!(
                "entry conv must be [hidden, in, 1, 1], got {:?}",
                entry_weight.shape()
            )));
        };
        let &[out, cat, 1, 1] = exit_weight.shape() else {
            return Err(TensorError::Shape(format!(
                "exit conv must be [out, 4·hidden, 1, 1], got {:?}",
                exit_weight.shape()
            )));
        };
        if hidden == 0 || inc == 0 || out == 0 || cat != 4 * hidden || entry_bias.len() != hidden || exit_bias.len() != out {
            return Err(TensorError::Shape(format!(
                "inconsistent SPPF widths: entry {:?} (+{} bias), exit {:?} (+{} bias)",
                entry_weight.shape(),
                entry_bias.len(),
                exit_weight.shape(),
                exit_bias.len()
            )));
        }
        Ok(Self {
            kernel,
            entry_weight,
            entry_bias,
            exit_weight,
            exit_bias,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        kernel: usize,
        in_channels: usize,
        hidden_channels: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let a = 1.0 / (in_channels.max(1) as f64).sqrt();
        let b = 1.0 / ((4 * hidden_channels).max(1) as f64).sqrt();
        Self::new(
            kernel,
            Tensor::random_uniform(&[hidden_channels, in_channels, 1, 1], -a, a, rng),
            (0..hidden_channels).map(|_| rng.gen_range(-a..a)).collect(),
            Tensor::random_uniform(&[out_channels, 4 * hidden_channels, 1, 1], -b, b, rng),
            (0..out_channels).map(|_| rng.gen_range(-b..b)).collect(),
        )
    }

    /// Both 1×1 convs average their inputs with zero bias, so a constant
    /// plane passes through unchanged.
    pub fn averaging(kernel: usize, in_channels: usize, hidden_channels: usize, out_channels: usize) -> Result<Self> {
        let cat = 4 * hidden_channels;
        Self::new(
            kernel,
            Tensor::full(&[hidden_channels, in_channels, 1, 1], 1.0 / in_channels.max(1) as f64)?,
            vec![0.0; hidden_channels],
            Tensor::full(&[out_channels, cat, 1, 1], 1.0 / cat.max(1) as f64)?,
            vec![0.0; out_channels],
        )
    }

    pub fn in_channels(&self) -> usize {
        self.entry_weight.shape()[1]
    }

    pub fn hidden_channels(&self) -> usize {
        self.entry_weight.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.exit_weight.shape()[0]
    }
}

#[derive(Debug, Clone)]
pub struct SppfTrace {
    /// Entry conv output followed by the three pooled stages.
    pub stages: [Tensor; 4],
    pub concat: Tensor,
    pub output: Tensor,
}

pub fn sppf_forward_traced(f: &Tensor, cfg: &SppfConfig) -> Result<SppfTrace> {
    if cfg.kernel % 2 == 0 {
        return Err(TensorError::Param(format!("SPPF kernel must be odd, got {}", cfg.kernel)));
    }
    let x0 = conv2d(f, &cfg.entry_weight, &cfg.entry_bias, 0)?;
    let scope = PoolScope::Window(cfg.kernel);
    let x1 = pool(&x0, PoolMode::Max, scope)?;
    let x2 = pool(&x1, PoolMode::Max, scope)?;
    let x3 = pool(&x2, PoolMode::Max, scope)?;
    let concat = combine(
        &combine(&combine(&x0, &x1, CombineOp::ConcatChannels)?, &x2, CombineOp::ConcatChannels)?,
        &x3,
        CombineOp::ConcatChannels,
    )?;
    let output = conv2d(&concat, &cfg.exit_weight, &cfg.exit_bias, 0)?;
    Ok(SppfTrace {
        stages: [x0, x1, x2, x3],
        concat,
        output,
    })
}

pub fn sppf_forward(f: &Tensor, cfg: &SppfConfig) -> Result<Tensor> {
    Ok(sppf_forward_traced(f, cfg)?.output)
}

pub fn sppf_backward(f: &Tensor, cfg: &SppfConfig, grad_out: &Tensor) -> Result<Tensor> {
    let t = sppf_forward_traced(f, cfg)?;
    let g_cat = conv2d_backward(&t.concat, &cfg.exit_weight, 0, grad_out)?.input;
    let stage_len = t.stages[0].len();
    let shape = t.stages[0].shape().to_vec();
    let part = |i: usize| Tensor::new(shape.clone(), g_cat.data()[i * stage_len..(i + 1) * stage_len].to_vec());
    let scope = PoolScope::Window(cfg.kernel);
    // walk the pooling chain backwards, accumulating the concat branch at each stage
    let mut g = part(3)?;
    for i in (0..3).rev() {
        let through_pool = pool_backward(&t.stages[i], PoolMode::Max, scope, &g)?;
        g = combine(&through_pool, &part(i)?, CombineOp::Add)?;
    }
    Ok(conv2d_backward(f, &cfg.entry_weight, 0, &g)?.input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndtensor::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_input_passes_through_averaging_convs() {
        for c in [-2.5, 0.0, 1.25] {
            let cfg = SppfConfig::averaging(7, 3, 2, 5).unwrap();
            let out = sppf_forward(&Tensor::full(&[3, 6, 6], c).unwrap(), &cfg).unwrap();
            assert_eq!(out.shape(), &[5, 6, 6]);
            assert!(out.data().iter().all(|&v| (v - c).abs() < 1e-12), "c = {c}");
        }
    }

    #[test]
    fn impulse_support_grows_by_kernel_radius_per_stage() {
        let cfg = SppfConfig::averaging(7, 1, 1, 1).unwrap();
        let x = Tensor::zeros(&[1, 31, 31]).with_value(15 * 31 + 15, 1.0);
        let t = sppf_forward_traced(&x, &cfg).unwrap();
        // brute-force sequential pooling oracle
        let mut cur: Vec<f64> = x.data().to_vec();
        for stage in 1..=3 {
            let mut next = vec![0.0; cur.len()];
            for y in 0..31i64 {
                for xx in 0..31i64 {
                    let mut m = f64::MIN;
                    for dy in -3..=3 {
                        for dx in -3..=3 {
                            let (yy, xi) = (y + dy, xx + dx);
                            if (0..31).contains(&yy) && (0..31).contains(&xi) {
                                m = m.max(cur[(yy * 31 + xi) as usize]);
                            }
                        }
                    }
                    next[(y * 31 + xx) as usize] = m;
                }
            }
            cur = next;
            assert_eq!(t.stages[stage].data(), cur.as_slice());
        }
        for y in 0..31usize {
            for xx in 0..31usize {
                let cheb = y.abs_diff(15).max(xx.abs_diff(15));
                let expected = if cheb <= 9 { 1.0 } else { 0.0 };
                assert_eq!(t.stages[3].at3(0, y, xx), expected);
            }
        }
    }

    #[test]
    fn output_channels_follow_config() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let cfg = SppfConfig::random(5, 4, 3, 11, &mut r).unwrap();
        let x = Tensor::random_uniform(&[4, 5, 7], -1.0, 1.0, &mut r);
        assert_eq!(sppf_forward(&x, &cfg).unwrap().shape(), &[11, 5, 7]);
        assert_eq!(cfg.out_channels(), 11);
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(matches!(SppfConfig::averaging(6, 1, 1, 1), Err(TensorError::Param(_))));
        let mut cfg = SppfConfig::averaging(5, 1, 1, 1).unwrap();
        cfg.kernel = 4;
        assert!(matches!(
            sppf_forward(&Tensor::zeros(&[1, 4, 4]), &cfg),
            Err(TensorError::Param(_))
        ));
    }

    #[test]
    fn kernel_size_irrelevant_for_constant_planes() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let mut c5 = SppfConfig::random(5, 3, 2, 4, &mut r).unwrap();
        c5.kernel = 5;
        let mut c7 = c5.clone();
        c7.kernel = 7;
        for c in [-3.0, 0.4] {
            let x = Tensor::full(&[3, 8, 8], c).unwrap();
            assert_eq!(sppf_forward(&x, &c5).unwrap(), sppf_forward(&x, &c7).unwrap());
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let cfg = SppfConfig::random(7, 8, 4, 8, &mut r).unwrap();
        let x = Tensor::random_uniform(&[8, 6, 6], -1.0, 1.0, &mut r);
        let up = Tensor::random_uniform(&[8, 6, 6], -1.0, 1.0, &mut r);
        let f = |t: &Tensor| {
            let out = sppf_forward(t, &cfg)?;
            let v = out.data().iter().zip(up.data()).map(|(a, b)| a * b).sum();
            Ok((v, sppf_backward(t, &cfg, &up)?))
        };
        let rep = grad_check(f, &x, 1e-6, 1e-5).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}
