//! Global attention: channel attention followed by spatial attention, both
//! applied multiplicatively.

use crate::ndtensor::{
    combine, combine_backward, conv2d, conv2d_backward, mlp_channel, mlp_channel_backward, pool,
    pool_backward, sigmoid_backward, sigmoid_map, BottleneckPolicy, ChannelMlp, CombineOp, PoolMode,
    PoolScope, Result, Tensor, TensorError,
};
use rand::Rng;

pub const DEFAULT_REDUCTION_RATIO: usize = 16;
/// Spatial attention kernel side.
pub const SPATIAL_KERNEL: usize = 7;

/// Where a GAM block sits in the detector. Only recorded as metadata; the
/// surrounding network is not modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GamPlacement {
    NeckEnd,
    /// Stands in for the C2f-PSA block.
    ReplacesC2fPsa,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GamParams {
    pub reduction_ratio: usize,
    pub mlp: ChannelMlp,
    /// `[1, 2, 7, 7]`: input channels are (channel-avg, channel-max).
    pub spatial_weight: Tensor,
    pub spatial_bias: f64,
}

impl GamParams {
    pub fn new(reduction_ratio: usize, mlp: ChannelMlp, spatial_weight: Tensor, spatial_bias: f64) -> Result<Self> {
        let hidden = BottleneckPolicy::Clamp.hidden_width(mlp.channels(), reduction_ratio)?;
        if hidden != mlp.hidden() {
            return Err(TensorError::Param(format!(
                "MLP bottleneck is {} wide, reduction ratio {reduction_ratio} on {} channels implies {hidden}",
                mlp.hidden(),
                mlp.channels()
            )));
        }
        if spatial_weight.shape() != [1, 2, SPATIAL_KERNEL, SPATIAL_KERNEL] {
            return Err(TensorError::Shape(format!(
                "spatial kernel must be [1, 2, 7, 7], got {:?}",
                spatial_weight.shape()
            )));
        }
        if !spatial_bias.is_finite() {
            return Err(TensorError::Param("spatial bias must be finite".into()));
        }
        Ok(Self {
            reduction_ratio,
            mlp,
            spatial_weight,
            spatial_bias,
        })
    }

    pub fn zeros(channels: usize, reduction_ratio: usize) -> Result<Self> {
        Self::new(
            reduction_ratio,
            ChannelMlp::zeros(channels, reduction_ratio, BottleneckPolicy::Clamp)?,
            Tensor::zeros(&[1, 2, SPATIAL_KERNEL, SPATIAL_KERNEL]),
            0.0,
        )
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, reduction_ratio: usize, rng: &mut R) -> Result<Self> {
        let mlp = ChannelMlp::random(channels, reduction_ratio, BottleneckPolicy::Clamp, rng)?;
        let a = 1.0 / ((2 * SPATIAL_KERNEL * SPATIAL_KERNEL) as f64).sqrt();
        let spatial_weight = Tensor::random_uniform(&[1, 2, SPATIAL_KERNEL, SPATIAL_KERNEL], -a, a, rng);
        let spatial_bias = rng.gen_range(-a..a);
        Self::new(reduction_ratio, mlp, spatial_weight, spatial_bias)
    }

    pub fn channels(&self) -> usize {
        self.mlp.channels()
    }
}

/// Intermediates of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GamTrace {
    pub z_avg: Vec<f64>,
    pub z_max: Vec<f64>,
    /// Channel weights, `[C]`.
    pub channel_weights: Tensor,
    pub f2: Tensor,
    /// `[2, H, W]` concat of channel-avg and channel-max of `f2`.
    pub descriptor: Tensor,
    /// `[1, H, W]`.
    pub spatial_weights: Tensor,
    pub output: Tensor,
}

fn check_input(f: &Tensor, params: &GamParams) -> Result<()> {
    let (c, _, _) = f.dims3()?;
    if c != params.channels() {
        return Err(TensorError::Shape(format!(
            "GAM configured for {} channels, input has {c}",
            params.channels()
        )));
    }
    Ok(())
}

/// `σ(MLP(avgpool(F)) + MLP(maxpool(F)))`, one weight per channel in (0, 1).
/// The same MLP is applied to both pooled vectors.
pub fn gam_channel_attention(f1: &Tensor, params: &GamParams) -> Result<Vec<f64>> {
    Ok(channel_attention_parts(f1, params)?.2.into_data())
}

fn channel_attention_parts(f1: &Tensor, params: &GamParams) -> Result<(Vec<f64>, Vec<f64>, Tensor)> {
    check_input(f1, params)?;
    let z_avg = pool(f1, PoolMode::Avg, PoolScope::GlobalSpatial)?.into_data();
    let z_max = pool(f1, PoolMode::Max, PoolScope::GlobalSpatial)?.into_data();
    let a = mlp_channel(&z_avg, &params.mlp)?;
    let m = mlp_channel(&z_max, &params.mlp)?;
    let logits = Tensor::new(vec![a.len()], a.iter().zip(&m).map(|(x, y)| x + y).collect())?;
    Ok((z_avg, z_max, sigmoid_map(&logits)))
}

/// `σ(conv7x7([avg_c(X); max_c(X)]))`, a `[1, H, W]` map in (0, 1).
pub fn gam_spatial_attention(f2: &Tensor, params: &GamParams) -> Result<Tensor> {
    Ok(spatial_attention_parts(f2, params)?.1)
}

fn spatial_attention_parts(f2: &Tensor, params: &GamParams) -> Result<(Tensor, Tensor)> {
    f2.dims3()?;
    let avg = pool(f2, PoolMode::Avg, PoolScope::PerPixelOverChannels)?;
    let max = pool(f2, PoolMode::Max, PoolScope::PerPixelOverChannels)?;
    let descriptor = combine(&avg, &max, CombineOp::ConcatChannels)?;
    let logits = conv2d(&descriptor, &params.spatial_weight, &[params.spatial_bias], SPATIAL_KERNEL / 2)?;
    Ok((descriptor, sigmoid_map(&logits)))
}

pub fn gam_forward_traced(f1: &Tensor, params: &GamParams) -> Result<GamTrace> {
    let (z_avg, z_max, channel_weights) = channel_attention_parts(f1, params)?;
    let f2 = combine(&channel_weights, f1, CombineOp::Mul)?;
    let (descriptor, spatial_weights) = spatial_attention_parts(&f2, params)?;
    let output = combine(&spatial_weights, &f2, CombineOp::Mul)?;
    Ok(GamTrace {
        z_avg,
        z_max,
        channel_weights,
        f2,
        descriptor,
        spatial_weights,
        output,
    })
}

/// `F2 = M_C(F1) ⊗ F1`, `F3 = M_S(F2) ⊗ F2`.
pub fn gam_forward(f1: &Tensor, params: &GamParams) -> Result<Tensor> {
    Ok(gam_forward_traced(f1, params)?.output)
}

/// Gradient of a scalar objective with respect to `f1`, given its gradient
/// with respect to the GAM output.
pub fn gam_backward(f1: &Tensor, params: &GamParams, grad_out: &Tensor) -> Result<Tensor> {
    let t = gam_forward_traced(f1, params)?;
    let hw_shape = &f1.shape()[1..];

    // F3 = Ms ⊗ F2
    let (g_ms, mut g_f2) = combine_backward(&t.spatial_weights, &t.f2, CombineOp::Mul, grad_out)?;
    let g_logit_s = sigmoid_backward(&t.spatial_weights, &g_ms)?;
    let g_desc = conv2d_backward(&t.descriptor, &params.spatial_weight, SPATIAL_KERNEL / 2, &g_logit_s)?.input;
    let plane = hw_shape.iter().product::<usize>();
    let g_avg = Tensor::new(vec![1, hw_shape[0], hw_shape[1]], g_desc.data()[..plane].to_vec())?;
    let g_max = Tensor::new(vec![1, hw_shape[0], hw_shape[1]], g_desc.data()[plane..].to_vec())?;
    let via_avg = pool_backward(&t.f2, PoolMode::Avg, PoolScope::PerPixelOverChannels, &g_avg)?;
    let via_max = pool_backward(&t.f2, PoolMode::Max, PoolScope::PerPixelOverChannels, &g_max)?;
    g_f2 = combine(&combine(&g_f2, &via_avg, CombineOp::Add)?, &via_max, CombineOp::Add)?;

    // F2 = Mc ⊗ F1
    let (g_mc, g_f1_direct) = combine_backward(&t.channel_weights, f1, CombineOp::Mul, &g_f2)?;
    let g_logit_c = sigmoid_backward(&t.channel_weights, &g_mc)?;
    let g_zavg = mlp_channel_backward(&t.z_avg, &params.mlp, g_logit_c.data())?.input;
    let g_zmax = mlp_channel_backward(&t.z_max, &params.mlp, g_logit_c.data())?.input;
    let c = g_zavg.len();
    let via_zavg = pool_backward(f1, PoolMode::Avg, PoolScope::GlobalSpatial, &Tensor::new(vec![c], g_zavg)?)?;
    let via_zmax = pool_backward(f1, PoolMode::Max, PoolScope::GlobalSpatial, &Tensor::new(vec![c], g_zmax)?)?;
    combine(&combine(&g_f1_direct, &via_zavg, CombineOp::Add)?, &via_zmax, CombineOp::Add)
}
