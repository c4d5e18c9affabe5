use crate::ndtensor::{conv2d, conv2d_backward, Result, Tensor, TensorError};
use rand::Rng;

/// Input width of the widened prototype stack (up from 256).
pub const DEFAULT_HEAD_IN: usize = 512;
/// Intermediate width (up from 32).
pub const DEFAULT_HEAD_MID: usize = 64;
/// Number of mask prototypes emitted.
pub const DEFAULT_PROTO: usize = 32;

/// Prototype stack: conv3×3(in→mid) → relu → conv3×3(mid→mid) → relu →
/// conv1×1(mid→proto). Spatial size is preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepHeadConfig {
    pub conv1_weight: Tensor,
    pub conv1_bias: Vec<f64>,
    pub conv2_weight: Tensor,
    pub conv2_bias: Vec<f64>,
    pub conv3_weight: Tensor,
    pub conv3_bias: Vec<f64>,
}

impl DeepHeadConfig {
    pub fn new(
        conv1: (Tensor, Vec<f64>),
        conv2: (Tensor, Vec<f64>),
        conv3: (Tensor, Vec<f64>),
    ) -> Result<Self> {
        let s1 = conv1.0.shape().to_vec();
        let s2 = conv2.0.shape().to_vec();
        let s3 = conv3.0.shape().to_vec();
        let ok = s1.len() == 4
            && s2.len() == 4
            && s3.len() == 4
            && s1[0] >= 1
            && s1[1] >= 1
            && s3[0] >= 1
            && s1[2..] == [3, 3]
            && s2 == [s1[0], s1[0], 3, 3]
            && s3[1..] == [s1[0], 1, 1]
            && conv1.1.len() == s1[0]
            && conv2.1.len() == s2[0]
            && conv3.1.len() == s3[0];
        if !ok {
            return Err(TensorError::Shape(format!(
                "inconsistent head layers: {s1:?} / {s2:?} / {s3:?}"
            )));
        }
        Ok(Self {
            conv1_weight: conv1.0,
            conv1_bias: conv1.1,
            conv2_weight: conv2.0,
            conv2_bias: conv2.1,
            conv3_weight: conv3.0,
            conv3_bias: conv3.1,
        })
    }

    pub fn random<R: Rng + ?Sized>(in_channels: usize, mid_channels: usize, proto_channels: usize, rng: &mut R) -> Result<Self> {
        let mut layer = |cout: usize, cin: usize, k: usize| {
            let a = 1.0 / ((cin * k * k).max(1) as f64).sqrt();
            let w = Tensor::random_uniform(&[cout, cin, k, k], -a, a, rng);
            let b = (0..cout).map(|_| rng.gen_range(-a..a)).collect::<Vec<_>>();
            (w, b)
        };
        let c1 = layer(mid_channels, in_channels, 3);
        let c2 = layer(mid_channels, mid_channels, 3);
        let c3 = layer(proto_channels, mid_channels, 1);
        Self::new(c1, c2, c3)
    }

    /// 512 → 64 → 64 → 32.
    pub fn widened<R: Rng + ?Sized>(rng: &mut R) -> Result<Self> {
        Self::random(DEFAULT_HEAD_IN, DEFAULT_HEAD_MID, DEFAULT_PROTO, rng)
    }

    pub fn in_channels(&self) -> usize {
        self.conv1_weight.shape()[1]
    }

    pub fn mid_channels(&self) -> usize {
        self.conv1_weight.shape()[0]
    }

    pub fn proto_channels(&self) -> usize {
        self.conv3_weight.shape()[0]
    }
}

#[derive(Debug, Clone)]
pub struct HeadTrace {
    pub pre1: Tensor,
    pub act1: Tensor,
    pub pre2: Tensor,
    pub act2: Tensor,
    pub output: Tensor,
}

impl HeadTrace {
    /// `(layer, shape)` after each stage.
    pub fn shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        vec![
            ("conv1", self.pre1.shape().to_vec()),
            ("relu1", self.act1.shape().to_vec()),
            ("conv2", self.pre2.shape().to_vec()),
            ("relu2", self.act2.shape().to_vec()),
            ("proto", self.output.shape().to_vec()),
        ]
    }
}

fn relu(t: &Tensor) -> Tensor {
    t.map(|v| v.max(0.0))
}

fn relu_backward(pre: &Tensor, grad: &Tensor) -> Tensor {
    let data = pre
        .data()
        .iter()
        .zip(grad.data())
        .map(|(p, g)| if *p > 0.0 { *g } else { 0.0 })
        .collect();
    Tensor::from_parts(pre.shape().to_vec(), data)
}

pub fn deep_head_proto_forward_traced(f: &Tensor, cfg: &DeepHeadConfig) -> Result<HeadTrace> {
    let (c, _, _) = f.dims3()?;
    if c != cfg.in_channels() {
        return Err(TensorError::Shape(format!(
            "head expects {} input channels, got {c}",
            cfg.in_channels()
        )));
    }
    let pre1 = conv2d(f, &cfg.conv1_weight, &cfg.conv1_bias, 1)?;
    let act1 = relu(&pre1);
    let pre2 = conv2d(&act1, &cfg.conv2_weight, &cfg.conv2_bias, 1)?;
    let act2 = relu(&pre2);
    let output = conv2d(&act2, &cfg.conv3_weight, &cfg.conv3_bias, 0)?;
    Ok(HeadTrace {
        pre1,
        act1,
        pre2,
        act2,
        output,
    })
}

pub fn deep_head_proto_forward(f: &Tensor, cfg: &DeepHeadConfig) -> Result<Tensor> {
    Ok(deep_head_proto_forward_traced(f, cfg)?.output)
}

pub fn deep_head_proto_backward(f: &Tensor, cfg: &DeepHeadConfig, grad_out: &Tensor) -> Result<Tensor> {
    let t = deep_head_proto_forward_traced(f, cfg)?;
    let g_act2 = conv2d_backward(&t.act2, &cfg.conv3_weight, 0, grad_out)?.input;
    let g_pre2 = relu_backward(&t.pre2, &g_act2);
    let g_act1 = conv2d_backward(&t.act1, &cfg.conv2_weight, 1, &g_pre2)?.input;
    let g_pre1 = relu_backward(&t.pre1, &g_act1);
    Ok(conv2d_backward(f, &cfg.conv1_weight, 1, &g_pre1)?.input)
}
