//! Attention, pooling and head blocks of the amodal segmenter, plus the
//! hybrid loss. Each block has a forward pass, a traced forward pass and an
//! analytic backward pass with respect to its input feature map.

mod bundle;
mod check;
mod gam;
mod head;
mod loss;
mod sppf;

pub use bundle::{BundleError, ParamBundle};
pub use check::{gradient_suite, BlockCheck, GRAD_TOLERANCE};
pub use gam::{
    gam_backward, gam_channel_attention, gam_forward, gam_forward_traced, gam_spatial_attention, GamParams,
    GamPlacement, GamTrace, DEFAULT_REDUCTION_RATIO, SPATIAL_KERNEL,
};
pub use head::{
    deep_head_proto_backward, deep_head_proto_forward, deep_head_proto_forward_traced, DeepHeadConfig, HeadTrace,
    DEFAULT_HEAD_IN, DEFAULT_HEAD_MID, DEFAULT_PROTO,
};
pub use loss::{
    asym_bce, asym_bce_grad, bce, ciou_loss, total_loss, AsymConfig, BBox, LossWeights, PROB_CLAMP_EPS,
};
pub use sppf::{sppf_backward, sppf_forward, sppf_forward_traced, SppfConfig, SppfTrace, DEFAULT_SPPF_KERNEL};

/// The block-level changes relative to the stock nano segmenter.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureDeltas {
    pub gam_blocks: Vec<GamPlacement>,
    pub gam_reduction_ratio: usize,
    pub sppf_kernel: usize,
    pub head_in_channels: usize,
    pub head_mid_channels: usize,
    pub mask_loss: AsymConfig,
    pub loss_weights: LossWeights,
}

impl Default for ArchitectureDeltas {
    fn default() -> Self {
        Self {
            gam_blocks: vec![GamPlacement::ReplacesC2fPsa, GamPlacement::NeckEnd],
            gam_reduction_ratio: DEFAULT_REDUCTION_RATIO,
            sppf_kernel: DEFAULT_SPPF_KERNEL,
            head_in_channels: DEFAULT_HEAD_IN,
            head_mid_channels: DEFAULT_HEAD_MID,
            mask_loss: AsymConfig::default(),
            loss_weights: LossWeights::default(),
        }
    }
}
