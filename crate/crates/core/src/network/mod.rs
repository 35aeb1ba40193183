//! Depth and pose networks.

pub mod blocks;
pub mod checkpoint;
pub mod decoder;
pub mod depthnet;
pub mod encoder;
pub mod posenet;

use burn::module::Module;
use burn::tensor::backend::Backend;

pub use blocks::{conv_forward, ChannelAttention};
pub use checkpoint::{Checkpoint, CheckpointManifest};
pub use decoder::{DisparityHead, ExtractBlock, FusionDecoder, FusionGrid, FusionNode, NodeId};
pub use depthnet::{DepthNet, DepthNetConfig};
pub use encoder::{Encoder, EncoderKind, PYRAMID_LEVELS};
pub use posenet::PoseNet;

use crate::error::Result;

/// Everything that is trained jointly.
#[derive(Module, Debug)]
pub struct DepthPoseModel<B: Backend> {
    pub depth: DepthNet<B>,
    pub pose: PoseNet<B>,
}

impl<B: Backend> DepthPoseModel<B> {
    pub fn new(config: &DepthNetConfig, device: &B::Device) -> Result<Self> {
        Ok(Self {
            depth: config.init(device)?,
            pose: PoseNet::new(device),
        })
    }
}
