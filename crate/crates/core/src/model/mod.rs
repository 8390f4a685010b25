//! Two-stream temporal-attention network: per-segment backbone encoders, segment-wise
//! attention pooling for each modality, and a linear late-fusion head.

mod attention;
mod encoder;
mod network;

pub use attention::{weighted_mean, Attention, AttentionTrace};
pub use encoder::{Activation, BackboneEncoder, ConvCache, ConvEncoder};
pub use network::{
    predict_class, stream_embed, Framing, FusionHead, ModelOutput, Network, NetworkSpec, NetworkTrace, ParamRef,
    StreamEmbedding, StreamTrace,
};
