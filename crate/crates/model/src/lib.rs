#![forbid(unsafe_code)]

//! Scale-conditioned filter generation, the upsampler family built on
//! it, the training objective, and a small reference encoder.

pub mod encoder;
pub mod hypernet;
pub mod loss;
pub mod model;
pub mod upsampler;

pub use encoder::{EncoderCfg, TinyEncoder};
pub use hypernet::{coordinate_grid, HyperNet, HyperNetCfg};
pub use loss::{total_loss, LossConfig};
pub use model::{SrModel, SrModelCfg};
pub use upsampler::{FilterBank, Variant};
