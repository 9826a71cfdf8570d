//! Enhanced residual back-projection network.
//!
//! Shallow features pass through alternating up-projection and downsampling
//! units, each fed by a sequential fusion of every earlier map of its
//! domain. The fused HR maps are reduced to one channel and added to the
//! bicubic upsampling of the input.

mod adam;
mod layers;
mod model;
mod tensor;
mod train;

pub use adam::{adam_step, AdamState};
pub use layers::{
    conv2d, conv2d_backward, conv_output_size, deconv2d, deconv2d_backward, deconv_output_size, prelu,
    prelu_backward, ConvGrads, LayerCache, LayerKind, LayerParams, INITIAL_SLOPE,
};
pub use model::{
    downsample_unit, erbpn_forward, erbpn_forward_unclipped, sff, sff_backward, sff_forward, sff_layers,
    stage_geometry, up_projection_unit, ErbpnConfig, ErbpnModel, ForwardTape, UpCache, UpUnit,
};
pub use tensor::Tensor4;
pub use train::{
    augment, bicubic_pairs, crop_pairs, lorig_pairs, loss_curve_csv, mse_loss, train, train_from, write_loss_curve,
    LossRecord, TrainConfig, TrainOutcome, TrainingData, TrainingPair,
};
