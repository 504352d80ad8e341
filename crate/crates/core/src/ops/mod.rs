//! Primitive tensor ops. Each op has a forward function and an exact
//! analytic backward; composite layers in [`crate::blocks`] chain them.

mod activation;
mod conv;
mod dropout;
mod norm;
mod pool;
mod softmax;

pub use activation::{
    add, add_backward_broadcast, mul_channel, mul_channel_backward, relu, relu_backward, scale,
    sigmoid, sigmoid_backward,
};
pub use conv::{conv1d, conv1d_backward, ConvGrads, ConvSpec};
pub use dropout::{dropout, dropout_mask, Mode};
pub use norm::{
    batchnorm_eval, batchnorm_eval_backward, batchnorm_train, batchnorm_train_backward,
    BatchNormCache, BatchNormGrads, BN_EPS, BN_MOMENTUM,
};
pub use pool::{global_avg_pool_time, global_avg_pool_time_backward};
pub use softmax::{log_softmax, log_softmax_backward, softmax_from_log};
