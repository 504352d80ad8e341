//! Building blocks of the network: separable units, residual blocks, SE,
//! towers, downsampling, prologue and epilogue.

mod layers;
mod receptive;
mod residual;
mod se;
mod stem;
mod tower;

pub use layers::{BatchNorm, Conv, SepUnit, SepUnitCache};
pub use receptive::{conv_path, receptive_field, receptive_field_of, ConvStep};
pub use residual::{BlockConfig, QuartzBlock, QuartzBlockCache};
pub use se::{SeCache, SeConfig, SeModule};
pub use stem::{to_log_probs, Downsample, DownsampleCache, Epilogue, EpilogueCache, Prologue};
pub use tower::{Tower, TowerCache};
