//! Mega-blocks of parallel towers, tower dropout, tower masks and the
//! full model.
//!
//! Training weights each tower output by `Bernoulli(1 - p) / (1 - p)`, so
//! the expected mega-block output is the plain sum of all towers. At
//! inference a [`TowerMask`] removes towers; [`AggregationMode`] decides
//! how the kept outputs are weighted.

pub mod cost;
mod mask;
mod megablock;
mod model;

pub use cost::{breakdown, flop_count, param_count, ComponentCost};
pub use mask::TowerMask;
pub use megablock::{
    sample_tower_weights, weighted_sum, AggregationMode, MegaBlock, MegaBlockCache,
};
pub use model::{MaskedModel, Model, ModelCache};
