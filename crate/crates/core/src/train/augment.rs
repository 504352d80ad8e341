use alloc::vec::Vec;

use crate::config::SpecAugmentConfig;
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

/// A zeroed rectangle: `(batch, first channel, channel count, first frame,
/// frame count)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskRect {
    pub batch: usize,
    pub channel: usize,
    pub channels: usize,
    pub frame: usize,
    pub frames: usize,
}

fn draw_band(rng: &mut Rng, width_max: usize, dim: usize) -> (usize, usize) {
    // a band never covers the whole axis
    let width = rng.range_inclusive(0, width_max).min(dim.saturating_sub(1));
    let start = rng.range_inclusive(0, dim - width);
    (start, width)
}

/// SpecAugment with independent masks per batch item. Frequency bands span
/// every valid frame; time bands span every channel. Time masks stay inside
/// the item's valid length.
pub fn spec_augment<F: Real>(
    features: &Tensor<F>,
    cfg: &SpecAugmentConfig,
    lengths: Option<&[usize]>,
    rng: &mut Rng,
) -> (Tensor<F>, Vec<MaskRect>) {
    let mut out = features.clone();
    let mut rects = Vec::new();
    let channels = features.channels();
    for b in 0..features.batch() {
        let len = lengths.map_or(features.time(), |l| l[b]);
        for _ in 0..cfg.freq_masks {
            let (start, width) = draw_band(rng, cfg.freq_width_max, channels);
            rects.push(MaskRect {
                batch: b,
                channel: start,
                channels: width,
                frame: 0,
                frames: len,
            });
        }
        for _ in 0..cfg.time_masks {
            let (start, width) = draw_band(rng, cfg.time_width_max, len);
            rects.push(MaskRect {
                batch: b,
                channel: 0,
                channels,
                frame: start,
                frames: width,
            });
        }
    }
    for r in &rects {
        for c in r.channel..r.channel + r.channels {
            out.row_mut(r.batch, c)[r.frame..r.frame + r.frames]
                .iter_mut()
                .for_each(|v| *v = F::zero());
        }
    }
    (out, rects)
}
