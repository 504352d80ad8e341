//! Synthetic stand-in for labelled speech.
//!
//! Every symbol owns a fixed random pattern spanning `frames_per_symbol`
//! frames of all feature channels. An utterance is the concatenation of its
//! symbols' patterns plus Gaussian noise. Patterns are unit vectors scaled
//! by the square root of their size, so each entry has unit RMS and
//! `noise_std` reads as an inverse signal-to-noise ratio.

use alloc::vec::Vec;

use crate::config::TaskConfig;
use crate::ctc::CtcTarget;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Real, Shape, Tensor};

/// Maximum pairwise cosine similarity between two symbol patterns.
pub const MAX_PATTERN_COSINE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub vocab_size: usize,
    pub feature_dim: usize,
    pub frames_per_symbol: usize,
    pub noise_std: f64,
    pub min_symbols: usize,
    pub max_symbols: usize,
    /// `codebook[symbol][channel * frames_per_symbol + frame]`.
    pub codebook: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Batch<F = f32> {
    pub features: Tensor<F>,
    pub targets: Vec<CtcTarget>,
    /// Valid input frames per item; the rest is zero padding.
    pub lengths: Vec<usize>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

impl SyntheticTask {
    pub fn new(cfg: &TaskConfig, vocab_size: usize, feature_dim: usize) -> Result<Self> {
        cfg.validate()?;
        let size = feature_dim * cfg.frames_per_symbol;
        let mut rng = Rng::new(cfg.codebook_seed);
        let mut codebook: Vec<Vec<f64>> = Vec::with_capacity(vocab_size);
        let mut attempts = 0;
        while codebook.len() < vocab_size {
            attempts += 1;
            if attempts > 1000 * vocab_size {
                return Err(Error::config(
                    "task",
                    "cannot draw sufficiently distinct symbol patterns",
                ));
            }
            let raw: Vec<f64> = (0..size).map(|_| rng.normal()).collect();
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = (size as f64).sqrt() / norm;
            let pattern: Vec<f64> = raw.iter().map(|x| x * scale).collect();
            if codebook.iter().all(|p| cosine(p, &pattern) < MAX_PATTERN_COSINE) {
                codebook.push(pattern);
            }
        }
        Ok(SyntheticTask {
            vocab_size,
            feature_dim,
            frames_per_symbol: cfg.frames_per_symbol,
            noise_std: cfg.noise_std,
            min_symbols: cfg.min_symbols,
            max_symbols: cfg.max_symbols,
            codebook,
        })
    }

    pub fn max_frames(&self) -> usize {
        self.max_symbols * self.frames_per_symbol
    }

    pub fn generate_batch<F: Real>(&self, batch_size: usize, rng: &mut Rng) -> Batch<F> {
        let blank = self.vocab_size;
        let span = self.frames_per_symbol;
        let sequences: Vec<Vec<usize>> = (0..batch_size)
            .map(|_| {
                let n = rng.range_inclusive(self.min_symbols, self.max_symbols);
                (0..n).map(|_| rng.below(self.vocab_size)).collect()
            })
            .collect();
        let lengths: Vec<usize> = sequences.iter().map(|s| s.len() * span).collect();
        let t_max = lengths.iter().copied().max().unwrap_or(1).max(1);
        let mut features = Tensor::zeros(Shape::new(batch_size, self.feature_dim, t_max));
        for (b, seq) in sequences.iter().enumerate() {
            for (i, &sym) in seq.iter().enumerate() {
                let pattern = &self.codebook[sym];
                for c in 0..self.feature_dim {
                    let row = features.row_mut(b, c);
                    for f in 0..span {
                        row[i * span + f] = F::lit(pattern[c * span + f]);
                    }
                }
            }
            if self.noise_std > 0.0 {
                for c in 0..self.feature_dim {
                    let row = features.row_mut(b, c);
                    for v in &mut row[..lengths[b]] {
                        *v = *v + F::lit(self.noise_std * rng.normal());
                    }
                }
            }
        }
        Batch {
            features,
            targets: sequences
                .into_iter()
                .map(|s| CtcTarget::new(s, blank))
                .collect(),
            lengths,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(noise: f64, min: usize, max: usize) -> SyntheticTask {
        let cfg = TaskConfig {
            noise_std: noise,
            min_symbols: min,
            max_symbols: max,
            frames_per_symbol: 4,
            ..TaskConfig::default()
        };
        SyntheticTask::new(&cfg, 5, 3).unwrap()
    }

    #[test]
    fn codebook_patterns_are_distinct() {
        let t = task(0.0, 1, 1);
        for i in 0..5 {
            for j in 0..i {
                assert!(cosine(&t.codebook[i], &t.codebook[j]) < MAX_PATTERN_COSINE);
            }
        }
    }

    #[test]
    fn noiseless_single_symbol_equals_pattern() {
        let t = task(0.0, 1, 1);
        let b: Batch<f64> = t.generate_batch(4, &mut Rng::new(1));
        for (i, target) in b.targets.iter().enumerate() {
            let sym = target.labels[0];
            for c in 0..3 {
                for f in 0..4 {
                    assert_eq!(b.features.get(i, c, f), t.codebook[sym][c * 4 + f]);
                }
            }
        }
    }

    #[test]
    fn lengths_in_range_and_padding_is_zero() {
        let t = task(0.3, 2, 5);
        let b: Batch<f32> = t.generate_batch(32, &mut Rng::new(2));
        for (i, target) in b.targets.iter().enumerate() {
            assert!((2..=5).contains(&target.labels.len()));
            assert_eq!(b.lengths[i], target.labels.len() * 4);
            assert!(target.labels.iter().all(|&l| l < 5));
            for c in 0..3 {
                assert!(b.features.row(i, c)[b.lengths[i]..].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let t = task(0.5, 1, 4);
        let a: Batch<f32> = t.generate_batch(8, &mut Rng::new(3));
        let b: Batch<f32> = t.generate_batch(8, &mut Rng::new(3));
        assert_eq!(a.features, b.features);
        assert_eq!(a.targets, b.targets);
    }
}
