//! Connectionist temporal classification: loss with exact gradient,
//! brute-force oracle, greedy decoding and token error rate.
//!
//! Inputs are log-probabilities laid out `(batch, classes, time)`. The blank
//! is the last class. All recursions run in `f64` log space.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// A label sequence for one batch item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtcTarget {
    pub labels: Vec<usize>,
    pub blank: usize,
}

impl CtcTarget {
    pub fn new(labels: Vec<usize>, blank: usize) -> Self {
        CtcTarget { labels, blank }
    }

    /// Adjacent equal labels; each needs a blank frame between them.
    pub fn repeats(&self) -> usize {
        self.labels.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// Fewest frames any alignment needs.
    pub fn min_frames(&self) -> usize {
        self.labels.len() + self.repeats()
    }

    fn extended(&self) -> Vec<usize> {
        let mut ext = Vec::with_capacity(2 * self.labels.len() + 1);
        ext.push(self.blank);
        for &l in &self.labels {
            ext.push(l);
            ext.push(self.blank);
        }
        ext
    }
}

#[derive(Debug, Clone)]
pub struct CtcResult<F> {
    /// Mean negative log-likelihood over the feasible items; `+inf` when no
    /// item is feasible.
    pub loss: f64,
    /// Per-item loss, `+inf` for infeasible items.
    pub losses: Vec<f64>,
    pub feasible: Vec<bool>,
    /// Gradient of `loss` with respect to the pre-softmax logits, assuming
    /// the log-probabilities came from a log-softmax over classes.
    pub grad: Tensor<F>,
}

fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Loss and logit gradient for a batch. `lengths` gives the valid number of
/// frames per item (all frames when `None`); padding frames get zero
/// gradient.
pub fn ctc_loss<F: Real>(
    log_probs: &Tensor<F>,
    targets: &[CtcTarget],
    lengths: Option<&[usize]>,
) -> Result<CtcResult<F>> {
    let (batch, classes, frames) = (log_probs.batch(), log_probs.channels(), log_probs.time());
    if targets.len() != batch {
        return Err(Error::config(
            "ctc targets",
            alloc::format!("{} targets for batch of {batch}", targets.len()),
        ));
    }
    if let Some(l) = lengths {
        if l.len() != batch || l.iter().any(|&n| n > frames || n == 0) {
            return Err(Error::config("ctc lengths", "one length in 1..=T per item"));
        }
    }
    for t in targets {
        if t.blank >= classes || t.labels.iter().any(|&l| l >= classes || l == t.blank) {
            return Err(Error::config(
                "ctc targets",
                "labels must be non-blank class ids",
            ));
        }
    }

    let mut grad = Tensor::zeros(log_probs.shape());
    let mut losses = Vec::with_capacity(batch);
    let mut feasible = Vec::with_capacity(batch);
    let mut item_grads = Vec::with_capacity(batch);
    for (b, target) in targets.iter().enumerate() {
        let len = lengths.map_or(frames, |l| l[b]);
        let lp: Vec<Vec<f64>> = (0..len)
            .map(|t| (0..classes).map(|c| log_probs.get(b, c, t).as_f64()).collect())
            .collect();
        match item_loss(&lp, target) {
            Some((loss, g)) => {
                losses.push(loss);
                feasible.push(true);
                item_grads.push(Some(g));
            }
            None => {
                losses.push(f64::INFINITY);
                feasible.push(false);
                item_grads.push(None);
            }
        }
    }

    let n_ok = feasible.iter().filter(|&&f| f).count();
    let loss = if n_ok == 0 {
        f64::INFINITY
    } else {
        losses.iter().filter(|l| l.is_finite()).sum::<f64>() / n_ok as f64
    };
    for (b, g) in item_grads.iter().enumerate() {
        if let Some(g) = g {
            for (t, row) in g.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    grad.set(b, c, t, F::lit(v / n_ok as f64));
                }
            }
        }
    }
    Ok(CtcResult {
        loss,
        losses,
        feasible,
        grad,
    })
}

/// `-ln p(target | lp)` and its gradient w.r.t. logits, or `None` if no
/// alignment fits in the available frames.
fn item_loss(lp: &[Vec<f64>], target: &CtcTarget) -> Option<(f64, Vec<Vec<f64>>)> {
    let frames = lp.len();
    if frames < target.min_frames() {
        return None;
    }
    let ext = target.extended();
    let s_len = ext.len();
    let neg = f64::NEG_INFINITY;
    // a skip transition s-2 -> s is allowed into a label that differs from
    // the label two positions back
    let can_skip = |s: usize| s >= 2 && ext[s] != target.blank && ext[s] != ext[s - 2];

    let mut alpha = vec![vec![neg; s_len]; frames];
    alpha[0][0] = lp[0][ext[0]];
    if s_len > 1 {
        alpha[0][1] = lp[0][ext[1]];
    }
    for t in 1..frames {
        for s in 0..s_len {
            let mut a = alpha[t - 1][s];
            if s >= 1 {
                a = lse2(a, alpha[t - 1][s - 1]);
            }
            if can_skip(s) {
                a = lse2(a, alpha[t - 1][s - 2]);
            }
            alpha[t][s] = if a == neg { neg } else { a + lp[t][ext[s]] };
        }
    }

    let mut beta = vec![vec![neg; s_len]; frames];
    let last = frames - 1;
    beta[last][s_len - 1] = lp[last][ext[s_len - 1]];
    if s_len > 1 {
        beta[last][s_len - 2] = lp[last][ext[s_len - 2]];
    }
    for t in (0..last).rev() {
        for s in 0..s_len {
            let mut b = beta[t + 1][s];
            if s + 1 < s_len {
                b = lse2(b, beta[t + 1][s + 1]);
            }
            if s + 2 < s_len && can_skip(s + 2) {
                b = lse2(b, beta[t + 1][s + 2]);
            }
            beta[t][s] = if b == neg { neg } else { b + lp[t][ext[s]] };
        }
    }

    let mut log_p = alpha[last][s_len - 1];
    if s_len > 1 {
        log_p = lse2(log_p, alpha[last][s_len - 2]);
    }
    if !log_p.is_finite() {
        return None;
    }

    let classes = lp[0].len();
    let mut grad = vec![vec![0.0; classes]; frames];
    for t in 0..frames {
        let mut occupancy = vec![neg; classes];
        for s in 0..s_len {
            let v = alpha[t][s] + beta[t][s];
            if v > neg {
                occupancy[ext[s]] = lse2(occupancy[ext[s]], v);
            }
        }
        for c in 0..classes {
            let posterior = if occupancy[c] == neg {
                0.0
            } else {
                (occupancy[c] - lp[t][c] - log_p).exp()
            };
            grad[t][c] = lp[t][c].exp() - posterior;
        }
    }
    Some((-log_p, grad))
}

/// Removes repeats, then blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Limit on label sequences enumerated by [`ctc_brute_force`].
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// Loss by summing the probability of every frame-level path that
/// collapses to the target. Batch item `b` of `log_probs`, all frames.
/// Returns `+inf` if no path collapses to the target.
pub fn ctc_brute_force<F: Real>(log_probs: &Tensor<F>, b: usize, target: &CtcTarget) -> Result<f64> {
    let (classes, frames) = (log_probs.channels(), log_probs.time());
    let count = (classes as u128).checked_pow(frames as u32).unwrap_or(u128::MAX);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(count));
    }
    let probs: Vec<Vec<f64>> = (0..frames)
        .map(|t| (0..classes).map(|c| log_probs.get(b, c, t).as_f64().exp()).collect())
        .collect();
    let mut path = vec![0usize; frames];
    let mut total = 0.0;
    loop {
        if collapse(&path, target.blank) == target.labels {
            total += path.iter().enumerate().map(|(t, &c)| probs[t][c]).product::<f64>();
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == frames {
                return Ok(-total.ln());
            }
            path[i] += 1;
            if path[i] < classes {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

/// Per-frame argmax (lowest id wins ties), repeats collapsed, blanks
/// removed.
pub fn greedy_decode<F: Real>(
    log_probs: &Tensor<F>,
    blank: usize,
    lengths: Option<&[usize]>,
) -> Vec<Vec<usize>> {
    (0..log_probs.batch())
        .map(|b| {
            let len = lengths.map_or(log_probs.time(), |l| l[b].min(log_probs.time()));
            let path: Vec<usize> = (0..len)
                .map(|t| {
                    let mut best = 0;
                    for c in 1..log_probs.channels() {
                        if log_probs.get(b, c, t) > log_probs.get(b, best, t) {
                            best = c;
                        }
                    }
                    best
                })
                .collect();
            collapse(&path, blank)
        })
        .collect()
}

pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance normalised by `max(1, |reference|)`.
pub fn token_error_rate<T: PartialEq>(hyp: &[T], reference: &[T]) -> f64 {
    edit_distance(hyp, reference) as f64 / reference.len().max(1) as f64
}

/// Corpus-level rate: total edits over total reference tokens.
pub fn corpus_error_rate<T: PartialEq>(hyps: &[Vec<T>], refs: &[Vec<T>]) -> f64 {
    let edits: usize = hyps.iter().zip(refs).map(|(h, r)| edit_distance(h, r)).sum();
    let total: usize = refs.iter().map(Vec::len).sum();
    edits as f64 / total.max(1) as f64
}
