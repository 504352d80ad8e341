//! Forward-pass latency with towers run on one thread versus a pool.

use std::time::{Duration, Instant};

use nmm_core::{AggregationMode, Executor, Model, Sequential, Tensor, TowerMask};

use crate::exec::ThreadPool;
use crate::report::Table;

/// Whether the sequential and pooled schedules give bit-identical outputs.
pub fn schedules_agree(
    model: &Model<f32>,
    x: &Tensor<f32>,
    mode: AggregationMode,
    mask: Option<&TowerMask>,
    pool: &ThreadPool,
) -> nmm_core::Result<bool> {
    let a = model.forward(x, mode, mask, &Sequential)?;
    let b = model.forward(x, mode, mask, pool)?;
    Ok(a.data().len() == b.data().len()
        && a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latency {
    pub median: Duration,
    pub p90: Duration,
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[Duration], q: f64) -> Duration {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn time_forward<E: Executor>(
    model: &Model<f32>,
    x: &Tensor<f32>,
    mode: AggregationMode,
    mask: Option<&TowerMask>,
    exec: &E,
    repeats: usize,
) -> nmm_core::Result<Latency> {
    assert!(repeats > 0, "at least one repeat");
    // one untimed pass to warm caches and the pool
    model.forward(x, mode, mask, exec)?;
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let y = model.forward(x, mode, mask, exec)?;
        samples.push(start.elapsed());
        std::hint::black_box(y);
    }
    samples.sort();
    Ok(Latency {
        median: percentile(&samples, 0.5),
        p90: percentile(&samples, 0.9),
    })
}

pub fn table(rows: &[(&str, usize, Latency)], repeats: usize) -> Table {
    let mut t = Table::new(&["schedule", "threads", "repeats", "median_ms", "p90_ms"]);
    t.note("outputs bit-identical between schedules");
    t.note("timing rows vary between runs");
    for (name, threads, lat) in rows {
        t.push(vec![
            name.to_string(),
            threads.to_string(),
            repeats.to_string(),
            format!("{:.3}", lat.median.as_secs_f64() * 1e3),
            format!("{:.3}", lat.p90.as_secs_f64() * 1e3),
        ]);
    }
    t
}
