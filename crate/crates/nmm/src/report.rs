//! Tab-separated reports with a header row. Lines starting with `#` are
//! notes; in timing reports they also mark which rows vary between runs.

use std::fmt::Write as _;

use nmm_core::blocks::receptive_field;
use nmm_core::mixture::breakdown;
use nmm_core::{AggregationMode, ModelConfig};

/// Frames used for FLOP figures in the architecture report.
pub const REFERENCE_FRAMES: usize = 1000;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub notes: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            notes: Vec::new(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Index of a header column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Tab-separated text, or space-aligned columns when `pretty`.
    pub fn render(&self, pretty: bool) -> String {
        let mut out = String::new();
        for n in &self.notes {
            let _ = writeln!(out, "# {n}");
        }
        let lines = std::iter::once(&self.header).chain(&self.rows);
        if !pretty {
            for r in lines {
                let _ = writeln!(out, "{}", r.join("\t"));
            }
            return out;
        }
        let mut widths = vec![0; self.header.len()];
        for r in std::iter::once(&self.header).chain(&self.rows) {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.chars().count());
            }
        }
        for r in lines {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

pub fn mode_name(mode: AggregationMode) -> &'static str {
    match mode {
        AggregationMode::TrainSum => "train",
        AggregationMode::InferenceRescaled => "rescaled",
        AggregationMode::InferencePaperLiteral => "paper-literal",
        AggregationMode::InferenceUnscaled => "unscaled",
    }
}

/// The inference modes in report order.
pub const INFERENCE_MODES: [AggregationMode; 3] = [
    AggregationMode::InferenceRescaled,
    AggregationMode::InferencePaperLiteral,
    AggregationMode::InferenceUnscaled,
];

/// Per-component structure, receptive field, parameters and FLOPs.
pub fn architecture(cfg: &ModelConfig) -> Table {
    let mut t = Table::new(&[
        "component",
        "frames_in",
        "stride",
        "towers",
        "blocks_per_tower",
        "kernel",
        "channels",
        "params",
        "flops",
    ]);
    let rows = breakdown(cfg, REFERENCE_FRAMES, None);
    let params: usize = rows.iter().map(|r| r.params).sum();
    let flops: u64 = rows.iter().map(|r| r.flops).sum();
    t.note(format!("receptive_field={} frames", receptive_field(cfg)));
    t.note(
        "receptive field counts convolutions only; squeeze-excitation pools over the whole \
         input, so with SE enabled every output depends on every input frame",
    );
    t.note(format!("param_count={params}"));
    t.note(format!("flop_count={flops} at reference_frames={REFERENCE_FRAMES}"));
    for r in &rows {
        let (stride, towers, blocks, kernel, channels) = match r.name.as_str() {
            "prologue" => (2, 0, 0, cfg.kernel_size, cfg.channels),
            "epilogue" => (1, 0, 0, cfg.epilogue_kernel(), cfg.num_classes()),
            _ => (2, r.towers, cfg.blocks_per_tower, cfg.kernel_size, cfg.channels),
        };
        t.push(vec![
            r.name.clone(),
            r.frames_in.to_string(),
            stride.to_string(),
            towers.to_string(),
            blocks.to_string(),
            kernel.to_string(),
            channels.to_string(),
            r.params.to_string(),
            r.flops.to_string(),
        ]);
    }
    t.push(vec![
        "total".into(),
        REFERENCE_FRAMES.to_string(),
        cfg.downsampling().to_string(),
        cfg.towers.iter().sum::<usize>().to_string(),
        cfg.blocks_per_tower.to_string(),
        "-".into(),
        "-".into(),
        params.to_string(),
        flops.to_string(),
    ]);
    t
}

/// Formats an error rate with enough digits to distinguish single errors.
pub fn rate(v: f64) -> String {
    format!("{v:.6}")
}
