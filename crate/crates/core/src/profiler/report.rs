use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{param_count_enumerated, ModelConfig, ParamSet};
use crate::scalar::Scalar;

use super::memory::activation_bytes_for;
use super::timing::{time_forward, Clock, TimingStats};

/// Resource usage of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub label: String,
    pub param_count: usize,
    /// Always `bytes-per-value × param_count`.
    pub param_bytes: usize,
    pub activation_bytes: usize,
    pub timing: TimingStats,
}

/// One value per compared metric; `None` marks an undefined ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub param_count: Option<f64>,
    pub param_bytes: Option<f64>,
    pub activation_bytes: Option<f64>,
    pub median_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub baseline: ResourceReport,
    pub variant: ResourceReport,
    /// variant / baseline.
    pub ratios: MetricSet,
    /// `(1 - ratio) × 100`.
    pub reductions_pct: MetricSet,
}

/// Measures `p` at batch shape `batch × seq` with the full forward pass
/// (embedding lookup through output logits) inside the timed region.
#[allow(clippy::too_many_arguments)]
pub fn build_report<T: Scalar, C: Clock>(
    label: &str,
    p: &ParamSet<T>,
    cfg: &ModelConfig,
    batch: usize,
    seq: usize,
    reps: usize,
    warmup: usize,
    clock: &mut C,
    seed: u64,
) -> Result<ResourceReport> {
    let count = param_count_enumerated(p);
    let timing = time_forward(p, cfg, batch, seq, reps, warmup, clock, seed)?;
    Ok(ResourceReport {
        label: label.to_string(),
        param_count: count,
        param_bytes: T::BYTES * count,
        activation_bytes: activation_bytes_for::<T>(cfg, batch, seq)?,
        timing,
    })
}

fn ratio(variant: f64, baseline: f64) -> Option<f64> {
    if baseline == 0.0 {
        None
    } else {
        Some(variant / baseline)
    }
}

pub fn compare(baseline: &ResourceReport, variant: &ResourceReport) -> ComparisonReport {
    let ratios = MetricSet {
        param_count: ratio(variant.param_count as f64, baseline.param_count as f64),
        param_bytes: ratio(variant.param_bytes as f64, baseline.param_bytes as f64),
        activation_bytes: ratio(variant.activation_bytes as f64, baseline.activation_bytes as f64),
        median_s: ratio(variant.timing.median, baseline.timing.median),
    };
    let pct = |r: Option<f64>| r.map(|r| (1.0 - r) * 100.0);
    let reductions_pct = MetricSet {
        param_count: pct(ratios.param_count),
        param_bytes: pct(ratios.param_bytes),
        activation_bytes: pct(ratios.activation_bytes),
        median_s: pct(ratios.median_s),
    };
    ComparisonReport {
        baseline: baseline.clone(),
        variant: variant.clone(),
        ratios,
        reductions_pct,
    }
}

fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn pct_cell(p: Option<f64>) -> String {
    match p {
        Some(p) => format!("{p:.2}%"),
        None => "n/a".into(),
    }
}

impl ComparisonReport {
    /// Three-row table: memory, execution time, parameter count.
    pub fn render_table(&self) -> String {
        let (b, v) = (&self.baseline, &self.variant);
        let rows = [
            (
                "Memory Usage (Bytes)",
                thousands(b.param_bytes),
                thousands(v.param_bytes),
                pct_cell(self.reductions_pct.param_bytes),
            ),
            (
                "Execution Time (Seconds)",
                format!("{:.6}", b.timing.median),
                format!("{:.6}", v.timing.median),
                pct_cell(self.reductions_pct.median_s),
            ),
            (
                "Parameter Count",
                thousands(b.param_count),
                thousands(v.param_count),
                pct_cell(self.reductions_pct.param_count),
            ),
        ];
        let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(6);
        let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(b.label.len());
        let w2 = rows.iter().map(|r| r.2.len()).max().unwrap_or(0).max(v.label.len());
        let mut out = format!(
            "{:<w0$}  {:>w1$}  {:>w2$}  {:>9}\n",
            "Metric", b.label, v.label, "Reduction"
        );
        for (name, x, y, r) in rows {
            out.push_str(&format!("{name:<w0$}  {x:>w1$}  {y:>w2$}  {r:>9}\n"));
        }
        out.push_str(&format!(
            "\ntime: median of {} forward passes after {} warmup (embedding through logits)\nactivation bytes: {} vs {}\n",
            b.timing.reps,
            b.timing.warmup,
            thousands(b.activation_bytes),
            thousands(v.activation_bytes)
        ));
        out
    }
}
