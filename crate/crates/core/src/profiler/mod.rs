//! Parameter and activation memory, forward-pass timing, side-by-side comparison
//! reports and the exhaustive config search behind the shipped presets.

mod memory;
mod report;
mod search;
mod timing;

pub use memory::{activation_bytes, activation_bytes_for, memory_bytes, memory_bytes_for};
pub use report::{build_report, compare, ComparisonReport, MetricSet, ResourceReport};
pub use search::{config_search, ConfigPair, SearchBounds};
pub use timing::{time_forward, Clock, MonotonicClock, ScriptedClock, TimingStats};
