use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{model_forward, synth_copy_batch, ModelConfig, ParamSet};
use crate::scalar::Scalar;

/// Monotonic time source. Only differences between readings are used.
pub trait Clock {
    fn now(&mut self) -> Duration;
}

#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&mut self) -> Duration {
        self.origin.elapsed()
    }
}

/// Replays fixed interval lengths: each start/stop pair of readings is
/// separated by the next scripted duration.
#[derive(Debug, Clone)]
pub struct ScriptedClock {
    durations: Vec<Duration>,
    next: usize,
    t: Duration,
    started: bool,
}

impl ScriptedClock {
    pub fn new(durations: Vec<Duration>) -> Self {
        Self {
            durations,
            next: 0,
            t: Duration::ZERO,
            started: false,
        }
    }
}

impl Clock for ScriptedClock {
    fn now(&mut self) -> Duration {
        if self.started {
            let d = self.durations[self.next % self.durations.len()];
            self.next += 1;
            self.t += d;
        } else {
            // idle gap between measurements
            self.t += Duration::from_millis(1);
        }
        self.started = !self.started;
        self.t
    }
}

/// Summary of recorded samples (seconds). Warmup runs are never recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    #[serde(skip)]
    pub samples: Vec<f64>,
    #[serde(rename = "median_s")]
    pub median: f64,
    #[serde(rename = "mean_s")]
    pub mean: f64,
    #[serde(rename = "min_s")]
    pub min: f64,
    #[serde(skip)]
    pub max: f64,
    pub reps: usize,
    pub warmup: usize,
}

impl TimingStats {
    pub fn from_samples(samples: Vec<f64>, warmup: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("at least one timed repetition is required".into()));
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let mean = samples.iter().sum::<f64>() / n as f64;
        Ok(Self {
            median,
            mean,
            min: sorted[0],
            max: sorted[n - 1],
            reps: n,
            warmup,
            samples,
        })
    }
}

/// Times `model_forward` on one seeded copy-task batch of shape `batch × seq`.
/// Runs `warmup` unrecorded passes, then `reps` recorded ones, single-threaded.
#[allow(clippy::too_many_arguments)]
pub fn time_forward<T: Scalar, C: Clock>(
    p: &ParamSet<T>,
    cfg: &ModelConfig,
    batch: usize,
    seq: usize,
    reps: usize,
    warmup: usize,
    clock: &mut C,
    seed: u64,
) -> Result<TimingStats> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    let data = synth_copy_batch(seed, batch, seq, cfg.vocab_size.max(2))?;
    let inputs: Vec<Vec<usize>> = data
        .inputs
        .iter()
        .map(|s| s.iter().map(|&t| t % cfg.vocab_size).collect())
        .collect();
    for _ in 0..warmup {
        black_box(model_forward(p, cfg, black_box(&inputs))?);
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = clock.now();
        let out = model_forward(p, cfg, black_box(&inputs))?;
        let stop = clock.now();
        black_box(out);
        samples.push(stop.saturating_sub(start).as_secs_f64());
    }
    TimingStats::from_samples(samples, warmup)
}
