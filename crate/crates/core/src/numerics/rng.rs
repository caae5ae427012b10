use crate::error::{Error, Result};

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX2: u64 = 0x94D0_49BB_1331_11EB;

/// SplitMix64 generator state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub state: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Advances one step and returns the mixed 64-bit output.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(MIX1);
        z = (z ^ (z >> 27)).wrapping_mul(MIX2);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi). Callers guarantee `lo < hi`.
    #[inline]
    pub fn next_in(&mut self, lo: f64, hi: f64) -> f64 {
        let v = lo + (hi - lo) * self.next_unit();
        // rounding in the affine map can land exactly on `hi`
        if v < hi {
            v
        } else {
            lo.max(prev_float(hi))
        }
    }

    /// Uniform integer in [0, n) by rejection on the high bits.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }
}

pub type SplitMix64 = RngState;

fn prev_float(x: f64) -> f64 {
    if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else if x < 0.0 {
        f64::from_bits(x.to_bits() + 1)
    } else {
        -f64::from_bits(1)
    }
}

/// Draws one value in `[lo, hi)` and returns it with the advanced state.
pub fn rng_uniform(state: RngState, lo: f64, hi: f64) -> Result<(f64, RngState)> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "uniform interval requires finite lo < hi, got [{lo}, {hi})"
        )));
    }
    let mut next = state;
    let v = next.next_in(lo, hi);
    Ok((v, next))
}
