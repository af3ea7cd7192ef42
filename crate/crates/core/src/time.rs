//! Integer simulation clock.
//!
//! One tick is 1/1344 ms. That divides every NCP and ECP symbol at
//! 15/30/60 kHz, every slot, and the quarter/half processing times, so all
//! grid arithmetic is exact.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

pub const TICKS_PER_MS: u64 = 1344;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ticks(pub u64);

impl Ticks {
    pub const ZERO: Ticks = Ticks(0);
    pub const MAX: Ticks = Ticks(u64::MAX);

    pub fn from_ms(ms: f64) -> Ticks {
        Ticks((ms * TICKS_PER_MS as f64).round().max(0.0) as u64)
    }

    pub fn as_ms(self) -> f64 {
        self.0 as f64 / TICKS_PER_MS as f64
    }

    pub fn saturating_sub(self, rhs: Ticks) -> Ticks {
        Ticks(self.0.saturating_sub(rhs.0))
    }

    /// Smallest multiple of `step` (offset by `phase`) that is `>= self`.
    pub fn ceil_to(self, step: Ticks, phase: Ticks) -> Ticks {
        debug_assert!(step.0 > 0);
        if self.0 <= phase.0 {
            return phase;
        }
        let k = (self.0 - phase.0).div_ceil(step.0);
        Ticks(phase.0 + k * step.0)
    }
}

impl Add for Ticks {
    type Output = Ticks;
    fn add(self, rhs: Ticks) -> Ticks {
        Ticks(self.0 + rhs.0)
    }
}

impl AddAssign for Ticks {
    fn add_assign(&mut self, rhs: Ticks) {
        self.0 += rhs.0;
    }
}

impl Sub for Ticks {
    type Output = Ticks;
    fn sub(self, rhs: Ticks) -> Ticks {
        Ticks(self.0 - rhs.0)
    }
}

impl Mul<u64> for Ticks {
    type Output = Ticks;
    fn mul(self, rhs: u64) -> Ticks {
        Ticks(self.0 * rhs)
    }
}

impl std::iter::Sum for Ticks {
    fn sum<I: Iterator<Item = Ticks>>(iter: I) -> Ticks {
        Ticks(iter.map(|t| t.0).sum())
    }
}

impl fmt::Display for Ticks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} ms", self.as_ms())
    }
}
