//! The pseudorandom stream used for synthetic data, splits and sampling.
//!
//! The generator is xorshift64* seeded through one round of SplitMix64, so
//! any implementation can reproduce the stream bit for bit:
//!
//! ```text
//! seeding:  z = seed + 0x9E3779B97F4A7C15
//!           z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!           z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!           state = z ^ (z >> 31)          (state = 1 if this is 0)
//! step:     x ^= x >> 12; x ^= x << 25; x ^= x >> 27
//!           output = x * 0x2545F4914F6CDD1D
//! ```
//!
//! All arithmetic wraps modulo 2^64. Derived draws:
//! - `next_f64`: `(output >> 11) * 2^-53`, uniform in `[0, 1)`;
//! - `below(n)`: `output % n`;
//! - `normal`: Box-Muller on two uniforms `u1, u2` using
//!   `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`, one draw per pair.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        Self {
            state: if z == 0 { 1 } else { z },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    /// In-place Fisher-Yates shuffle, walking from the last slot down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
