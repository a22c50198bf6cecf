//! Counter-based standard normal variates.
//!
//! A variate is a pure function of `(seed, path, series, year)`:
//!
//! ```text
//! key = mix(mix(seed ^ SEED_SALT) ^ path)
//! h1  = mix(mix(key ^ (series + 1) * SERIES_MUL) ^ year)
//! h2  = mix(h1 ^ PAIR_SALT)
//! u1  = ((h1 >> 11) + 0.5) / 2^53          in (0, 1)
//! u2  = (h2 >> 11) / 2^53                  in [0, 1)
//! z   = sqrt(-2 ln u1) * cos(2 pi u2)
//! ```
//!
//! `mix` is the SplitMix64 finalizer. The transcendental functions come from
//! `libm`, so results are identical on every platform.

const SEED_SALT: u64 = 0x5851_f42d_4c95_7f2d;
const SERIES_MUL: u64 = 0x9e37_79b9_7f4a_7c15;
const PAIR_SALT: u64 = 0xd1b5_4a32_d192_ed03;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Normal variates for one simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalStream {
    key: u64,
}

impl NormalStream {
    pub fn new(seed: u64, path: u64) -> Self {
        Self {
            key: mix(mix(seed ^ SEED_SALT) ^ path),
        }
    }

    /// Unit uniform pair for `(series, year)`; the first is strictly positive.
    fn uniforms(&self, series: usize, year: u64) -> (f64, f64) {
        let h1 = mix(mix(self.key ^ (series as u64 + 1).wrapping_mul(SERIES_MUL)) ^ year);
        let h2 = mix(h1 ^ PAIR_SALT);
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (((h1 >> 11) as f64 + 0.5) * SCALE, (h2 >> 11) as f64 * SCALE)
    }

    pub fn variate(&self, series: usize, year: u64) -> f64 {
        let (u1, u2) = self.uniforms(series, year);
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
    }
}
