//! Counter-based Gaussian streams addressed by tree position.
//!
//! Every replicate owns a 64-bit key derived from `(master_seed,
//! replicate_index)`. The raw word at stream position `i` is the SplitMix64
//! output `mix(key + (i + 1)·γ)`, so any position can be read directly, in any
//! order, from any thread. Gaussians are produced by inverting the normal CDF
//! at the midpoint of the 53-bit cell selected by the word, which makes the
//! map from raw word to Gaussian monotone. The sampler relies on that
//! monotonicity to compare raw words against a threshold before paying for
//! the inverse CDF.

use serde::{Deserialize, Serialize};

use crate::normal;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one replicate: the pair fully determines every draw in it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replicate_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replicate_index: u64) -> Self {
        Self {
            master_seed,
            replicate_index,
        }
    }

    /// Key for an auxiliary stream (chunked Monte Carlo loops), distinct from
    /// the tree stream of the same pair.
    pub fn derived_u64(&self, salt: u64) -> u64 {
        mix64(NodeStream::new(*self).key ^ mix64(salt.wrapping_add(0x5851_F42D_4C95_7F2D)))
    }
}

/// Random access into one replicate's stream.
#[derive(Clone, Copy, Debug)]
pub struct NodeStream {
    key: u64,
}

impl NodeStream {
    pub fn new(seed: SeedSpec) -> Self {
        let master = mix64(seed.master_seed ^ 0x6A09_E667_F3BC_C909);
        let replicate = mix64(seed.replicate_index.wrapping_mul(GOLDEN_GAMMA) ^ 0xBB67_AE85_84CA_A73B);
        Self {
            key: mix64(master.wrapping_add(replicate)),
        }
    }

    /// Raw word at `position`.
    #[inline(always)]
    pub fn raw(&self, position: u64) -> u64 {
        mix64(
            self.key
                .wrapping_add(position.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    /// Iterator over raw words at `start, start + 1, …`.
    #[inline]
    pub fn run(&self, start: u64) -> RawRun {
        RawRun {
            state: self
                .key
                .wrapping_add(start.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)),
        }
    }

    /// Standard normal at `position`.
    #[inline]
    pub fn gaussian(&self, position: u64) -> f64 {
        gaussian_from_raw(self.raw(position))
    }
}

/// Sequential reader over consecutive stream positions.
pub struct RawRun {
    state: u64,
}

impl Iterator for RawRun {
    type Item = u64;

    #[inline(always)]
    fn next(&mut self) -> Option<u64> {
        let out = mix64(self.state);
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        Some(out)
    }
}

const HALF_CELLS: u64 = 1 << 52;
const CELLS: u64 = 1 << 53;
const CELL_SHIFT: u32 = 11;

/// Maps a raw word to `Φ^{-1}((k + ½)/2^53)` with `k` its top 53 bits.
///
/// Both halves are evaluated as lower-tail quantiles of an exactly
/// representable probability, so the map is odd-symmetric around the middle
/// cell and never returns an infinite value.
#[inline]
pub fn gaussian_from_raw(raw: u64) -> f64 {
    let cell = raw >> CELL_SHIFT;
    if cell < HALF_CELLS {
        normal::lower_quantile(cell_probability(cell))
    } else {
        -normal::lower_quantile(cell_probability(CELLS - 1 - cell))
    }
}

/// `(2k + 1)/2^54`, exact for `k < 2^52`.
#[inline]
fn cell_probability(cell: u64) -> f64 {
    ((2 * cell + 1) as f64) * f64::powi(2.0, -54)
}

/// A raw-word threshold below which the Gaussian is certainly below `z`.
///
/// Every raw word `w < raw_floor(z)` satisfies `gaussian_from_raw(w) < z`, with
/// a margin of `1e-6·(1 + |z|)` absorbing rounding in both the threshold and
/// downstream arithmetic. Words at or above the floor must still be checked
/// exactly.
pub fn raw_floor(z: f64) -> u64 {
    if z.is_nan() {
        return 0;
    }
    let z = z - 1e-6 * (1.0 + z.abs());
    let cells = CELLS as f64;
    let cell = if z <= 0.0 {
        let p = normal::cdf(z);
        (p * cells).floor() - 1.0
    } else {
        let q = normal::sf(z);
        cells - (q * cells).ceil() - 1.0
    };
    if cell <= 0.0 {
        0
    } else {
        // cell < 2^53, so the shift cannot overflow.
        (cell as u64) << CELL_SHIFT
    }
}
