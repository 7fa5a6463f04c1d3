//! Counter-based random streams.
//!
//! Every random quantity is a pure function of a 64-bit key and a counter, so
//! results do not depend on how work is split across threads.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

pub const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child key from a parent key and a stream label.
#[inline]
pub fn derive(key: u64, label: u64) -> u64 {
    mix64(key ^ mix64(label.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Key for the `i`-th Monte Carlo sample under a master seed.
#[inline]
pub fn sample_key(master: u64, i: u64) -> u64 {
    derive(derive(master, 0x5a4d_504c), i)
}

/// 32-bit angle word for the prime with table index `n`.
///
/// One 64-bit hash feeds two primes: within each block of 16 indices, lane
/// `l` reads the low half of word `l % 8` when `l < 8` and the high half otherwise.
/// The vector kernels rely on this layout.
#[inline(always)]
pub fn angle_bits(key: u64, n: u64) -> u32 {
    let lane = n & 15;
    let word = (n >> 4) * 8 + (lane & 7);
    let h = mix64(key.wrapping_add(word.wrapping_mul(GOLDEN)));
    if lane < 8 {
        h as u32
    } else {
        (h >> 32) as u32
    }
}

#[inline(always)]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// SplitMix64 walked along a counter; usable wherever an `RngCore` is needed.
#[derive(Clone, Debug)]
pub struct Stream {
    key: u64,
    ctr: u64,
}

impl Stream {
    pub fn new(key: u64) -> Self {
        Stream { key, ctr: 0 }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }
}

impl RngCore for Stream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.ctr = self.ctr.wrapping_add(1);
        mix64(self.key.wrapping_add(self.ctr.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}

/// Standard normal attached to a node of a counter tree.
#[inline]
pub fn node_normal(key: u64, level: u64, index: u64) -> f64 {
    Stream::new(derive(derive(key, level), index)).normal()
}
