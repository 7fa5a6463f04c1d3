//! Vectorized inner loops over primes.
//!
//! Primes are processed in aligned blocks of 16 table indices so that the
//! angle words come straight from `rng::angle_bits`' layout. Each entry
//! point has AVX-512 and AVX2 builds chosen at run time.

use crate::num::{cos_bits_f32, cos_turn};
use crate::rng::{mix64, GOLDEN};

pub const LANES: usize = 16;
/// Primes per cache block; a batch of samples sweeps one block before moving on.
const BLOCK: usize = 2048;

/// Where angle words come from.
#[derive(Clone, Copy)]
pub enum Angles<'a> {
    Keyed(u64),
    Stored(&'a [u32]),
}

impl Angles<'_> {
    /// Angle words for table indices base..base+16 (base a multiple of 16).
    #[inline(always)]
    fn fill(&self, base: usize, out: &mut [u32; LANES]) {
        match *self {
            Angles::Keyed(key) => {
                let w0 = (base as u64 >> 4) * 8;
                let mut h = [0u64; 8];
                for (j, hj) in h.iter_mut().enumerate() {
                    *hj = mix64(key.wrapping_add((w0 + j as u64).wrapping_mul(GOLDEN)));
                }
                for j in 0..8 {
                    out[j] = h[j] as u32;
                    out[j + 8] = (h[j] >> 32) as u32;
                }
            }
            Angles::Stored(v) => {
                for (l, o) in out.iter_mut().enumerate() {
                    *o = v.get(base + l).copied().unwrap_or(0);
                }
            }
        }
    }
}

/// Per-prime coefficients for one scale: X_p = a cos φ + b cos 2φ.
#[derive(Debug, Clone)]
pub struct ScaleData {
    /// Table index of the first prime.
    pub start: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// log p / 2π, the phase speed in turns per unit h.
    pub w: Vec<f64>,
    pub bsum: f64,
    pub a32: Vec<f32>,
    pub b32: Vec<f32>,
}

impl ScaleData {
    pub fn new(start: usize, logs: &[f64], sigma: f64) -> Self {
        let a: Vec<f64> = logs.iter().map(|&l| (-sigma * l).exp()).collect();
        let b: Vec<f64> = logs.iter().map(|&l| 0.5 * (-2.0 * sigma * l).exp()).collect();
        let w = logs.iter().map(|&l| l / std::f64::consts::TAU).collect();
        let bsum = crate::num::neumaier(b.iter().copied());
        let a32 = a.iter().map(|&v| v as f32).collect();
        let b32 = b.iter().map(|&v| v as f32).collect();
        ScaleData { start, a, b, w, bsum, a32, b32 }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Aligned block starts covering the scale, as table indices.
    fn blocks(&self) -> impl Iterator<Item = usize> {
        let first = self.start / LANES * LANES;
        let end = self.start + self.len();
        (first..end).step_by(LANES)
    }
}

macro_rules! dispatch {
    ($body:ident, $avx512:ident, $avx2:ident, ($($arg:ident : $ty:ty),*)) => {
        #[cfg(target_arch = "x86_64")]
        #[target_feature(enable = "avx512f,avx512dq,avx512vl,avx2,fma")]
        unsafe fn $avx512($($arg: $ty),*) {
            $body($($arg),*)
        }

        #[cfg(target_arch = "x86_64")]
        #[target_feature(enable = "avx2,fma")]
        unsafe fn $avx2($($arg: $ty),*) {
            $body($($arg),*)
        }
    };
}

fn has_avx512() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        is_x86_feature_detected!("avx512f")
            && is_x86_feature_detected!("avx512dq")
            && is_x86_feature_detected!("avx512vl")
            && is_x86_feature_detected!("fma")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

fn has_avx2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

/// Load block coefficients, zeroing lanes outside the scale.
#[inline(always)]
fn lane_coeffs(sd: &ScaleData, base: usize, a: &mut [f64; LANES], b: &mut [f64; LANES], w: &mut [f64; LANES]) {
    let lo = sd.start;
    let hi = sd.start + sd.len();
    if base >= lo && base + LANES <= hi {
        let o = base - lo;
        a.copy_from_slice(&sd.a[o..o + LANES]);
        b.copy_from_slice(&sd.b[o..o + LANES]);
        w.copy_from_slice(&sd.w[o..o + LANES]);
    } else {
        for l in 0..LANES {
            let i = base + l;
            if i >= lo && i < hi {
                a[l] = sd.a[i - lo];
                b[l] = sd.b[i - lo];
                w[l] = sd.w[i - lo];
            } else {
                a[l] = 0.0;
                b[l] = 0.0;
                w[l] = 0.0;
            }
        }
    }
}

/// Grid accumulation for a batch of samples over one scale.
///
/// For sample s and grid point k = 0..n, adds Σ_p c (a + 2 b c) to
/// `acc[s][k]`, where c = cos(θ_p − (h0 + k dh) log p). The constant −Σ b is
/// left to the caller. Along the grid, c follows the three-term recurrence
/// c_{k+1} = 2 cos δ · c_k − c_{k−1} with δ = dh log p.
#[inline(always)]
fn grid_body(angles: &[Angles], sd: &ScaleData, h0: f64, dh: f64, n: usize, acc: &mut [Vec<f64>]) {
    let mut lanes = vec![vec![0.0f64; n * LANES]; angles.len()];
    let blocks: Vec<usize> = sd.blocks().collect();
    let per = BLOCK / LANES;
    let mut a = vec![[0.0f64; LANES]; per];
    let mut b2 = vec![[0.0f64; LANES]; per];
    let mut w = vec![[0.0f64; LANES]; per];
    let mut rc2 = vec![[0.0f64; LANES]; per];
    let mut rs = vec![[0.0f64; LANES]; per];
    for chunk in blocks.chunks(per) {
        for (g, &base) in chunk.iter().enumerate() {
            let mut bb = [0.0; LANES];
            lane_coeffs(sd, base, &mut a[g], &mut bb, &mut w[g]);
            for l in 0..LANES {
                b2[g][l] = 2.0 * bb[l];
                let step = dh * w[g][l];
                rc2[g][l] = 2.0 * cos_turn(step);
                rs[g][l] = cos_turn(step - 0.25);
            }
        }
        for (ang, lanes) in angles.iter().zip(lanes.iter_mut()) {
            for (g, &base) in chunk.iter().enumerate() {
                let mut u = [0u32; LANES];
                ang.fill(base, &mut u);
                let (a, b2, rc2, rs) = (a[g], b2[g], rc2[g], rs[g]);
                let mut c = [0.0f64; LANES];
                let mut prev = [0.0f64; LANES];
                for l in 0..LANES {
                    let phase = u[l] as i32 as f64 * (1.0 / 4_294_967_296.0) - h0 * w[g][l];
                    let c0 = cos_turn(phase);
                    let s0 = cos_turn(phase - 0.25);
                    c[l] = c0;
                    // cos(φ + δ), the point before the first
                    prev[l] = (0.5 * rc2[l]).mul_add(c0, -(s0 * rs[l]));
                }
                for row in lanes.chunks_exact_mut(LANES).take(n) {
                    let row: &mut [f64; LANES] = row.try_into().expect("lane row");
                    let mut next = [0.0f64; LANES];
                    for l in 0..LANES {
                        row[l] = c[l].mul_add(b2[l].mul_add(c[l], a[l]), row[l]);
                        next[l] = rc2[l].mul_add(c[l], -prev[l]);
                    }
                    prev = c;
                    c = next;
                }
            }
        }
    }
    for (s, lanes) in lanes.iter().enumerate() {
        for k in 0..n {
            acc[s][k] += lanes[k * LANES..(k + 1) * LANES].iter().sum::<f64>();
        }
    }
}

dispatch!(grid_body, grid_avx512, grid_avx2,
    (angles: &[Angles], sd: &ScaleData, h0: f64, dh: f64, n: usize, acc: &mut [Vec<f64>]));

pub fn grid_accumulate(angles: &[Angles], sd: &ScaleData, h0: f64, dh: f64, n: usize, acc: &mut [Vec<f64>]) {
    #[cfg(target_arch = "x86_64")]
    {
        if has_avx512() {
            return unsafe { grid_avx512(angles, sd, h0, dh, n, acc) };
        }
        if has_avx2() {
            return unsafe { grid_avx2(angles, sd, h0, dh, n, acc) };
        }
    }
    grid_body(angles, sd, h0, dh, n, acc)
}

/// Single-precision increments at h = 0 for a batch of keyed samples:
/// out[s] += Σ_p a cos θ + b cos 2θ.
#[inline(always)]
fn point_body(keys: &[u64], sd: &ScaleData, out: &mut [f64]) {
    let blocks: Vec<usize> = sd.blocks().collect();
    let lo = sd.start;
    let hi = sd.start + sd.len();
    for chunk in blocks.chunks(BLOCK / LANES) {
        for (s, &key) in keys.iter().enumerate() {
            let mut acc = [0.0f32; LANES];
            for &base in chunk {
                let mut u = [0u32; LANES];
                Angles::Keyed(key).fill(base, &mut u);
                let (mut a, mut b) = ([0.0f32; LANES], [0.0f32; LANES]);
                if base >= lo && base + LANES <= hi {
                    let o = base - lo;
                    a.copy_from_slice(&sd.a32[o..o + LANES]);
                    b.copy_from_slice(&sd.b32[o..o + LANES]);
                } else {
                    for l in 0..LANES {
                        let i = base + l;
                        if i >= lo && i < hi {
                            a[l] = sd.a32[i - lo];
                            b[l] = sd.b32[i - lo];
                        }
                    }
                }
                for l in 0..LANES {
                    let c = cos_bits_f32(u[l]);
                    acc[l] = c.mul_add((2.0 * b[l]).mul_add(c, a[l]), acc[l]);
                }
            }
            out[s] += acc.iter().map(|&v| v as f64).sum::<f64>();
        }
    }
}

dispatch!(point_body, point_avx512, point_avx2, (keys: &[u64], sd: &ScaleData, out: &mut [f64]));

/// Adds Σ_p X_p(σ) (without the −Σ b constant) for each keyed sample.
pub fn point_accumulate(keys: &[u64], sd: &ScaleData, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if has_avx512() {
            return unsafe { point_avx512(keys, sd, out) };
        }
        if has_avx2() {
            return unsafe { point_avx2(keys, sd, out) };
        }
    }
    point_body(keys, sd, out)
}
