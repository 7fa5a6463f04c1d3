//! Small numeric helpers shared by the kernels and estimators.

use std::f64::consts::TAU;

/// cos(2πs) for any real `s`, accurate to a few ulps.
#[inline(always)]
pub fn cos_turn(s: f64) -> f64 {
    let r = s - s.round_ties_even();
    let y = 0.25 - r.abs();
    let z = TAU * y;
    let z2 = z * z;
    sin_poly(z, z2)
}

#[inline(always)]
fn sin_poly(z: f64, z2: f64) -> f64 {
    const C: [f64; 10] = [
        1.0,
        -1.0 / 6.0,
        1.0 / 120.0,
        -1.0 / 5040.0,
        1.0 / 362_880.0,
        -1.0 / 39_916_800.0,
        1.0 / 6_227_020_800.0,
        -1.0 / 1_307_674_368_000.0,
        1.0 / 355_687_428_096_000.0,
        -1.0 / 121_645_100_408_832_000.0,
    ];
    let mut p = C[9];
    for k in (0..9).rev() {
        p = p.mul_add(z2, C[k]);
    }
    z * p
}

/// (cos, sin) of 2πu/2^32.
#[inline(always)]
pub fn sincos_bits(u: u32) -> (f64, f64) {
    let s = u as i32 as f64 * (1.0 / 4_294_967_296.0);
    (cos_turn(s), cos_turn(s - 0.25))
}

/// Single-precision cos(2πu/2^32) for the sampling kernels.
#[inline(always)]
pub fn cos_bits_f32(u: u32) -> f32 {
    let s = u as i32 as f32 * (1.0 / 4_294_967_296.0);
    let y = 0.25 - s.abs();
    let z = std::f32::consts::TAU * y;
    let z2 = z * z;
    let p = (-2.505_210_8e-8f32).mul_add(z2, 2.755_731_9e-6);
    let p = p.mul_add(z2, -1.984_127e-4);
    let p = p.mul_add(z2, 8.333_333e-3);
    let p = p.mul_add(z2, -0.166_666_67);
    let p = p.mul_add(z2, 1.0);
    z * p
}

/// Compensated (Neumaier) sum.
pub fn neumaier<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in it {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Pairwise sum with a fixed split, so the result depends only on the input order.
pub fn pairwise(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise(&xs[..mid]) + pairwise(&xs[mid..])
}

/// log(Σ exp(x_i)) without overflow.
pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cos_turn_matches_std() {
        let mut worst: f64 = 0.0;
        for i in -4000..4000 {
            let s = i as f64 * 0.000_731 + 0.1234;
            worst = worst.max((cos_turn(s) - (TAU * s).cos()).abs());
        }
        assert!(worst < 5e-15, "{worst}");
    }

    #[test]
    fn sincos_bits_matches_std() {
        for &u in &[0u32, 1, 1 << 30, 1 << 31, 3 << 30, 0xdead_beef, u32::MAX] {
            let th = TAU * u as f64 / 4_294_967_296.0;
            let (c, s) = sincos_bits(u);
            assert!((c - th.cos()).abs() < 2e-15);
            assert!((s - th.sin()).abs() < 2e-15);
        }
    }

    #[test]
    fn f32_cos_is_close() {
        for k in 0..1000u32 {
            let u = k.wrapping_mul(0x9e37_79b9);
            let th = TAU * u as f64 / 4_294_967_296.0;
            assert!((cos_bits_f32(u) as f64 - th.cos()).abs() < 3e-7);
        }
    }

    #[test]
    fn pairwise_and_neumaier_agree() {
        let xs: Vec<f64> = (1..10_000).map(|k| 1.0 / k as f64).collect();
        assert!((pairwise(&xs) - neumaier(xs.iter().copied())).abs() < 1e-13);
    }
}
