//! Library results against independent reference computations written here.

use rmflab::arith::{
    divisor_alpha_sieve, divisor_integer_sieve, partial_sum_moments_mc, rough_count, smooth_count, SteinhausSample,
};
use rmflab::field::{default_grid, eval_grid, gaussian_surrogate_grid, FieldPlan};
use rmflab::moments::{laplace_factor, table_for};
use rmflab::primes::{variance_profile, VarianceProfile, DEFAULT_C0};
use rmflab::stats::{ks_critical_two, ks_two_sample, mean_var, normal_sf};
use rmflab::walks::{ballot_with_upper, BallotEvent, Method, ProbEstimate};

fn factor(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        let mut k = 0;
        while n.is_multiple_of(p) {
            n /= p;
            k += 1;
        }
        if k > 0 {
            out.push((p, k));
        }
        p += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

#[test]
fn integer_divisor_counts_match_tuple_enumeration() {
    let limit = 300u64;
    let d3 = divisor_integer_sieve(limit, 3).unwrap();
    for n in 1..=limit {
        // ordered triples (a, b, c) with abc = n
        let mut count = 0;
        for a in (1..=n).filter(|a| n % a == 0) {
            count += (1..=n / a).filter(|b| (n / a) % b == 0).count() as u64;
        }
        assert_eq!(d3[n as usize], count, "n = {n}");
    }
}

#[test]
fn alpha_divisor_is_multiplicative_over_coprime_pairs() {
    let d = divisor_alpha_sieve(5000, 1.7);
    for m in 1..70u64 {
        for n in 1..70u64 {
            if factor(m).iter().all(|(p, _)| n % p != 0) {
                let lhs = d.get(m * n);
                assert!((lhs - d.get(m) * d.get(n)).abs() <= 1e-12 * lhs, "{m} {n}");
            }
        }
    }
}

#[test]
fn smooth_and_rough_counts_match_factorization() {
    for (x, y) in [(1000u64, 7u64), (5000, 30), (2000, 50), (777, 1), (4096, 2)] {
        let largest = |n: u64| factor(n).last().map_or(1, |f| f.0);
        let smallest = |n: u64| factor(n).first().map_or(u64::MAX, |f| f.0);
        let smooth = (1..=x).filter(|&n| largest(n) <= y).count() as u64;
        let rough = (1..=x).filter(|&n| smallest(n) > y).count() as u64;
        assert_eq!(smooth_count(x, y).unwrap(), smooth, "Ψ({x}, {y})");
        assert_eq!(rough_count(x, y).unwrap(), rough, "Φ({x}, {y})");
    }
}

#[test]
fn multiplicative_function_is_completely_multiplicative() {
    let table = rmflab::primes::sieve_primes(1 << 20, true).unwrap();
    let s = rmflab::arith::sample_f(&table, 99).unwrap();
    let mut state = 12345u64;
    for _ in 0..10_000 {
        state = rmflab::rng::mix64(state);
        let m = 1 + state % 1024;
        let n = 1 + (state >> 20) % 1024;
        let sum = s.f_turn(m).unwrap().wrapping_add(s.f_turn(n).unwrap());
        assert_eq!(s.f_turn(m * n).unwrap(), sum, "f({m}·{n})");
    }
}

#[test]
fn moments_are_nondecreasing_in_q() {
    let qs = [0.25, 0.5, 0.75, 1.0, 1.5];
    let est = partial_sum_moments_mc(2000, 1.3, &qs, 2000, 8).unwrap();
    // Lyapunov: (E|S|^{2q})^{1/q} is nondecreasing in q on any fixed sample set
    let norms: Vec<f64> = est.iter().zip(&qs).map(|(e, q)| e.mean.powf(1.0 / q)).collect();
    assert!(norms.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)), "{norms:?}");
}

fn bessel_i(n: u32, z: f64) -> f64 {
    let mut term = (0.5 * z).powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
    let mut sum = term;
    for k in 1..200 {
        term *= 0.25 * z * z / (k as f64 * (k + n) as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

#[test]
fn laplace_factor_matches_bessel_expansion() {
    // e^{u cos θ} e^{v cos 2θ} averages to I_0(u)I_0(v) + 2 Σ_m I_{2m}(u) I_m(v)
    for gamma in [0.5, 1.0, 2.0, 3.0] {
        for p in [2.0f64, 3.0, 23.0, 1009.0] {
            let u = gamma * p.powf(-0.5);
            let v = 0.5 * gamma * p.powf(-1.0);
            let mut want = bessel_i(0, u) * bessel_i(0, v);
            for m in 1..30 {
                want += 2.0 * bessel_i(2 * m, u) * bessel_i(m, v);
            }
            let got = laplace_factor(gamma, 0.5, p.ln()).unwrap();
            assert!((got - want).abs() <= 1e-13 * want, "γ={gamma} p={p}: {got} vs {want}");
        }
    }
}

/// P(G_k > w, G_j <= a for j <= k) for a walk of k N(0, v) steps, by
/// propagating the killed density on a fine grid.
fn killed_walk_probability(k: u32, v: f64, a: f64, w: f64) -> f64 {
    let dx = 0.004;
    let lo = -12.0 * (k as f64 * v).sqrt();
    let n = ((a - lo) / dx).ceil() as usize + 1;
    let xs: Vec<f64> = (0..n).map(|i| lo + i as f64 * dx).collect();
    let g = |x: f64| (-x * x / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
    let mut dens: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let half = (8.0 * v.sqrt() / dx) as isize;
    let kern: Vec<f64> = (-half..=half).map(|i| g(i as f64 * dx) * dx).collect();
    for _ in 1..k {
        let mut next = vec![0.0; n];
        for (i, nx) in next.iter_mut().enumerate() {
            let mut s = 0.0;
            for (o, kv) in kern.iter().enumerate() {
                let j = i as isize + o as isize - half;
                if j >= 0 && (j as usize) < n {
                    s += kv * dens[j as usize];
                }
            }
            *nx = s;
        }
        dens = next;
    }
    // trapezoid over (w, a]
    let pts: Vec<(f64, f64)> = xs.iter().copied().zip(dens).filter(|(x, _)| *x >= w).collect();
    pts.windows(2).map(|p| 0.5 * (p[0].1 + p[1].1) * (p[1].0 - p[0].0)).sum()
}

#[test]
fn constant_barrier_ballot_matches_killed_density_and_reflection() {
    let t = 20;
    let profile = VarianceProfile::constant(0.5, t);
    let (a, w) = (4.0, 1.0);
    let ev = BallotEvent { k: t, w, window: f64::INFINITY, slack: 0.0 };
    let weights = ballot_with_upper(&|_| a, &profile, 1, &ev, 0.0, 200_000, 17);
    let est = ProbEstimate::from_weights(&weights, Method::Naive);
    let exact = killed_walk_probability(t, 0.5, a, w);
    assert!((est.p_hat - exact).abs() <= 4.0 * est.stderr, "{} ± {} vs {exact}", est.p_hat, est.stderr);
    // Brownian reflection with the barrier shifted by 0.5826 step deviations
    // for discrete monitoring
    let s = (0.5 * t as f64).sqrt();
    let shifted = a + 0.5826 * 0.5f64.sqrt();
    // endpoints in (w, a] reflect to (2a' − a, 2a' − w]
    let free = normal_sf(w / s) - normal_sf(a / s);
    let reflection = free - (normal_sf((2.0 * shifted - a) / s) - normal_sf((2.0 * shifted - w) / s));
    assert!((est.p_hat - reflection).abs() <= 4.0 * est.stderr + 0.005, "{} vs {reflection}", est.p_hat);
}

/// Top-scale maxima and values at h = 0 for both backends at t = 2.
fn small_depth_samples(n: usize) -> [Vec<f64>; 4] {
    let t = 2;
    let table = table_for(t).unwrap();
    let ng = default_grid(t);
    let profile = variance_profile(0.5, t, DEFAULT_C0, Some(&table));
    let mut out: [Vec<f64>; 4] = Default::default();
    for i in 0..n as u64 {
        let s = SteinhausSample::lazy(&table, 1000 + i);
        let ag = eval_grid(&s, 0.5, t, ng).unwrap();
        let gg = gaussian_surrogate_grid(5000 + i, &profile, ng).unwrap();
        out[0].push(ag.top().iter().copied().fold(f64::MIN, f64::max));
        out[1].push(gg.top().iter().copied().fold(f64::MIN, f64::max));
        out[2].push(ag.top()[0]);
        out[3].push(gg.top()[0]);
    }
    out
}

#[test]
fn backends_agree_pointwise_at_small_depth() {
    let [_, _, a0, g0] = small_depth_samples(1000);
    let n = a0.len();
    let (ma, va) = mean_var(&a0);
    let (mg, vg) = mean_var(&g0);
    let se = ((va + vg) / n as f64).sqrt();
    assert!((ma - mg).abs() <= 4.0 * se, "means {ma} {mg}");
    assert!((va - vg).abs() <= 4.0 * (2.0 / n as f64).sqrt() * va.max(vg), "variances {va} {vg}");
    let ks = ks_two_sample(&a0, &g0);
    assert!(ks <= ks_critical_two(n, n, 0.01), "pointwise KS {ks}");
}

/// The surrogate is block-constant with independent sibling blocks, while the
/// arithmetic field decorrelates smoothly, so the maximum over [0, 1] differs
/// by a structural amount (at t = 2 the mean maximum is 0.95 against 0.82
/// and the KS distance 0.15). Run with --ignored to see the current figures.
#[test]
#[ignore = "maxima of the two backends differ structurally at t = 2"]
fn backends_agree_on_the_maximum_at_small_depth() {
    let [am, gm, _, _] = small_depth_samples(1000);
    let ks = ks_two_sample(&am, &gm);
    assert!(ks <= ks_critical_two(am.len(), gm.len(), 0.01), "max KS {ks}");
}

#[test]
fn increments_have_the_scale_variances() {
    let t = 2;
    let table = table_for(t).unwrap();
    let plan = FieldPlan::new(&table, 0.5, t, DEFAULT_C0).unwrap();
    let profile = variance_profile(0.5, t, DEFAULT_C0, Some(&table));
    let n = 4000;
    let samples: Vec<SteinhausSample> = (0..n).map(|i| SteinhausSample::lazy(&table, i)).collect();
    let grid = [0.0, 0.3, 0.71];
    let fields: Vec<_> = samples.iter().map(|s| plan.grid(s, &grid)).collect();
    for j in 1..=t {
        for k in 0..grid.len() {
            let y: Vec<f64> = fields.iter().map(|f| f.increment(j, k)).collect();
            let (_, var) = mean_var(&y);
            let v = profile.field(j);
            // var of a sample variance is about 2v²/n for near-Gaussian data
            let se = v * (2.0 / n as f64).sqrt();
            assert!((var - v).abs() <= 4.0 * se, "j={j} k={k}: {var} vs {v}");
        }
    }
}
