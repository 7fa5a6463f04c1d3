//! Prime tables and deterministic prime sums.

use rayon::prelude::*;

use crate::error::{capacity, Error, Result};
use crate::num::neumaier;

pub const MAX_LIMIT: u64 = 1 << 34;
/// Largest limit for which a smallest-prime-factor array is kept (4 bytes per entry).
pub const MAX_SPF_LIMIT: u64 = 1 << 28;
/// Default head cut: primes p <= C0 are left out of the field.
pub const DEFAULT_C0: u64 = 20;

const SEGMENT: u64 = 1 << 19;

#[derive(Debug, Clone)]
pub struct PrimeTable {
    pub limit: u64,
    pub primes: Vec<u64>,
    pub logs: Vec<f64>,
    pub spf: Option<Vec<u32>>,
}

pub fn sieve_primes(limit: u64, with_spf: bool) -> Result<PrimeTable> {
    if !(2..=MAX_LIMIT).contains(&limit) {
        return capacity(format!("sieve limit {limit} outside [2, 2^34]"));
    }
    if with_spf && limit > MAX_SPF_LIMIT {
        return capacity(format!(
            "factorization support needs limit <= {MAX_SPF_LIMIT}, got {limit}"
        ));
    }
    let primes = segmented(limit);
    let logs = primes.par_iter().map(|&p| (p as f64).ln()).collect();
    let spf = with_spf.then(|| spf_sieve(limit as usize));
    Ok(PrimeTable { limit, primes, logs, spf })
}

fn small_primes(n: u64) -> Vec<u64> {
    let n = n as usize;
    let mut comp = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !comp[i] {
            out.push(i as u64);
            let mut m = i * i;
            while m <= n {
                comp[m] = true;
                m += i;
            }
        }
    }
    out
}

fn segmented(limit: u64) -> Vec<u64> {
    let root = (limit as f64).sqrt() as u64 + 2;
    let base: Vec<u64> = small_primes(root).into_iter().skip(1).collect();
    // segment k covers odd numbers in [lo, lo + 2*SEGMENT)
    let nseg = limit / (2 * SEGMENT) + 1;
    let parts: Vec<Vec<u64>> = (0..nseg)
        .into_par_iter()
        .map(|k| {
            let lo = k * 2 * SEGMENT + 1;
            let hi = (lo + 2 * SEGMENT).min(limit + 1);
            let mut comp = vec![false; SEGMENT as usize];
            for &p in &base {
                if p * p >= hi {
                    break;
                }
                let mut m = (p * p).max(lo.div_ceil(p) * p);
                if m % 2 == 0 {
                    m += p;
                }
                while m < hi {
                    comp[((m - lo) / 2) as usize] = true;
                    m += 2 * p;
                }
            }
            let mut out = Vec::new();
            let mut n = lo;
            while n < hi {
                if n > 1 && !comp[((n - lo) / 2) as usize] {
                    out.push(n);
                }
                n += 2;
            }
            out
        })
        .collect();
    let mut primes = Vec::with_capacity(parts.iter().map(Vec::len).sum::<usize>() + 1);
    primes.push(2);
    for part in parts {
        primes.extend(part);
    }
    primes
}

fn spf_sieve(limit: usize) -> Vec<u32> {
    let mut spf = vec![0u32; limit + 1];
    let mut i = 2;
    while i * i <= limit {
        if spf[i] == 0 {
            let mut m = i * i;
            while m <= limit {
                if spf[m] == 0 {
                    spf[m] = i as u32;
                }
                m += i;
            }
        }
        i += 1;
    }
    for (n, s) in spf.iter_mut().enumerate().skip(2) {
        if *s == 0 {
            *s = n as u32;
        }
    }
    spf
}

impl PrimeTable {
    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    /// Number of primes p <= x.
    pub fn pi(&self, x: f64) -> usize {
        self.primes.partition_point(|&p| (p as f64) <= x)
    }

    /// Index range of primes in (a, b].
    pub fn range(&self, a: f64, b: f64) -> std::ops::Range<usize> {
        let lo = self.pi(a);
        let hi = self.pi(b).max(lo);
        lo..hi
    }

    pub fn index_of(&self, p: u64) -> Option<usize> {
        self.primes.binary_search(&p).ok()
    }

    pub fn spf(&self) -> Result<&[u32]> {
        self.spf
            .as_deref()
            .ok_or_else(|| Error::Capacity("table built without factorization support".into()))
    }

    fn check_range(&self, a: f64, b: f64) -> Result<()> {
        if !(a < b) {
            return Err(Error::Domain(format!("empty range ({a}, {b}]")));
        }
        if b > self.limit as f64 {
            return capacity(format!("range end {b} exceeds table limit {}", self.limit));
        }
        Ok(())
    }
}

/// Σ_{a<p<=b} 1/p.
pub fn mertens_sum(a: f64, b: f64, table: &PrimeTable) -> Result<f64> {
    table.check_range(a, b)?;
    let r = table.range(a, b);
    Ok(neumaier(table.primes[r].iter().map(|&p| 1.0 / p as f64)))
}

/// Σ_{a<p<=b} p^{-2σ}.
pub fn prime_power_sum(a: f64, b: f64, sigma: f64, table: &PrimeTable) -> Result<f64> {
    if !(sigma > 0.0 && sigma <= 0.5) {
        return Err(Error::Domain(format!("sigma {sigma} outside (0, 1/2]")));
    }
    if sigma == 0.5 {
        return mertens_sum(a, b, table);
    }
    table.check_range(a, b)?;
    let r = table.range(a, b);
    let e = -2.0 * sigma;
    Ok(neumaier(table.logs[r].iter().map(|&l| (e * l).exp())))
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_CUTOFF: f64 = 40.0;

/// Principal-value exponential integral Ei(x).
///
/// Power series on [-1, 40], asymptotic expansion above 40, and the
/// continued fraction for E1 below -1 where the alternating series cancels.
pub fn exp_integral(x: f64) -> Result<f64> {
    if x == 0.0 || x.is_nan() {
        return Err(Error::Domain("Ei is singular at 0".into()));
    }
    Ok(if x > SERIES_CUTOFF {
        ei_asymptotic(x)
    } else if x >= -1.0 {
        ei_series(x)
    } else {
        -e1_continued_fraction(-x)
    })
}

fn ei_series(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..400 {
        term *= x / k as f64;
        let add = term / k as f64;
        sum += add;
        if add.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    EULER_GAMMA + x.abs().ln() + sum
}

fn ei_asymptotic(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let next = term * k as f64 / x;
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum {
            break;
        }
    }
    x.exp() / x * sum
}

fn e1_continued_fraction(z: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = z + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-z).exp()
}

/// Σ_{a<p<=b} p^{-s} predicted by the prime number theorem with no error term.
pub fn prime_sum_main_term(a: f64, b: f64, s: f64) -> f64 {
    prime_sum_main_term_log(a.ln(), b.ln(), s)
}

/// The same main term with the endpoints given as log a and log b, so that
/// ranges like (exp(e^{j-1}), exp(e^j)] stay representable for large j.
pub fn prime_sum_main_term_log(la: f64, lb: f64, s: f64) -> f64 {
    if lb <= la {
        return 0.0;
    }
    if (s - 1.0).abs() < 1e-15 {
        return lb.ln() - la.ln();
    }
    let ei = |x: f64| exp_integral(x).expect("nonzero argument");
    ei((1.0 - s) * lb) - ei((1.0 - s) * la)
}

/// Endpoints of I_j = (exp(e^{j-1}), exp(e^j)].
pub fn scale_bounds(j: u32) -> (f64, f64) {
    let lo = (j as f64 - 1.0).exp().exp();
    let hi = (j as f64).exp().exp();
    (lo, hi)
}

/// Lower end of the primes counted at scale j once the head p <= C0 is cut.
pub fn scale_lower(j: u32, c0: u64) -> f64 {
    scale_bounds(j).0.max(c0 as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileMode {
    Arithmetic,
    Analytic,
}

/// Per-scale increment variances.
///
/// `v[j-1]` is V_j(σ) summed over all of I_j; `v_field[j-1]` drops the head
/// primes p <= C0, matching what the field S_t actually contains.
#[derive(Debug, Clone, serde::Serialize)]
pub struct VarianceProfile {
    pub sigma: f64,
    pub t: u32,
    pub v: Vec<f64>,
    pub v_field: Vec<f64>,
    pub base_cut: u64,
    pub mode: ProfileMode,
}

impl VarianceProfile {
    /// V_j with 1-based j.
    pub fn get(&self, j: u32) -> f64 {
        self.v[j as usize - 1]
    }

    /// Variance of the field increment Y_j = S_j - S_{j-1}.
    pub fn field(&self, j: u32) -> f64 {
        self.v_field[j as usize - 1]
    }

    /// Σ_{j<=k} V_j.
    pub fn partial(&self, k: u32) -> f64 {
        self.v[..k as usize].iter().sum()
    }

    /// Var S_k: the sum over (C0, exp(e^k)].
    pub fn field_partial(&self, k: u32) -> f64 {
        self.v_field[..k as usize].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.partial(self.t)
    }

    pub fn field_total(&self) -> f64 {
        self.field_partial(self.t)
    }

    /// max_k |Σ_{j<=k} V_j − k/2|; the ballot estimates assume this stays below 1.
    pub fn half_drift(&self) -> f64 {
        // NaN must survive the fold, so no f64::max here
        (1..=self.t)
            .map(|k| (self.partial(k) - k as f64 / 2.0).abs())
            .fold(0.0, |m, d| if d.is_nan() || d > m { d } else { m })
    }

    /// Variance of the base block (C0, exp(e^r)].
    pub fn base(&self, r: u32) -> f64 {
        self.field_partial(r.min(self.t))
    }

    /// Profile with every V_j equal to `v`.
    pub fn constant(v: f64, t: u32) -> Self {
        VarianceProfile {
            sigma: 0.5,
            t,
            v: vec![v; t as usize],
            v_field: vec![v; t as usize],
            base_cut: DEFAULT_C0,
            mode: ProfileMode::Analytic,
        }
    }
}

/// Arithmetic profile when `table` reaches exp(e^t), analytic otherwise.
pub fn variance_profile(
    sigma: f64,
    t: u32,
    c0: u64,
    table: Option<&PrimeTable>,
) -> VarianceProfile {
    match table {
        Some(tb) if t == 0 || scale_bounds(t).1 <= tb.limit as f64 => {
            variance_profile_arithmetic(sigma, t, c0, tb)
        }
        _ => variance_profile_analytic(sigma, t, c0),
    }
}

fn increment_term(sigma: f64, l: f64) -> f64 {
    let q = (-2.0 * sigma * l).exp();
    0.5 * q + 0.125 * q * q
}

pub fn variance_profile_arithmetic(
    sigma: f64,
    t: u32,
    c0: u64,
    table: &PrimeTable,
) -> VarianceProfile {
    let sum = |lo: f64, hi: f64| {
        let r = table.range(lo, hi);
        neumaier(table.logs[r].iter().map(|&l| increment_term(sigma, l)))
    };
    let (v, v_field) = (1..=t)
        .map(|j| {
            let (lo, hi) = scale_bounds(j);
            (sum(lo, hi), sum(scale_lower(j, c0), hi))
        })
        .unzip();
    VarianceProfile { sigma, t, v, v_field, base_cut: c0, mode: ProfileMode::Arithmetic }
}

/// Primes up to this bound are summed exactly even in analytic mode.
pub const EXACT_HEAD: u64 = 1_000_000;

fn head_table() -> &'static PrimeTable {
    static HEAD: std::sync::OnceLock<PrimeTable> = std::sync::OnceLock::new();
    HEAD.get_or_init(|| sieve_primes(EXACT_HEAD, false).expect("small sieve"))
}

/// Analytic profile: exact sums below `EXACT_HEAD`, prime number theorem main
/// terms with no error term above it.
pub fn variance_profile_analytic(sigma: f64, t: u32, c0: u64) -> VarianceProfile {
    let head = head_table();
    let cut = EXACT_HEAD as f64;
    let lcut = cut.ln();
    // endpoints passed as logs: scale j spans (e^{j-1}, e^j] in log p
    let main = |llo: f64, lhi: f64| {
        let exact = if llo < lcut {
            let r = head.range(llo.exp(), lhi.exp().min(cut));
            neumaier(head.logs[r].iter().map(|&l| increment_term(sigma, l)))
        } else {
            0.0
        };
        let llo = llo.max(lcut);
        exact
            + 0.5 * prime_sum_main_term_log(llo, lhi, 2.0 * sigma)
            + 0.125 * prime_sum_main_term_log(llo, lhi, 4.0 * sigma)
    };
    let (v, v_field) = (1..=t)
        .map(|j| {
            let (llo, lhi) = ((j as f64 - 1.0).exp(), (j as f64).exp());
            (main(llo, lhi), main(llo.max((c0 as f64).ln()), lhi))
        })
        .unzip();
    VarianceProfile { sigma, t, v, v_field, base_cut: c0, mode: ProfileMode::Analytic }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_profile_is_finite_for_deep_fields() {
        let p = variance_profile_analytic(0.5, 30, DEFAULT_C0);
        assert!(p.v.iter().chain(&p.v_field).all(|v| v.is_finite() && *v >= 0.0));
        assert!((p.get(30) - 0.5).abs() < 1e-9);
        let q = variance_profile_analytic(0.5 - 2.0 / 30f64.exp(), 30, DEFAULT_C0);
        assert!(q.v.iter().all(|v| v.is_finite()));
        assert!(p.half_drift() < 1.0);
        // σ = 1/2 − 2/log x with log x = e^t inflates the top scales by up to
        // e^4, so the window is violated and has to be reported, not assumed
        assert!(q.half_drift() > 1.0);
        assert!(variance_profile_analytic(0.4, 4, DEFAULT_C0).half_drift() > 1.0);
    }

    fn brute_primes(n: u64) -> Vec<u64> {
        (2..=n).filter(|&k| (2..k).take_while(|d| d * d <= k).all(|d| k % d != 0)).collect()
    }

    #[test]
    fn tiny_limits() {
        assert_eq!(sieve_primes(10, false).unwrap().primes, vec![2, 3, 5, 7]);
        assert_eq!(sieve_primes(2, true).unwrap().primes, vec![2]);
        assert!(matches!(sieve_primes(1, false), Err(Error::Capacity(_))));
        assert!(matches!(sieve_primes(MAX_LIMIT + 1, false), Err(Error::Capacity(_))));
    }

    #[test]
    fn matches_trial_division_across_segments() {
        for &n in &[3u64, 97, 1000, 2 * SEGMENT + 5, 3 * SEGMENT - 1] {
            let t = sieve_primes(n, false).unwrap();
            assert_eq!(t.primes, brute_primes(n), "limit {n}");
        }
    }

    #[test]
    fn million_has_78498_primes() {
        let t = sieve_primes(1_000_000, true).unwrap();
        assert_eq!(t.len(), 78498);
        assert_eq!(small_primes(1_000_000).len(), 78498);
    }

    #[test]
    fn spf_is_smallest_prime_factor() {
        let t = sieve_primes(100_000, true).unwrap();
        let spf = t.spf().unwrap();
        for n in 2..=100_000usize {
            let s = spf[n] as usize;
            assert_eq!(n % s, 0);
            assert!((2..s).take_while(|d| d * d <= s).all(|d| !s.is_multiple_of(d)));
            assert!((2..s).all(|d| n % d != 0), "n={n}");
        }
        for &p in &t.primes {
            assert_eq!(spf[p as usize] as u64, p);
        }
    }

    #[test]
    fn mertens_examples() {
        let t = sieve_primes(1_000_000, false).unwrap();
        assert!((mertens_sum(2.0, 3.0, &t).unwrap() - 1.0 / 3.0).abs() < 1e-16);
        let direct: f64 = brute_primes(100).iter().skip(1).map(|&p| 1.0 / p as f64).sum();
        assert!((mertens_sum(2.0, 100.0, &t).unwrap() - direct).abs() < 1e-12);
        let main = 1e6f64.ln().ln() - 1e3f64.ln().ln();
        assert!((mertens_sum(1e3, 1e6, &t).unwrap() - main).abs() < 0.01);
        assert!(matches!(mertens_sum(10.0, 2e6, &t), Err(Error::Capacity(_))));
    }

    #[test]
    fn power_sum_examples() {
        let t = sieve_primes(100_000, false).unwrap();
        assert!((prime_power_sum(2.0, 3.0, 0.25, &t).unwrap() - 3f64.powf(-0.5)).abs() < 1e-15);
        assert_eq!(
            prime_power_sum(7.0, 5000.0, 0.5, &t).unwrap(),
            mertens_sum(7.0, 5000.0, &t).unwrap()
        );
        let s = prime_power_sum(1e2, 1e5, 0.49, &t).unwrap();
        assert!((s - prime_sum_main_term(1e2, 1e5, 0.98)).abs() < 0.02);
    }

    #[test]
    fn ei_small_argument() {
        let x: f64 = 1e-4;
        let want = EULER_GAMMA + x.ln() + x;
        assert!((exp_integral(x).unwrap() - want).abs() < 1e-7);
        assert!(matches!(exp_integral(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn ei_seams_are_continuous() {
        for &x in &[SERIES_CUTOFF, -1.0] {
            let lo = exp_integral(x - 1e-9).unwrap();
            let hi = exp_integral(x + 1e-9).unwrap();
            let d = (x.exp() / x) * 2e-9;
            assert!(((hi - lo) - d).abs() <= 1e-9 * lo.abs().max(1e-300), "seam {x}");
        }
        // both methods on the positive seam
        let x = SERIES_CUTOFF;
        let r = ei_series(x) / ei_asymptotic(x) - 1.0;
        assert!(r.abs() < 1e-12, "{r}");
        let r = ei_series(-1.0) / -e1_continued_fraction(1.0) - 1.0;
        assert!(r.abs() < 1e-13, "{r}");
    }

    #[test]
    fn profile_near_one_half() {
        let t = sieve_primes(scale_bounds(3).1 as u64 + 1, false).unwrap();
        let ar = variance_profile(0.5, 3, DEFAULT_C0, Some(&t));
        assert_eq!(ar.mode, ProfileMode::Arithmetic);
        let an = variance_profile_analytic(0.5, 3, DEFAULT_C0);
        for j in 2..=3 {
            assert!((ar.get(j) - 0.5).abs() < 0.05, "V_{j} = {}", ar.get(j));
        }
        for j in 1..=3 {
            assert!(ar.get(j) > 0.0 && an.get(j) > 0.0);
            assert!(ar.field(j) <= ar.get(j));
        }
        // primes 3..13 all sit below the head cut
        assert_eq!(ar.field(1), 0.0);
        assert_eq!(an.field(1), 0.0);
        assert!(ar.half_drift() < 1.0 && an.half_drift() < 1.0);
        let s = 0.5 - 3.0 / 1e8f64.ln();
        let ar = variance_profile(s, 3, DEFAULT_C0, Some(&t));
        let an = variance_profile_analytic(s, 3, DEFAULT_C0);
        for j in 1..=3 {
            assert!((ar.get(j) - an.get(j)).abs() < 0.05, "j={j}");
        }
        assert!(variance_profile_analytic(0.5, 0, DEFAULT_C0).v.is_empty());
    }
}
