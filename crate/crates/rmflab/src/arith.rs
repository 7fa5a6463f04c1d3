//! Multiplicative arithmetic: d_α, smooth and rough counts, Steinhaus samples
//! and twisted partial sums.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{capacity, Error, Result};
use crate::num::{pairwise, sincos_bits};
use crate::primes::{sieve_primes, PrimeTable};
use crate::rng::{angle_bits, derive, sample_key};

#[derive(Debug, Clone)]
pub struct DivisorTable {
    pub alpha: f64,
    pub limit: u64,
    pub values: Vec<f64>,
}

impl DivisorTable {
    pub fn get(&self, n: u64) -> f64 {
        self.values[n as usize]
    }
}

/// binom(α+k-1, k) for k = 0..=kmax.
pub fn prime_power_coefficients(alpha: f64, kmax: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(kmax + 1);
    c.push(1.0);
    for k in 1..=kmax {
        let prev = c[k - 1];
        c.push(prev * (alpha + k as f64 - 1.0) / k as f64);
    }
    c
}

/// d_α(n) for n <= limit. Index 0 is unused and holds 0.
pub fn divisor_alpha_sieve(limit: u64, alpha: f64) -> DivisorTable {
    let n = limit.max(1) as usize;
    let coef = prime_power_coefficients(alpha, 64);
    let mut spf = vec![0u32; n + 1];
    let mut primes: Vec<u32> = Vec::new();
    // exponent of spf(m) in m, and m with that prime power removed
    let mut exp = vec![0u8; n + 1];
    let mut rest = vec![0u32; n + 1];
    let mut d = vec![0.0f64; n + 1];
    d[1] = 1.0;
    for i in 2..=n {
        if spf[i] == 0 {
            spf[i] = i as u32;
            primes.push(i as u32);
            exp[i] = 1;
            rest[i] = 1;
            d[i] = alpha;
        }
        let si = spf[i];
        for &p in &primes {
            let m = i * p as usize;
            if p > si || m > n {
                break;
            }
            spf[m] = p;
            if p == si {
                exp[m] = exp[i] + 1;
                rest[m] = rest[i];
            } else {
                exp[m] = 1;
                rest[m] = i as u32;
            }
            d[m] = d[rest[m] as usize] * coef[exp[m] as usize];
        }
    }
    DivisorTable { alpha, limit: n as u64, values: d }
}

/// Exact d_k(n) for integer k in 1..=3 and n <= 10^6, by repeated Dirichlet
/// convolution with the constant function 1.
pub fn divisor_integer_sieve(limit: u64, k: u32) -> Result<Vec<u64>> {
    if !(1..=3).contains(&k) || limit > 1_000_000 {
        return capacity(format!("exact mode needs k in 1..=3 and limit <= 10^6 (k={k}, limit={limit})"));
    }
    let n = limit as usize;
    let mut d = vec![1u64; n + 1];
    d[0] = 0;
    for _ in 1..k {
        let mut next = vec![0u64; n + 1];
        for a in 1..=n {
            let mut m = a;
            while m <= n {
                next[m] += d[a];
                m += a;
            }
        }
        d = next;
    }
    Ok(d)
}

pub const ORACLE_MAX: u64 = 100_000;

/// d_α(n) from the local factors (1 - X)^{-α} = exp(α Σ X^k / k), multiplied
/// out over the divisor lattice of n.
pub fn divisor_alpha_oracle(n: u64, alpha: f64) -> Result<f64> {
    if n == 0 || n > ORACLE_MAX {
        return capacity(format!("oracle supports 1 <= n <= {ORACLE_MAX}, got {n}"));
    }
    let mut factors = Vec::new();
    let mut m = n;
    let mut p = 2;
    while p * p <= m {
        let mut k = 0;
        while m.is_multiple_of(p) {
            m /= p;
            k += 1;
        }
        if k > 0 {
            factors.push((p, k));
        }
        p += 1;
    }
    if m > 1 {
        factors.push((m, 1));
    }
    // coefficients indexed by divisors of the part of n processed so far
    let mut coeff: Vec<(u64, f64)> = vec![(1, 1.0)];
    for (p, k) in factors {
        let local = exp_log_series(alpha, k);
        let mut next = Vec::with_capacity(coeff.len() * (k + 1));
        for &(dv, c) in &coeff {
            let mut pk = 1;
            for e in local.iter() {
                next.push((dv * pk, c * e));
                pk *= p;
            }
        }
        coeff = next;
    }
    Ok(coeff.iter().find(|&&(dv, _)| dv == n).map_or(0.0, |&(_, c)| c))
}

/// Coefficients e_0..e_k of exp(α Σ_{i>=1} X^i / i), via k e_k = α Σ_{i=1}^k e_{k-i}.
fn exp_log_series(alpha: f64, k: usize) -> Vec<f64> {
    let mut e = vec![1.0];
    for m in 1..=k {
        let s: f64 = e.iter().sum();
        e.push(alpha * s / m as f64);
    }
    e
}

pub const COUNT_MAX: u64 = 100_000_000;

fn check_count_args(x: u64, y: u64) -> Result<()> {
    if !(1 <= y && y <= x && x <= COUNT_MAX) {
        return Err(Error::Domain(format!("need 1 <= y <= x <= 10^8, got x={x}, y={y}")));
    }
    Ok(())
}

const COUNT_SEGMENT: u64 = 1 << 18;

/// Ψ(x, y): n <= x whose prime factors are all <= y (n = 1 included).
pub fn smooth_count(x: u64, y: u64) -> Result<u64> {
    check_count_args(x, y)?;
    if y >= x {
        return Ok(x);
    }
    if y.saturating_mul(y) >= x {
        // a non-smooth n <= x has exactly one prime factor above y, to the first power
        let t = sieve_primes(x.max(2), false)?;
        let big: u64 = t.primes[t.pi(y as f64)..].iter().map(|&p| x / p).sum();
        return Ok(x - big);
    }
    let ps = sieve_primes(y.max(2), false)?.primes;
    let ps: Vec<u64> = ps.into_iter().filter(|&p| p <= y).collect();
    let nseg = x / COUNT_SEGMENT + 1;
    Ok((0..nseg)
        .into_par_iter()
        .map(|s| {
            let lo = s * COUNT_SEGMENT + 1;
            let hi = ((s + 1) * COUNT_SEGMENT).min(x);
            if lo > hi {
                return 0;
            }
            let mut rem: Vec<u64> = (lo..=hi).collect();
            for &p in &ps {
                let mut pk = p;
                loop {
                    let mut m = lo.div_ceil(pk) * pk;
                    while m <= hi {
                        rem[(m - lo) as usize] /= p;
                        m += pk;
                    }
                    match pk.checked_mul(p) {
                        Some(v) if v <= hi => pk = v,
                        _ => break,
                    }
                }
            }
            rem.iter().filter(|&&r| r == 1).count() as u64
        })
        .sum())
}

/// Φ(x, y): n <= x whose prime factors are all > y (n = 1 included).
pub fn rough_count(x: u64, y: u64) -> Result<u64> {
    check_count_args(x, y)?;
    if y == 1 {
        return Ok(x);
    }
    if y.saturating_mul(y) >= x {
        // a rough n > 1 below y^2 is a prime above y
        let t = sieve_primes(x.max(2), false)?;
        return Ok(1 + (t.pi(x as f64) - t.pi(y as f64)) as u64);
    }
    let ps = sieve_primes(y, false)?.primes;
    let nseg = x / COUNT_SEGMENT + 1;
    Ok((0..nseg)
        .into_par_iter()
        .map(|s| {
            let lo = s * COUNT_SEGMENT + 1;
            let hi = ((s + 1) * COUNT_SEGMENT).min(x);
            if lo > hi {
                return 0;
            }
            let mut hit = vec![false; (hi - lo + 1) as usize];
            for &p in &ps {
                let mut m = lo.div_ceil(p) * p;
                while m <= hi {
                    hit[(m - lo) as usize] = true;
                    m += p;
                }
            }
            hit.iter().filter(|&&h| !h).count() as u64
        })
        .sum())
}

/// A Steinhaus random multiplicative function, stored on the primes of a table.
///
/// Angles are kept as 32-bit turns: θ_p = 2π·turn/2^32, indexed like `table.primes`.
#[derive(Debug, Clone)]
pub struct SteinhausSample<'a> {
    pub seed: u64,
    pub limit: u64,
    pub table: &'a PrimeTable,
    key: u64,
    turns: Option<Vec<u32>>,
}

/// Key of the per-prime stream for a seed.
pub fn prime_stream_key(seed: u64) -> u64 {
    derive(seed, 0x7072_696d)
}

impl<'a> SteinhausSample<'a> {
    /// Sample whose angles are generated on demand instead of stored.
    pub fn lazy(table: &'a PrimeTable, seed: u64) -> Self {
        SteinhausSample { seed, limit: table.limit, table, key: prime_stream_key(seed), turns: None }
    }

    /// Sample with explicit angles (turns) for every prime of the table.
    pub fn from_turns(table: &'a PrimeTable, turns: Vec<u32>) -> Result<Self> {
        if turns.len() != table.len() {
            return Err(Error::Domain(format!(
                "{} angles for {} primes",
                turns.len(),
                table.len()
            )));
        }
        Ok(SteinhausSample { seed: 0, limit: table.limit, table, key: 0, turns: Some(turns) })
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn stored(&self) -> Option<&[u32]> {
        self.turns.as_deref()
    }

    #[inline]
    pub fn turn(&self, i: usize) -> u32 {
        match &self.turns {
            Some(v) => v[i],
            None => angle_bits(self.key, i as u64),
        }
    }

    pub fn angle(&self, i: usize) -> f64 {
        std::f64::consts::TAU * self.turn(i) as f64 / 4_294_967_296.0
    }

    /// Z_p for the prime with index i.
    pub fn z(&self, i: usize) -> Complex64 {
        let (c, s) = sincos_bits(self.turn(i));
        Complex64::new(c, s)
    }

    /// Angle of f(n) in turns, by factoring n with the smallest-prime-factor table.
    pub fn f_turn(&self, n: u64) -> Result<u32> {
        let spf = self.table.spf()?;
        if n > self.limit || n == 0 {
            return capacity(format!("n = {n} outside [1, {}]", self.limit));
        }
        let mut n = n as usize;
        let mut acc = 0u32;
        while n > 1 {
            let p = spf[n] as u64;
            let i = self.table.index_of(p).expect("spf entries are primes");
            acc = acc.wrapping_add(self.turn(i));
            n /= p as usize;
        }
        Ok(acc)
    }

    pub fn f(&self, n: u64) -> Result<Complex64> {
        let (c, s) = sincos_bits(self.f_turn(n)?);
        Ok(Complex64::new(c, s))
    }
}

/// Fresh angles for every prime of a factorization-capable table.
pub fn sample_f(table: &PrimeTable, seed: u64) -> Result<SteinhausSample<'_>> {
    table.spf()?;
    let key = prime_stream_key(seed);
    let turns = (0..table.len() as u64).into_par_iter().map(|i| angle_bits(key, i)).collect();
    Ok(SteinhausSample { seed, limit: table.limit, table, key, turns: Some(turns) })
}

const SUM_CHUNK: usize = 1 << 14;

/// Σ_{n<=x} d_α(n) f(n), factoring each n on the fly.
pub fn twisted_partial_sum(sample: &SteinhausSample, dtable: &DivisorTable, x: u64) -> Result<Complex64> {
    if x > sample.limit || x > dtable.limit {
        return capacity(format!(
            "x = {x} exceeds sample limit {} or divisor table limit {}",
            sample.limit, dtable.limit
        ));
    }
    if x == 0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let spf = sample.table.spf()?;
    let tb = sample.table;
    // index of each prime in the table, for primes up to x
    let nchunks = (x as usize).div_ceil(SUM_CHUNK);
    let parts: Vec<(f64, f64)> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * SUM_CHUNK + 1;
            let hi = ((c + 1) * SUM_CHUNK).min(x as usize);
            let (mut re, mut im) = (0.0, 0.0);
            for n in lo..=hi {
                let mut m = n;
                let mut acc = 0u32;
                while m > 1 {
                    let p = spf[m];
                    let i = tb.primes.partition_point(|&q| q < p as u64);
                    acc = acc.wrapping_add(sample.turn(i));
                    m /= p as usize;
                }
                let (cs, sn) = sincos_bits(acc);
                let w = dtable.values[n];
                re += w * cs;
                im += w * sn;
            }
            (re, im)
        })
        .collect();
    let re: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let im: Vec<f64> = parts.iter().map(|p| p.1).collect();
    Ok(Complex64::new(pairwise(&re), pairwise(&im)))
}

/// Precomputed factorization data for repeated partial sums up to `x`.
///
/// `weights[w][n]` are the coefficients of the w-th sum; the recurrence
/// f(n) = f(p) f(n/p), p = spf(n), makes one sample cost O(x).
pub struct TwistPlan {
    pub x: u64,
    pub nprimes: usize,
    prime_idx: Vec<u32>,
    cofactor: Vec<u32>,
    pub weights: Vec<Vec<f64>>,
}

impl TwistPlan {
    pub fn new(x: u64, alphas: &[f64]) -> Result<Self> {
        if x > crate::primes::MAX_SPF_LIMIT {
            return capacity(format!("x = {x} too large for a twist plan"));
        }
        let table = sieve_primes(x.max(2), true)?;
        let spf = table.spf()?;
        let n = x as usize;
        let mut prime_idx = vec![0u32; n + 1];
        let mut cofactor = vec![0u32; n + 1];
        for m in 2..=n {
            let p = spf[m] as usize;
            cofactor[m] = (m / p) as u32;
        }
        for (i, &p) in table.primes.iter().enumerate() {
            if p as usize <= n {
                prime_idx[p as usize] = i as u32;
            }
        }
        for m in 2..=n {
            let p = spf[m] as usize;
            prime_idx[m] = prime_idx[p];
        }
        let weights = alphas
            .iter()
            .map(|&a| {
                if a == 1.0 {
                    vec![1.0; n + 1]
                } else {
                    divisor_alpha_sieve(x, a).values
                }
            })
            .collect();
        Ok(TwistPlan { x, nprimes: table.pi(x as f64), prime_idx, cofactor, weights })
    }

    /// Partial sums Σ_{n<=c} w(n) f(n) for each weight vector and each cutoff c.
    ///
    /// `scratch` must hold x + 1 entries.
    pub fn sums(&self, key: u64, cutoffs: &[u64], scratch: &mut Vec<u32>) -> Vec<Vec<Complex64>> {
        let n = self.x as usize;
        scratch.resize(n + 1, 0);
        let tp: Vec<u32> = (0..self.nprimes as u64).map(|i| angle_bits(key, i)).collect();
        scratch[0] = 0;
        if n >= 1 {
            scratch[1] = 0;
        }
        for m in 2..=n {
            scratch[m] = scratch[self.cofactor[m] as usize].wrapping_add(tp[self.prime_idx[m] as usize]);
        }
        let mut out = vec![Vec::with_capacity(cutoffs.len()); self.weights.len()];
        let mut acc = vec![Complex64::new(0.0, 0.0); self.weights.len()];
        let mut start = 1usize;
        for &c in cutoffs {
            let c = (c as usize).min(n);
            if c >= start {
                for (w, a) in self.weights.iter().zip(acc.iter_mut()) {
                    *a += weighted_block(&scratch[start..=c], &w[start..=c]);
                }
                start = c + 1;
            }
            for (o, a) in out.iter_mut().zip(&acc) {
                o.push(*a);
            }
        }
        out
    }
}

fn weighted_block(turns: &[u32], w: &[f64]) -> Complex64 {
    const L: usize = 8;
    let mut re = [0.0f64; L];
    let mut im = [0.0f64; L];
    let mut tc = turns.chunks_exact(L);
    let mut wc = w.chunks_exact(L);
    for (t, ww) in (&mut tc).zip(&mut wc) {
        for l in 0..L {
            let (c, s) = sincos_bits(t[l]);
            re[l] = ww[l].mul_add(c, re[l]);
            im[l] = ww[l].mul_add(s, im[l]);
        }
    }
    let (mut r, mut i) = (re.iter().sum::<f64>(), im.iter().sum::<f64>());
    for (&t, &ww) in tc.remainder().iter().zip(wc.remainder()) {
        let (c, s) = sincos_bits(t);
        r += ww * c;
        i += ww * s;
    }
    Complex64::new(r, i)
}

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct EstimateConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub q: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub big_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub barrier_a: Option<f64>,
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub config: EstimateConfig,
    /// Conditions worth flagging, such as a q past the moment threshold.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl MomentEstimate {
    pub fn from_values(values: &[f64], config: EstimateConfig) -> Self {
        let n = values.len();
        let mean = pairwise(values) / n as f64;
        let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if n > 1 { pairwise(&dev) / (n - 1) as f64 } else { 0.0 };
        MomentEstimate { mean, stderr: (var / n as f64).sqrt(), samples: n, config, flags: Vec::new() }
    }

    /// |mean - target| in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.stderr == 0.0 {
            return if self.mean == target { 0.0 } else { f64::INFINITY };
        }
        (self.mean - target).abs() / self.stderr
    }
}

fn check_mc_args(alpha: f64, q: f64, n: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 3.0) {
        return Err(Error::Domain(format!("alpha = {alpha} outside (0, 3]")));
    }
    if !(q >= 0.0) {
        return Err(Error::Domain(format!("q = {q} must be >= 0")));
    }
    if n < 100 {
        return Err(Error::Domain(format!("need at least 100 samples, got {n}")));
    }
    Ok(())
}

/// Monte Carlo E|x^{-1/2} Σ_{n<=x} d_α(n) f(n)|^{2q} for several q on shared samples.
pub fn partial_sum_moments_mc(x: u64, alpha: f64, qs: &[f64], n: usize, seed: u64) -> Result<Vec<MomentEstimate>> {
    for &q in qs {
        check_mc_args(alpha, q, n)?;
    }
    let plan = TwistPlan::new(x, &[alpha])?;
    let sq: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| {
            let s = plan.sums(prime_stream_key(sample_key(seed, i as u64)), &[x], scratch)[0][0];
            s.norm_sqr() / x as f64
        })
        .collect();
    qs.iter()
        .map(|&q| {
            let vals: Vec<f64> = sq.iter().map(|&m| if q == 0.0 { 1.0 } else { m.powf(q) }).collect();
            if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite moment at sample {i}")));
            }
            let cfg = EstimateConfig { x: Some(x), alpha: Some(alpha), q, seed, ..Default::default() };
            Ok(MomentEstimate::from_values(&vals, cfg))
        })
        .collect()
}

pub fn partial_sum_moment_mc(x: u64, alpha: f64, q: f64, n: usize, seed: u64) -> Result<MomentEstimate> {
    Ok(partial_sum_moments_mc(x, alpha, &[q], n, seed)?.remove(0))
}

/// (log x)^{2q(α-1)} / ((log log x)^{3αq/2}(1-αq) + 1).
pub fn theory_envelope(x: f64, alpha: f64, q: f64) -> f64 {
    let lx = x.ln();
    let llx = lx.ln();
    lx.powf(2.0 * q * (alpha - 1.0)) / (llx.powf(1.5 * alpha * q) * (1.0 - alpha * q) + 1.0)
}
