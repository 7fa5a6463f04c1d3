//! Chaos integrals Z = e^{-t} ∫_0^1 e^{γ S_t(σ+ih)} dh, their moments, the
//! per-prime Laplace oracle for E Z, and pseudomoments of the twisted
//! Dirichlet sum.

use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{divisor_alpha_sieve, prime_stream_key, EstimateConfig, MomentEstimate};
use crate::error::{capacity, Error, Result};
use crate::field::kernel::Angles;
use crate::field::laws::LogMassLaw;
use crate::field::{default_grid, min_grid, uniform_grid, Backend, FieldGrid, FieldPlan, Tree};
use crate::num::{cos_turn, log_sum_exp, neumaier, pairwise};
use crate::primes::{scale_bounds, sieve_primes, MAX_LIMIT, variance_profile_analytic, PrimeTable, DEFAULT_C0};
use crate::rng::{derive, sample_key, Stream};
use crate::walks::{barrier_eval, good_set_mask, Barrier};

/// Deepest surrogate level handled by an explicit leaf average.
pub const EXACT_DEPTH: u32 = 9;
/// Deepest surrogate level for which barrier-truncated chaos is computed leaf by leaf.
pub const BARRIER_DEPTH: u32 = 16;
/// Lattice step of the tabulated subtree mass law.
const MASS_DY: f64 = 0.02;
/// Samples per batch on the arithmetic backend.
const BATCH: usize = 8;

#[derive(Debug, Clone, Serialize)]
pub struct ChaosConfig {
    pub gamma: f64,
    pub q: f64,
    pub sigma: f64,
    pub t: u32,
    pub backend: Backend,
    pub n_grid: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub barrier: Option<Barrier>,
}

impl ChaosConfig {
    /// σ = 1/2, no barrier, the default grid for t.
    pub fn new(gamma: f64, q: f64, t: u32, backend: Backend) -> Self {
        ChaosConfig { gamma, q, sigma: 0.5, t, backend, n_grid: default_grid(t), barrier: None }
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 4.0) {
            return Err(Error::Domain(format!("gamma = {} outside (0, 4)", self.gamma)));
        }
        if !(self.q >= 0.0) {
            return Err(Error::Domain(format!("q = {} must be >= 0", self.q)));
        }
        if self.t == 0 {
            return Err(Error::Domain("t must be at least 1".into()));
        }
        if self.backend == Backend::Arithmetic && self.n_grid < min_grid(self.t) {
            return Err(Error::Usage(format!(
                "grid of {} points under-resolves t = {}; need at least {}",
                self.n_grid,
                self.t,
                min_grid(self.t)
            )));
        }
        Ok(())
    }

    /// Moments past q = 2/γ need not exist; such runs are allowed but flagged.
    pub fn flags(&self, q: f64) -> Vec<String> {
        let mut f = Vec::new();
        if q > 2.0 / self.gamma + 0.25 {
            f.push(format!("q = {q} exceeds 2/gamma + 0.25 = {:.4}: moment may be infinite", 2.0 / self.gamma + 0.25));
        }
        f
    }

    fn estimate_config(&self, q: f64, seed: u64) -> EstimateConfig {
        EstimateConfig {
            t: Some(self.t),
            gamma: Some(self.gamma),
            q,
            sigma: Some(self.sigma),
            seed,
            backend: Some(backend_name(self.backend).into()),
            n_grid: Some(self.n_grid),
            barrier_a: self.barrier.map(|b| b.a),
            ..Default::default()
        }
    }
}

pub fn backend_name(b: Backend) -> &'static str {
    match b {
        Backend::Arithmetic => "arithmetic",
        Backend::Gaussian => "gaussian",
    }
}

/// Trapezoid weights in log form for a grid on [0, 1].
fn log_trapezoid(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|k| {
            let lo = if k == 0 { grid[0] } else { 0.5 * (grid[k - 1] + grid[k]) };
            let hi = if k == n - 1 { grid[n - 1] } else { 0.5 * (grid[k] + grid[k + 1]) };
            let w = hi - lo;
            if w > 0.0 { w.ln() } else { f64::NEG_INFINITY }
        })
        .collect()
}

/// log Z for one field on its grid; −∞ when the barrier excludes every point.
pub fn chaos_log_integral(gridf: &FieldGrid, gamma: f64, barrier: Option<&Barrier>) -> f64 {
    if gridf.is_empty() {
        return f64::NEG_INFINITY;
    }
    let lw = log_trapezoid(&gridf.grid);
    let top = gridf.top();
    let mask = barrier.map(|b| good_set_mask(gridf, b));
    let terms = (0..gridf.len())
        .filter(|&k| mask.as_ref().is_none_or(|m| m[k]))
        .map(|k| lw[k] + gamma * top[k]);
    log_sum_exp(terms) - gridf.t as f64
}

/// Trapezoid rule for e^{-t} ∫_0^1 e^{γ S_t} dh, optionally restricted to the good set.
pub fn chaos_integral(gridf: &FieldGrid, gamma: f64, barrier: Option<&Barrier>) -> f64 {
    chaos_log_integral(gridf, gamma, barrier).exp()
}

/// log Z for one surrogate realization, integrating exactly over the leaves.
fn surrogate_log_mass(tree: &Tree, law: Option<&LogMassLaw>, key: u64, gamma: f64, barrier: Option<&Barrier>) -> f64 {
    let t = tree.t;
    let tf = t as f64;
    if let Some(b) = barrier {
        let levels = tree.levels(key, t);
        let mut ok = vec![true];
        for j in 1..=t {
            let bj = tree.branch[j as usize - 1] as usize;
            let (lo, hi) = barrier_eval(b, j);
            let check = j >= b.r.max(1) && j <= b.t;
            ok = levels[j as usize - 1]
                .iter()
                .enumerate()
                .map(|(i, &v)| ok[i / bj] && (!check || (v >= lo && v <= hi)))
                .collect();
        }
        let top = &levels[t as usize - 1];
        let lse = log_sum_exp((0..top.len()).filter(|&i| ok[i]).map(|i| gamma * top[i]));
        return lse - (tree.count[t as usize] as f64).ln() - tf;
    }
    match law {
        None => {
            let s = tree.level_values(key, t);
            log_sum_exp(s.iter().map(|&v| gamma * v)) - (tree.count[t as usize] as f64).ln() - tf
        }
        Some(law) => {
            let m = t.min(EXACT_DEPTH);
            let s = tree.level_values(key, m);
            let mut u = Stream::new(derive(key, 0x6d61_7373));
            let terms: Vec<f64> = s.iter().map(|&v| gamma * v + law.sample(u.uniform())).collect();
            log_sum_exp(terms.iter().copied()) - (tree.count[m as usize] as f64).ln() - tf
        }
    }
}

/// log Z for N realizations, in sample order.
///
/// The arithmetic backend needs `table` to reach exp(e^t). The surrogate
/// averages exactly over its leaves for t <= 9; deeper trees keep the top
/// nine levels explicit and draw each subtree's mass from its tabulated law.
pub fn chaos_log_masses(cfg: &ChaosConfig, n: usize, seed: u64, table: Option<&PrimeTable>) -> Result<Vec<f64>> {
    Ok(chaos_log_masses_gammas(cfg, &[cfg.gamma], n, seed, table)?.remove(0))
}

/// [`chaos_log_masses`] for several γ on the same fields; `out[g][i]`.
pub fn chaos_log_masses_gammas(
    cfg: &ChaosConfig,
    gammas: &[f64],
    n: usize,
    seed: u64,
    table: Option<&PrimeTable>,
) -> Result<Vec<Vec<f64>>> {
    for &gamma in gammas {
        ChaosConfig { gamma, ..cfg.clone() }.validate()?;
    }
    let rows: Vec<Vec<f64>> = match cfg.backend {
        Backend::Arithmetic => {
            let table = table.ok_or_else(|| Error::Usage("arithmetic backend needs a prime table".into()))?;
            let plan = FieldPlan::new(table, cfg.sigma, cfg.t, DEFAULT_C0)?;
            let grid = uniform_grid(cfg.n_grid);
            let idx: Vec<usize> = (0..n).collect();
            let out: Vec<Vec<Vec<f64>>> = idx
                .par_chunks(BATCH)
                .map(|chunk| {
                    let angles: Vec<Angles> = chunk
                        .iter()
                        .map(|&i| Angles::Keyed(prime_stream_key(sample_key(seed, i as u64))))
                        .collect();
                    plan.grids(&angles, &grid)
                        .iter()
                        .map(|g| gammas.iter().map(|&gm| chaos_log_integral(g, gm, cfg.barrier.as_ref())).collect())
                        .collect()
                })
                .collect();
            out.concat()
        }
        Backend::Gaussian => {
            if cfg.barrier.is_some() && cfg.t > BARRIER_DEPTH {
                return capacity(format!(
                    "barrier-truncated surrogate chaos is computed leaf by leaf; t = {} exceeds {BARRIER_DEPTH}",
                    cfg.t
                ));
            }
            let profile = variance_profile_analytic(cfg.sigma, cfg.t, DEFAULT_C0);
            let tree = Tree::from_profile(&profile);
            let laws: Vec<Option<LogMassLaw>> = gammas
                .iter()
                .map(|&gm| {
                    (cfg.barrier.is_none() && cfg.t > EXACT_DEPTH)
                        .then(|| LogMassLaw::new(&tree, EXACT_DEPTH, gm, MASS_DY))
                })
                .collect();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let key = tree.realization(sample_key(seed, i as u64));
                    gammas
                        .iter()
                        .zip(&laws)
                        .map(|(&gm, law)| surrogate_log_mass(&tree, law.as_ref(), key, gm, cfg.barrier.as_ref()))
                        .collect()
                })
                .collect()
        }
    };
    Ok((0..gammas.len()).map(|g| rows.iter().map(|r| r[g]).collect()).collect())
}

fn check_samples(n: usize) -> Result<()> {
    if n < 100 {
        return Err(Error::Domain(format!("need at least 100 samples, got {n}")));
    }
    Ok(())
}

/// E Z^q for several q on the same realizations.
pub fn chaos_moments_mc(
    cfg: &ChaosConfig,
    qs: &[f64],
    n: usize,
    seed: u64,
    table: Option<&PrimeTable>,
) -> Result<Vec<MomentEstimate>> {
    check_samples(n)?;
    if let Some(q) = qs.iter().find(|q| !(**q >= 0.0)) {
        return Err(Error::Domain(format!("q = {q} must be >= 0")));
    }
    let logs = chaos_log_masses(cfg, n, seed, table)?;
    qs.iter()
        .map(|&q| {
            let vals: Vec<f64> = logs.iter().map(|&l| if q == 0.0 { 1.0 } else { (q * l).exp() }).collect();
            if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("Z^q overflowed at sample {i}")));
            }
            let mut est = MomentEstimate::from_values(&vals, cfg.estimate_config(q, seed));
            est.flags = cfg.flags(q);
            Ok(est)
        })
        .collect()
}

/// Primes needed for the arithmetic field at depth t.
pub fn table_for(t: u32) -> Result<PrimeTable> {
    let need = scale_bounds(t).1;
    if need > MAX_LIMIT as f64 {
        return capacity(format!(
            "arithmetic t = {t} needs primes up to exp(e^{t}) ≈ {need:.3e}, above the sieve limit 2^34 ≈ {MAX_LIMIT:.3e}"
        ));
    }
    sieve_primes(need.ceil() as u64, false)
}

/// Monte Carlo E Z^q over N realizations; sieves its own primes when arithmetic.
pub fn chaos_moment_mc(cfg: &ChaosConfig, n: usize, seed: u64) -> Result<MomentEstimate> {
    check_samples(n)?;
    let table = match cfg.backend {
        Backend::Arithmetic => {
            cfg.validate()?;
            Some(table_for(cfg.t)?)
        }
        Backend::Gaussian => None,
    };
    Ok(chaos_moments_mc(cfg, &[cfg.q], n, seed, table.as_ref())?.remove(0))
}

const QUAD_START: usize = 16;
const QUAD_MAX: usize = 256;

/// (1/2π) ∫ exp(γ(ρ cos θ + ρ² cos 2θ / 2)) dθ with ρ = p^{-σ}, by trapezoid doubling.
///
/// Stops once two successive rules agree to 1e-14; a disagreement above
/// 1e-10 at 256 points is an error.
pub fn laplace_factor(gamma: f64, sigma: f64, log_p: f64) -> std::result::Result<f64, f64> {
    let nodes = quad_nodes();
    let a = gamma * (-sigma * log_p).exp();
    let b = 0.5 * a * (-sigma * log_p).exp();
    // node k of the n-point rule is node k·(QUAD_MAX/n) of the finest one
    let f = |k: usize| a.mul_add(nodes[k].0, b * nodes[k].1).exp();
    let mut n = QUAD_START;
    let mut stride = QUAD_MAX / n;
    let mut sum: f64 = (0..n).map(|k| f(k * stride)).sum();
    let mut prev = sum / n as f64;
    loop {
        let odd: f64 = (0..n).map(|k| f(k * stride + stride / 2)).sum();
        sum += odd;
        n *= 2;
        stride /= 2;
        let cur = sum / n as f64;
        let change = ((cur - prev) / cur).abs();
        if change <= 1e-14 || (n >= QUAD_MAX && change <= 1e-10) {
            return Ok(cur);
        }
        if n >= QUAD_MAX {
            return Err(change);
        }
        prev = cur;
    }
}

/// (cos θ, cos 2θ) at θ = 2πk/QUAD_MAX.
fn quad_nodes() -> &'static [(f64, f64); QUAD_MAX] {
    static NODES: std::sync::OnceLock<[(f64, f64); QUAD_MAX]> = std::sync::OnceLock::new();
    NODES.get_or_init(|| {
        std::array::from_fn(|k| {
            let s = k as f64 / QUAD_MAX as f64;
            (cos_turn(s), cos_turn(2.0 * s))
        })
    })
}

/// log E e^{γ S_t(σ)}: a sum of per-prime log factors over C0 < p <= exp(e^t).
pub fn laplace_log_oracle(gamma: f64, sigma: f64, t: u32, table: &PrimeTable) -> Result<f64> {
    let hi = scale_bounds(t).1;
    if hi > table.limit as f64 {
        return capacity(format!(
            "t = {t} needs primes up to exp(e^{t}) ≈ {hi:.3e}; table stops at {}",
            table.limit
        ));
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let r = table.range(DEFAULT_C0 as f64, hi);
    let idx: Vec<usize> = r.collect();
    let parts: Vec<Result<f64>> = idx
        .par_chunks(1 << 14)
        .map(|c| {
            let mut logs = Vec::with_capacity(c.len());
            for &i in c {
                match laplace_factor(gamma, sigma, table.logs[i]) {
                    Ok(v) => logs.push(v.ln()),
                    Err(change) => {
                        return Err(Error::Numeric(format!(
                            "quadrature for p = {} did not converge (relative change {change:.2e} at {QUAD_MAX} points)",
                            table.primes[i]
                        )))
                    }
                }
            }
            Ok(neumaier(logs))
        })
        .collect();
    let parts = parts.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(neumaier(parts))
}

/// E e^{γ S_t(σ)} = Π_p E e^{γ X_p}.
pub fn laplace_oracle(gamma: f64, sigma: f64, t: u32, table: &PrimeTable) -> Result<f64> {
    Ok(laplace_log_oracle(gamma, sigma, t, table)?.exp())
}

/// E Z = e^{-t} E e^{γ S_t(σ)}, by Fubini and translation invariance in h.
pub fn chaos_mean_oracle(gamma: f64, sigma: f64, t: u32, table: &PrimeTable) -> Result<f64> {
    Ok((laplace_log_oracle(gamma, sigma, t, table)? - t as f64).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct PseudoConfig {
    pub x: u64,
    pub alpha: f64,
    pub q: f64,
    #[serde(rename = "T")]
    pub big_t: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    /// T must be at least x to this power.
    pub t_floor_exponent: f64,
}

impl PseudoConfig {
    /// T = x³.
    pub fn new(x: u64, alpha: f64, q: f64, n: usize, seed: u64) -> Self {
        PseudoConfig { x, alpha, q, big_t: (x as f64).powi(3), n, seed, t_floor_exponent: 2.0 }
    }

    pub fn in_theorem_regime(&self) -> bool {
        self.q < 2.0 * (self.alpha - 1.0) / (self.alpha * self.alpha)
    }
}

/// Σ_{n<=x} d_α(n)²/n, the mean square of the twisted sum as T → ∞.
pub fn pseudomoment_diagonal(x: u64, alpha: f64) -> f64 {
    let d = divisor_alpha_sieve(x, alpha);
    let terms: Vec<f64> = (1..=x).map(|n| d.get(n) * d.get(n) / n as f64).collect();
    pairwise(&terms)
}

/// |Σ_{n<=x} w_n n^{-it}|² with the phase t·log n/2π reduced exactly.
fn twisted_norm_sqr(w: &[f64], c: &[f64], t: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (&wn, &cn) in w.iter().zip(c) {
        let hi = t * cn;
        let lo = t.mul_add(cn, -hi);
        let s = (hi - hi.round()) + lo;
        re += wn * cos_turn(s);
        im -= wn * cos_turn(s - 0.25);
    }
    re * re + im * im
}

/// Monte Carlo (1/T) ∫_T^{2T} |Σ_{n<=x} d_α(n) n^{-1/2-it}|^{2q} dt with t uniform on [T, 2T].
pub fn pseudomoment_mc(cfg: &PseudoConfig) -> Result<MomentEstimate> {
    check_samples(cfg.n)?;
    if !(cfg.alpha > 0.0 && cfg.alpha <= 3.0) {
        return Err(Error::Domain(format!("alpha = {} outside (0, 3]", cfg.alpha)));
    }
    if !(cfg.q >= 0.0) {
        return Err(Error::Domain(format!("q = {} must be >= 0", cfg.q)));
    }
    let floor = (cfg.x as f64).powf(cfg.t_floor_exponent);
    if !(cfg.big_t >= floor) {
        return Err(Error::Domain(format!(
            "T = {:e} below x^{} = {floor:e}",
            cfg.big_t, cfg.t_floor_exponent
        )));
    }
    let d = divisor_alpha_sieve(cfg.x, cfg.alpha);
    let w: Vec<f64> = (1..=cfg.x).map(|n| d.get(n) / (n as f64).sqrt()).collect();
    let c: Vec<f64> = (1..=cfg.x).map(|n| (n as f64).ln() / std::f64::consts::TAU).collect();
    let vals: Vec<f64> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let u = Stream::new(derive(sample_key(cfg.seed, i as u64), 0x7073_6575)).uniform();
            let m = twisted_norm_sqr(&w, &c, cfg.big_t * (1.0 + u));
            if cfg.q == 0.0 { 1.0 } else { m.powf(cfg.q) }
        })
        .collect();
    let ecfg = EstimateConfig {
        x: Some(cfg.x),
        alpha: Some(cfg.alpha),
        q: cfg.q,
        seed: cfg.seed,
        big_t: Some(cfg.big_t),
        ..Default::default()
    };
    let mut est = MomentEstimate::from_values(&vals, ecfg);
    if !cfg.in_theorem_regime() {
        est.flags.push(format!(
            "q = {} outside the theorem regime q < 2(alpha-1)/alpha^2 = {:.4}",
            cfg.q,
            2.0 * (cfg.alpha - 1.0) / (cfg.alpha * cfg.alpha)
        ));
    }
    Ok(est)
}

/// One rung of the mesoscopic ladder.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Rung {
    pub j: u32,
    #[serde(rename = "T_j")]
    pub t_j: f64,
    pub x_j: f64,
}

/// T_j = e^{2(k+1)+j}/log x and x_j = e^{1/T_j} for j = 0..=J_k, where J_k is
/// the least J with T_J >= 1. The rung below j = 0 has T = 0 by convention.
///
/// x is passed as a float since interesting ladders need log log x >= 4.
pub fn mesoscopic_decomposition(x: f64, alpha: f64, k: u32) -> Result<Vec<Rung>> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must be positive")));
    }
    if !(x > std::f64::consts::E.exp()) {
        return Err(Error::Domain(format!("x = {x} too small: need log log log x > 0")));
    }
    let lx = x.ln();
    let lll = lx.ln().ln();
    if k as f64 > lll.floor() {
        return Err(Error::Domain(format!("k = {k} exceeds floor(log log log x) = {}", lll.floor())));
    }
    let base = 2.0 * (k as f64 + 1.0);
    // the tolerance keeps J exact when log log x is an integer up to rounding
    let j_k = (lx.ln() - base - 1e-9).ceil().max(0.0) as u32;
    Ok((0..=j_k)
        .map(|j| {
            let t_j = (base + j as f64).exp() / lx;
            Rung { j, t_j, x_j: (1.0 / t_j).exp() }
        })
        .collect())
}
