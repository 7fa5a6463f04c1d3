//! Barriers, good sets, the Gaussian walk and ballot-type probabilities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::laws::EscapeLaw;
use crate::field::{FieldGrid, Tree};
use crate::num::pairwise;
use crate::primes::VarianceProfile;
use crate::rng::{derive, sample_key, Stream};

pub const DEFAULT_BUMP: f64 = 1000.0;

/// m(t) = t − (3/4) log t.
pub fn m_t(t: f64) -> f64 {
    t - 0.75 * t.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BarrierKind {
    Standard,
    Max,
}

impl std::str::FromStr for BarrierKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(BarrierKind::Standard),
            "max" => Ok(BarrierKind::Max),
            _ => Err(Error::Usage(format!("unknown barrier kind '{s}' (standard|max)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Barrier {
    pub kind: BarrierKind,
    pub a: f64,
    pub t: u32,
    pub c_bump: f64,
    pub r: u32,
}

impl Barrier {
    pub fn new(kind: BarrierKind, a: f64, t: u32) -> Self {
        Barrier { kind, a, t, c_bump: DEFAULT_BUMP, r: (a / 4.0).ceil().max(0.0) as u32 }
    }

    fn bump(&self, j: u32) -> f64 {
        (1.0 + j.min(self.t.saturating_sub(j)) as f64).ln()
    }

    pub fn upper(&self, j: u32) -> f64 {
        if j < self.r {
            return f64::INFINITY;
        }
        let (a, jf, t) = (self.a, j as f64, self.t as f64);
        match self.kind {
            BarrierKind::Standard => a + jf + 2.0 * self.bump(j),
            BarrierKind::Max => a + jf * (1.0 - 0.75 * t.ln() / t) + self.c_bump * self.bump(j),
        }
    }

    pub fn lower(&self, j: u32) -> f64 {
        if j < self.r {
            f64::NEG_INFINITY
        } else {
            self.a - 20.0 * j as f64
        }
    }
}

/// (L(j), U(j)); infinite below r.
pub fn barrier_eval(b: &Barrier, j: u32) -> (f64, f64) {
    (b.lower(j), b.upper(j))
}

/// A path 𝒢_r, …, 𝒢_t.
#[derive(Debug, Clone, Serialize)]
pub struct WalkPath {
    pub t: u32,
    pub r: u32,
    pub values: Vec<f64>,
}

impl WalkPath {
    /// 𝒢_ℓ for r <= ℓ <= t.
    pub fn at(&self, l: u32) -> f64 {
        self.values[(l - self.r) as usize]
    }
}

/// Step variances of the walk: r/2 for the base step, then V_j for j > r.
fn step_vars(profile: &VarianceProfile, r: u32) -> Vec<f64> {
    let mut v = vec![0.5 * r as f64];
    v.extend((r + 1..=profile.t).map(|j| profile.get(j)));
    v
}

fn walk_from(stream: &mut Stream, sd: &[f64], drift: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let mut g = 0.0;
    for (s, m) in sd.iter().zip(drift) {
        g += m + s * stream.normal();
        out.push(g);
    }
}

pub fn gaussian_walk(seed: u64, profile: &VarianceProfile, r: u32) -> Result<WalkPath> {
    if r > profile.t {
        return Err(Error::Domain(format!("r = {r} exceeds t = {}", profile.t)));
    }
    let sd: Vec<f64> = step_vars(profile, r).iter().map(|v| v.sqrt()).collect();
    let mut values = Vec::new();
    walk_from(&mut Stream::new(derive(seed, 0x77616c6b)), &sd, &vec![0.0; sd.len()], &mut values);
    Ok(WalkPath { t: profile.t, r, values })
}

pub fn in_good_set(path: &WalkPath, b: &Barrier) -> bool {
    (path.r.max(b.r)..=path.t).all(|j| {
        let (lo, hi) = barrier_eval(b, j);
        let v = path.at(j);
        v >= lo && v <= hi
    })
}

/// Grid points of a field whose path S_1..S_t stays inside the barrier.
pub fn good_set_mask(grid: &FieldGrid, b: &Barrier) -> Vec<bool> {
    let mut ok = vec![true; grid.len()];
    for j in b.r.max(1)..=grid.t.min(b.t) {
        let (lo, hi) = barrier_eval(b, j);
        for (k, o) in ok.iter_mut().enumerate() {
            let v = grid.at(j, k);
            *o &= v >= lo && v <= hi;
        }
    }
    ok
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    Tilted,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Method::Naive),
            "tilted" => Ok(Method::Tilted),
            _ => Err(Error::Usage(format!("unknown method '{s}' (naive|tilted)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub n: usize,
    pub method: Method,
    /// Kish effective sample size of the weights.
    pub ess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl ProbEstimate {
    pub fn from_weights(w: &[f64], method: Method) -> Self {
        let n = w.len() as f64;
        let mean = pairwise(w) / n;
        let sq: Vec<f64> = w.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise(&sq) / (n - 1.0).max(1.0);
        let w2: Vec<f64> = w.iter().map(|x| x * x).collect();
        let s2 = pairwise(&w2);
        let ess = if s2 > 0.0 { (mean * n).powi(2) / s2 } else { 0.0 };
        let warning = (method == Method::Tilted && ess < 50.0)
            .then(|| format!("effective sample size {ess:.1} below 50"));
        ProbEstimate {
            p_hat: mean.clamp(0.0, 1.0),
            stderr: (var / n).sqrt(),
            n: w.len(),
            method,
            ess,
            warning,
        }
    }

    /// stderr / p_hat, infinite when nothing was hit.
    pub fn rel_stderr(&self) -> f64 {
        if self.p_hat > 0.0 {
            self.stderr / self.p_hat
        } else {
            f64::INFINITY
        }
    }
}

/// Ballot event: 𝒢_k ∈ (w, w + window] and 𝒢_j <= upper(j) + slack for r <= j <= k.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BallotEvent {
    pub k: u32,
    pub w: f64,
    pub window: f64,
    pub slack: f64,
}

impl BallotEvent {
    pub fn new(k: u32, w: f64) -> Self {
        BallotEvent { k, w, window: f64::INFINITY, slack: 1.0 }
    }
}

fn check_ballot(b: &Barrier, ev: &BallotEvent, n: usize) -> Result<()> {
    if n < 1000 {
        return Err(Error::Usage(format!("{n} samples; ballot estimates need at least 1000")));
    }
    if 2 * ev.k < b.t || ev.k > b.t {
        return Err(Error::Domain(format!("k = {} outside [t/2, t] for t = {}", ev.k, b.t)));
    }
    if ev.w < 0.0 {
        return Err(Error::Domain(format!("w = {} must be nonnegative", ev.w)));
    }
    Ok(())
}

/// Walk probabilities under a constant exponential tilt of rate `alpha`.
///
/// Steps are drawn with mean α·var and reweighted by the exact likelihood
/// ratio exp(−α 𝒢_k + α² Σvar/2); α = 0 is plain Monte Carlo.
pub fn ballot_with_upper(
    upper: &(dyn Fn(u32) -> f64 + Sync),
    profile: &VarianceProfile,
    r: u32,
    ev: &BallotEvent,
    alpha: f64,
    n: usize,
    seed: u64,
) -> Vec<f64> {
    // with r beyond k the barrier never acts and 𝒢_k is one N(0, k/2) step
    let r = r.min(ev.k);
    let vars: Vec<f64> = step_vars(profile, r).into_iter().take((ev.k - r + 1) as usize).collect();
    let sd: Vec<f64> = vars.iter().map(|v| v.sqrt()).collect();
    let drift: Vec<f64> = vars.iter().map(|v| alpha * v).collect();
    let half_a2v = 0.5 * alpha * alpha * vars.iter().sum::<f64>();
    let ups: Vec<f64> = (r..=ev.k).map(|j| upper(j) + ev.slack).collect();
    (0..n)
        .into_par_iter()
        .map_init(Vec::new, |path, i| {
            walk_from(&mut Stream::new(sample_key(seed, i as u64)), &sd, &drift, path);
            let g = *path.last().expect("k >= r");
            let hit = g > ev.w && g <= ev.w + ev.window && path.iter().zip(&ups).all(|(v, u)| v <= u);
            if hit {
                (-alpha * g + half_a2v).exp()
            } else {
                0.0
            }
        })
        .collect()
}

/// P(𝒢_k > w, 𝒢_j <= U(j) + slack for all j <= k) by naive Monte Carlo.
pub fn ballot_mc(b: &Barrier, profile: &VarianceProfile, ev: &BallotEvent, n: usize, seed: u64) -> Result<ProbEstimate> {
    check_ballot(b, ev, n)?;
    let w = ballot_with_upper(&|j| b.upper(j), profile, b.r, ev, 0.0, n, seed);
    Ok(ProbEstimate::from_weights(&w, Method::Naive))
}

/// Same event, sampled under the tilt α = 2w/k and reweighted.
pub fn tilted_walk_mc(b: &Barrier, profile: &VarianceProfile, ev: &BallotEvent, n: usize, seed: u64) -> Result<ProbEstimate> {
    tilted_walk_mc_alpha(b, profile, ev, 2.0 * ev.w / ev.k as f64, n, seed)
}

pub fn tilted_walk_mc_alpha(
    b: &Barrier,
    profile: &VarianceProfile,
    ev: &BallotEvent,
    alpha: f64,
    n: usize,
    seed: u64,
) -> Result<ProbEstimate> {
    check_ballot(b, ev, n)?;
    let w = ballot_with_upper(&|j| b.upper(j), profile, b.r, ev, alpha, n, seed);
    Ok(ProbEstimate::from_weights(&w, Method::Tilted))
}

/// C · (A (U(k) − w + C′)/k) · e^{−w²/k} / √k.
pub fn ballot_bound(b: &Barrier, k: u32, w: f64, c: f64, cp: f64) -> f64 {
    let kf = k as f64;
    c * (b.a * (b.upper(k) - w + cp) / kf) * (-w * w / kf).exp() / kf.sqrt()
}

/// Constants (C, C′) of the ballot bound fitted on calibration cells.
#[derive(Debug, Clone, Serialize)]
pub struct BallotFit {
    pub c: f64,
    pub cp: f64,
    /// Residual sum of squares of the log-shape fit at the chosen C′.
    pub rss: f64,
}

/// Fit C′ by least squares on the log shape, then take C as the largest
/// ratio p_hat/shape over the cells so the bound dominates every one of them.
pub fn calibrate_ballot(b: &Barrier, cells: &[(u32, f64, f64)]) -> Result<BallotFit> {
    let pos: Vec<&(u32, f64, f64)> = cells.iter().filter(|c| c.2 > 0.0).collect();
    if pos.len() < 2 {
        return Err(Error::Numeric("ballot calibration needs two cells with p > 0".into()));
    }
    let min_gap = pos.iter().map(|&&(k, w, _)| b.upper(k) - w).fold(f64::INFINITY, f64::min);
    let rss_at = |cp: f64| {
        let res: Vec<f64> = pos
            .iter()
            .map(|&&(k, w, p)| p.ln() - ballot_bound(b, k, w, 1.0, cp).ln())
            .collect();
        let mean = res.iter().sum::<f64>() / res.len() as f64;
        res.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
    };
    // C′ > −min gap keeps every shape positive; scan on a log scale, then refine
    let lo = (-min_gap).max(0.0) + 1e-3;
    let mut best = (lo, rss_at(lo));
    let mut cp = lo;
    while cp < lo + 1e3 {
        let r = rss_at(cp);
        if r < best.1 {
            best = (cp, r);
        }
        cp = lo + (cp - lo + 0.01) * 1.05;
    }
    let (mut a, mut z) = ((best.0 - 0.2 * (best.0 - lo)).max(lo), best.0 * 1.1 + 0.1);
    for _ in 0..100 {
        let m1 = a + (z - a) / 3.0;
        let m2 = z - (z - a) / 3.0;
        if rss_at(m1) < rss_at(m2) {
            z = m2;
        } else {
            a = m1;
        }
    }
    let cp = 0.5 * (a + z);
    let c = pos
        .iter()
        .map(|&&(k, w, p)| p / ballot_bound(b, k, w, 1.0, cp))
        .fold(0.0, f64::max);
    Ok(BallotFit { c, cp, rss: rss_at(cp) })
}

/// P(some point of the surrogate field leaves the good set).
#[derive(Debug, Clone, Serialize)]
pub struct EscapeEstimate {
    pub a: f64,
    /// Monte Carlo over the top levels, conditional expectation below them.
    pub mc: ProbEstimate,
    /// Full recursion from the root: no sampling at all.
    pub exact: f64,
    pub split_level: u32,
}

fn escape_law(tree: &Tree, b: &Barrier, m: u32) -> EscapeLaw {
    let hi = (b.r..=b.t).map(|j| b.upper(j)).fold(0.0, f64::max).min(1e4) + 12.0;
    let bounds = |j: u32| barrier_eval(b, j);
    EscapeLaw::new(tree, m, &bounds, -60.0, hi, 0.01)
}

/// Escape probability of the surrogate field from the good set of `b`.
pub fn field_escape(profile: &VarianceProfile, b: &Barrier, n: usize, seed: u64, split: u32) -> EscapeEstimate {
    let tree = Tree::from_profile(profile);
    let m = split.min(profile.t);
    let law = escape_law(&tree, b, m);
    let exact = escape_law(&tree, b, 0).escape(0.0);
    let w: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let key = tree.realization(sample_key(seed, i as u64));
            let levels = tree.levels(key, m);
            let out = (b.r.max(1)..=m).any(|j| {
                let (lo, hi) = barrier_eval(b, j);
                levels[j as usize - 1].iter().any(|&v| v < lo || v > hi)
            });
            if out {
                1.0
            } else if m == 0 {
                law.escape(0.0)
            } else {
                law.conditional(&levels[m as usize - 1])
            }
        })
        .collect();
    EscapeEstimate { a: b.a, mc: ProbEstimate::from_weights(&w, Method::Naive), exact, split_level: m }
}

/// Fraction of single walks (one point h) leaving the good set.
pub fn walk_escape_mc(profile: &VarianceProfile, b: &Barrier, n: usize, seed: u64) -> ProbEstimate {
    let w: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let path = gaussian_walk(sample_key(seed, i as u64), profile, b.r.min(profile.t)).expect("r <= t");
            (!in_good_set(&path, b)) as u8 as f64
        })
        .collect();
    ProbEstimate::from_weights(&w, Method::Naive)
}
