//! The log-Euler-product field S_j(σ+ih) on grids over h ∈ [0,1].
//!
//! Two backends: true primes through a Steinhaus sample, and a Gaussian
//! branching-random-walk surrogate built on [`tree::Tree`].

pub mod kernel;
pub mod laws;
pub mod tree;

use rayon::prelude::*;
use serde::Serialize;

use crate::arith::SteinhausSample;
use crate::error::{capacity, Error, Result};
use crate::num::neumaier;
use crate::primes::{scale_bounds, scale_lower, PrimeTable, VarianceProfile, DEFAULT_C0};
use kernel::{Angles, ScaleData};
pub use tree::Tree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Arithmetic,
    Gaussian,
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arithmetic" => Ok(Backend::Arithmetic),
            "gaussian" => Ok(Backend::Gaussian),
            _ => Err(Error::Usage(format!("unknown backend '{s}' (arithmetic|gaussian)"))),
        }
    }
}

/// Field values S_j(σ+ih) for j = 1..t on a grid of h.
#[derive(Debug, Clone, Serialize)]
pub struct FieldGrid {
    pub sigma: f64,
    pub t: u32,
    pub grid: Vec<f64>,
    /// `values[j-1][k]` = S_j at `grid[k]`.
    pub values: Vec<Vec<f64>>,
    pub backend: Backend,
}

impl FieldGrid {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// S_j at grid point k, with S_0 = 0.
    pub fn at(&self, j: u32, k: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.values[j as usize - 1][k]
        }
    }

    /// Y_j = S_j − S_{j−1} at grid point k.
    pub fn increment(&self, j: u32, k: usize) -> f64 {
        self.at(j, k) - self.at(j - 1, k)
    }

    /// Top-scale values S_t.
    pub fn top(&self) -> &[f64] {
        match self.values.last() {
            Some(v) => v,
            None => &[],
        }
    }

    /// Identically zero field, mostly for tests.
    pub fn zeros(sigma: f64, t: u32, n_grid: usize, backend: Backend) -> Self {
        FieldGrid {
            sigma,
            t,
            grid: uniform_grid(n_grid),
            values: vec![vec![0.0; n_grid]; t as usize],
            backend,
        }
    }
}

/// n equally spaced points from 0 to 1 inclusive.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
    }
}

/// Smallest grid size resolving the correlation length e^{-t}.
pub fn min_grid(t: u32) -> usize {
    (t as f64).exp().ceil() as usize
}

pub fn default_grid(t: u32) -> usize {
    8 * min_grid(t)
}

fn check_grid(t: u32, n_grid: usize) -> Result<()> {
    if n_grid < min_grid(t) {
        return Err(Error::Usage(format!(
            "grid of {n_grid} points under-resolves t = {t}; need at least {}",
            min_grid(t)
        )));
    }
    Ok(())
}

fn check_scales(table: &PrimeTable, t: u32) -> Result<()> {
    let need = scale_bounds(t).1;
    if need > table.limit as f64 {
        return capacity(format!(
            "t = {t} needs primes up to exp(e^{t}) ≈ {need:.3e}; table stops at {}",
            table.limit
        ));
    }
    Ok(())
}

#[inline]
fn x_p(theta: f64, sigma: f64, h: f64, l: f64) -> f64 {
    let phi = theta - h * l;
    (-sigma * l).exp() * phi.cos() + 0.5 * (-2.0 * sigma * l).exp() * (2.0 * phi).cos()
}

/// S_t(σ+ih) summed prime by prime over C0 < p <= exp(e^t). Reference path.
pub fn eval_s(sample: &SteinhausSample, sigma: f64, h: f64, t: u32) -> Result<f64> {
    eval_s_cut(sample, sigma, h, t, DEFAULT_C0)
}

pub fn eval_s_cut(sample: &SteinhausSample, sigma: f64, h: f64, t: u32, c0: u64) -> Result<f64> {
    let table = sample.table;
    check_scales(table, t)?;
    let r = table.range(c0 as f64, scale_bounds(t).1);
    Ok(neumaier(r.map(|i| x_p(sample.angle(i), sigma, h, table.logs[i]))))
}

/// log|F_y(σ+ih)| over all primes p <= y.
pub fn eval_log_f(sample: &SteinhausSample, sigma: f64, h: f64, y: u64) -> Result<f64> {
    let table = sample.table;
    if y > table.limit {
        return capacity(format!("y = {y} beyond table limit {}", table.limit));
    }
    let r = table.range(0.0, y as f64);
    let mut terms = Vec::with_capacity(r.len());
    for i in r {
        let l = table.logs[i];
        let rho = (-sigma * l).exp();
        let phi = sample.angle(i) - h * l;
        // |1 − ρe^{iφ}|² = 1 − 2ρ cos φ + ρ²
        let m2 = 1.0 - 2.0 * rho * phi.cos() + rho * rho;
        if m2 < 1e-28 {
            return Err(Error::Numeric(format!(
                "Euler factor at p = {} is singular",
                table.primes[i]
            )));
        }
        terms.push(-0.5 * m2.ln());
    }
    Ok(neumaier(terms))
}

/// Lipschitz constant in h used for log|F_y|: 2 Σ_{p<=y} p^{-σ} log p.
pub fn log_f_lipschitz(table: &PrimeTable, sigma: f64, y: u64) -> f64 {
    let r = table.range(0.0, y as f64);
    2.0 * neumaier(table.logs[r].iter().map(|&l| (-sigma * l).exp() * l))
}

/// Per-scale prime coefficients, reusable across samples.
#[derive(Debug, Clone)]
pub struct FieldPlan {
    pub sigma: f64,
    pub t: u32,
    pub c0: u64,
    pub scales: Vec<ScaleData>,
}

impl FieldPlan {
    pub fn new(table: &PrimeTable, sigma: f64, t: u32, c0: u64) -> Result<Self> {
        check_scales(table, t)?;
        let scales = (1..=t)
            .map(|j| {
                let r = table.range(scale_lower(j, c0), scale_bounds(j).1);
                ScaleData::new(r.start, &table.logs[r], sigma)
            })
            .collect();
        Ok(FieldPlan { sigma, t, c0, scales })
    }

    /// Field grid for a batch of samples; angles are `angles[s]`.
    pub fn grids(&self, angles: &[Angles], grid: &[f64]) -> Vec<FieldGrid> {
        let n = grid.len();
        let (h0, dh) = grid_step(grid);
        let mut out: Vec<FieldGrid> = angles
            .iter()
            .map(|_| FieldGrid {
                sigma: self.sigma,
                t: self.t,
                grid: grid.to_vec(),
                values: Vec::with_capacity(self.t as usize),
                backend: Backend::Arithmetic,
            })
            .collect();
        for sd in &self.scales {
            let mut acc = vec![vec![0.0; n]; angles.len()];
            kernel::grid_accumulate(angles, sd, h0, dh, n, &mut acc);
            for (g, inc) in out.iter_mut().zip(acc) {
                let prev = g.values.last().cloned().unwrap_or_else(|| vec![0.0; n]);
                g.values.push(prev.iter().zip(&inc).map(|(p, y)| p + y - sd.bsum).collect());
            }
        }
        out
    }

    /// Field grid for one sample, split over h-chunks in parallel.
    pub fn grid(&self, sample: &SteinhausSample, grid: &[f64]) -> FieldGrid {
        const CHUNK: usize = 256;
        let n = grid.len();
        let angles = angles_of(sample);
        let pieces: Vec<FieldGrid> = grid
            .par_chunks(CHUNK)
            .map(|g| self.grids(&[angles], g).pop().expect("one sample"))
            .collect();
        let mut values = vec![Vec::with_capacity(n); self.t as usize];
        for p in pieces {
            for (v, pv) in values.iter_mut().zip(p.values) {
                v.extend(pv);
            }
        }
        FieldGrid { sigma: self.sigma, t: self.t, grid: grid.to_vec(), values, backend: Backend::Arithmetic }
    }

    /// S_t at arbitrary points for a batch of samples; `out[s][k]` is sample s at `hs[k]`.
    pub fn points(&self, angles: &[Angles], hs: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(hs.len()); angles.len()];
        for &h in hs {
            for (o, g) in out.iter_mut().zip(self.grids(angles, &[h])) {
                o.push(g.top()[0]);
            }
        }
        out
    }

    /// Increments Y_j(σ) at h = 0 for keyed samples, single precision kernel.
    pub fn increments_at_zero(&self, j: u32, keys: &[u64]) -> Vec<f64> {
        let sd = &self.scales[j as usize - 1];
        let mut out = vec![0.0; keys.len()];
        kernel::point_accumulate(keys, sd, &mut out);
        out.iter().map(|v| v - sd.bsum).collect()
    }
}

pub fn angles_of<'a>(sample: &'a SteinhausSample) -> Angles<'a> {
    match sample.stored() {
        Some(v) => Angles::Stored(v),
        None => Angles::Keyed(sample.key()),
    }
}

/// Start and spacing of an equally spaced grid.
fn grid_step(grid: &[f64]) -> (f64, f64) {
    match grid {
        [] => (0.0, 0.0),
        [h] => (*h, 0.0),
        _ => (grid[0], (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64),
    }
}

/// All scales j = 1..t of the arithmetic field on `n_grid` equally spaced points.
pub fn eval_grid(sample: &SteinhausSample, sigma: f64, t: u32, n_grid: usize) -> Result<FieldGrid> {
    check_grid(t, n_grid)?;
    let plan = FieldPlan::new(sample.table, sigma, t, DEFAULT_C0)?;
    Ok(plan.grid(sample, &uniform_grid(n_grid)))
}

/// Gaussian surrogate on `n_grid` equally spaced points.
///
/// Increments have the head-cut variances `profile.field(j)`, so the
/// surrogate matches the arithmetic field's second moments scale by scale.
pub fn gaussian_surrogate_grid(seed: u64, profile: &VarianceProfile, n_grid: usize) -> Result<FieldGrid> {
    check_grid(profile.t, n_grid)?;
    let tree = Tree::from_profile(profile);
    Ok(tree.grid(tree.realization(seed), &uniform_grid(n_grid), profile.sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::SteinhausSample;
    use crate::primes::{sieve_primes, variance_profile};

    fn table() -> PrimeTable {
        sieve_primes(scale_bounds(2).1 as u64 + 1, false).unwrap()
    }

    #[test]
    fn zero_angles_give_deterministic_sum() {
        let tb = table();
        let s = SteinhausSample::from_turns(&tb, vec![0; tb.len()]).unwrap();
        let got = eval_s(&s, 0.5, 0.0, 2).unwrap();
        let want: f64 = tb
            .primes
            .iter()
            .filter(|&&p| p > DEFAULT_C0 && (p as f64) <= scale_bounds(2).1)
            .map(|&p| (p as f64).powf(-0.5) + 0.5 / p as f64)
            .sum();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn single_factor_log_f() {
        let tb = table();
        let s = SteinhausSample::from_turns(&tb, vec![0; tb.len()]).unwrap();
        let got = eval_log_f(&s, 0.5, 0.0, 2).unwrap();
        assert!((got + (1.0 - 0.5f64.sqrt()).ln()).abs() < 1e-14);
    }

    #[test]
    fn grid_matches_pointwise_reference() {
        let tb = table();
        for seed in 0..3 {
            let s = SteinhausSample::lazy(&tb, seed);
            let g = eval_grid(&s, 0.5, 2, 400).unwrap();
            for k in [0, 7, 255, 256, 399] {
                let want = eval_s(&s, 0.5, g.grid[k], 2).unwrap();
                assert!((g.at(2, k) - want).abs() < 1e-10);
                let want1 = eval_s(&s, 0.5, g.grid[k], 1).unwrap();
                assert!((g.at(1, k) - want1).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn under_resolved_grid_refused() {
        let tb = table();
        let s = SteinhausSample::lazy(&tb, 1);
        assert!(matches!(eval_grid(&s, 0.5, 2, 7), Err(Error::Usage(_))));
    }

    #[test]
    fn too_large_t_is_capacity_error() {
        let tb = table();
        let s = SteinhausSample::lazy(&tb, 1);
        assert!(matches!(eval_s(&s, 0.5, 0.0, 3), Err(Error::Capacity(_))));
    }

    #[test]
    fn surrogate_blocks_are_constant() {
        let p = variance_profile(0.5, 6, DEFAULT_C0, None);
        let g = gaussian_surrogate_grid(3, &p, default_grid(6)).unwrap();
        let tree = Tree::from_profile(&p);
        for j in 1..=6u32 {
            for k in 1..g.len() {
                if tree.node_of(g.grid[k], j) == tree.node_of(g.grid[k - 1], j) {
                    assert_eq!(g.at(j, k), g.at(j, k - 1));
                }
            }
        }
    }
}
