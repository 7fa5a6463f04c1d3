//! Nested branching tree behind the Gaussian surrogate.
//!
//! Level j splits [0,1] into N_j equal blocks, N_j = b_1⋯b_j with each
//! b_j ∈ {2, 3} picked greedily so that log N_j stays within about 0.2 of j.
//! Nesting makes every level-j block a union of level-(j+1) blocks, which is
//! what lets subtree laws be tabulated (see [`super::laws`]).

use super::{Backend, FieldGrid};
use crate::primes::VarianceProfile;
use crate::rng::{derive, node_normal};

const TREE_LABEL: u64 = 0x7472_6565;

#[derive(Debug, Clone)]
pub struct Tree {
    pub t: u32,
    /// `branch[j-1]` = b_j.
    pub branch: Vec<u32>,
    /// `count[j]` = N_j for j = 0..=t.
    pub count: Vec<u64>,
    /// `sd[j-1]` = standard deviation of a level-j increment.
    pub sd: Vec<f64>,
}

impl Tree {
    /// Tree with increment variances `var[j-1]` for j = 1..=var.len().
    pub fn new(var: &[f64]) -> Self {
        assert!(var.len() <= 40, "tree depth {} overflows the node index", var.len());
        let mut count = vec![1u64];
        let mut branch = Vec::with_capacity(var.len());
        for j in 1..=var.len() {
            let n = *count.last().expect("root");
            let err = |b: u64| ((n * b) as f64).ln() - j as f64;
            let b = if err(2).abs() <= err(3).abs() { 2 } else { 3 };
            branch.push(b as u32);
            count.push(n * b);
        }
        let sd = var.iter().map(|&v| v.max(0.0).sqrt()).collect();
        Tree { t: var.len() as u32, branch, count, sd }
    }

    /// Tree carrying the head-cut field variances of a profile.
    pub fn from_profile(p: &VarianceProfile) -> Self {
        Tree::new(&p.v_field)
    }

    /// Key of one surrogate realization.
    pub fn realization(&self, seed: u64) -> u64 {
        derive(seed, TREE_LABEL)
    }

    /// Level-j block containing h.
    pub fn node_of(&self, h: f64, j: u32) -> u64 {
        let n = self.count[self.t as usize];
        let leaf = ((h * n as f64).floor().max(0.0) as u64).min(n - 1);
        leaf / (n / self.count[j as usize])
    }

    /// Increment carried by node i at level j.
    #[inline]
    pub fn increment(&self, key: u64, j: u32, i: u64) -> f64 {
        self.sd[j as usize - 1] * node_normal(key, j as u64, i)
    }

    /// S_m at every node of level m, built top down.
    pub fn level_values(&self, key: u64, m: u32) -> Vec<f64> {
        let mut vals = vec![0.0];
        for j in 1..=m {
            let b = self.branch[j as usize - 1] as usize;
            let next: Vec<f64> = (0..vals.len() * b)
                .map(|i| vals[i / b] + self.increment(key, j, i as u64))
                .collect();
            vals = next;
        }
        vals
    }

    /// All levels 1..=m, `out[j-1][i]` = S_j at node i.
    pub fn levels(&self, key: u64, m: u32) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(m as usize);
        for j in 1..=m {
            let b = self.branch[j as usize - 1] as usize;
            let n = self.count[j as usize] as usize;
            let row = (0..n)
                .map(|i| {
                    let parent = if j == 1 { 0.0 } else { out[j as usize - 2][i / b] };
                    parent + self.increment(key, j, i as u64)
                })
                .collect();
            out.push(row);
        }
        out
    }

    /// S_1..S_t along the path to the leaf containing h.
    pub fn path(&self, key: u64, h: f64) -> Vec<f64> {
        let mut s = 0.0;
        (1..=self.t)
            .map(|j| {
                s += self.increment(key, j, self.node_of(h, j));
                s
            })
            .collect()
    }

    /// Surrogate field sampled on a grid.
    pub fn grid(&self, key: u64, grid: &[f64], sigma: f64) -> FieldGrid {
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.t as usize);
        for j in 1..=self.t {
            let mut cache: Option<(u64, f64)> = None;
            let row: Vec<f64> = grid
                .iter()
                .enumerate()
                .map(|(k, &h)| {
                    let i = self.node_of(h, j);
                    let y = match cache {
                        Some((ci, cy)) if ci == i => cy,
                        _ => {
                            let y = self.increment(key, j, i);
                            cache = Some((i, y));
                            y
                        }
                    };
                    let p = if j == 1 { 0.0 } else { values[j as usize - 2][k] };
                    p + y
                })
                .collect();
            values.push(row);
        }
        FieldGrid { sigma, t: self.t, grid: grid.to_vec(), values, backend: Backend::Gaussian }
    }
}
