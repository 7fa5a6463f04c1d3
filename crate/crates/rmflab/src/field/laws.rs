//! Laws of subtree functionals of the surrogate tree, tabulated by recursion.
//!
//! For deep trees only the top m levels are simulated explicitly. Below a
//! level-m node everything is independent of the rest of the tree, so the
//! quantities an estimator needs (tail of the subtree maximum, escape
//! probability from a barrier, count of leaves above a level, law of the
//! chaos mass) are computed once per configuration by exact recursions on a
//! discretized state space and then reused for every realization.
//!
//! Gaussian increments are discretized by exact cell probabilities on the
//! grid, so every recursion step conserves mass up to the ±10 sd cutoff.

use super::tree::Tree;
use crate::stats::normal_sf;

/// Discretized N(0, sd²) on a lattice of spacing dx, indices −half..=half.
#[derive(Debug, Clone)]
pub struct GaussKernel {
    pub w: Vec<f64>,
    pub half: usize,
}

impl GaussKernel {
    pub fn new(sd: f64, dx: f64) -> Self {
        if sd <= 0.0 {
            return GaussKernel { w: vec![1.0], half: 0 };
        }
        let half = (10.0 * sd / dx).ceil() as usize + 1;
        let mut w = vec![0.0; 2 * half + 1];
        for k in 0..=half {
            // P(ξ ∈ [(k−½)dx, (k+½)dx]) via upper tails, accurate far out
            let lo = if k == 0 { 0.0 } else { (k as f64 - 0.5) * dx / sd };
            let hi = (k as f64 + 0.5) * dx / sd;
            let p = if k == 0 {
                1.0 - 2.0 * normal_sf(hi)
            } else {
                normal_sf(lo) - normal_sf(hi)
            };
            w[half + k] = p;
            w[half - k] = p;
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        GaussKernel { w, half }
    }

    /// out[i] = Σ_k w_k f[i−k], with f = `lo` left of the grid and `hi` right of it.
    pub fn smooth(&self, f: &[f64], lo: f64, hi: f64) -> Vec<f64> {
        let n = f.len() as isize;
        let h = self.half as isize;
        (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for (kk, &w) in self.w.iter().enumerate() {
                    let j = i - (kk as isize - h);
                    let v = if j < 0 {
                        lo
                    } else if j >= n {
                        hi
                    } else {
                        f[j as usize]
                    };
                    acc += w * v;
                }
                acc
            })
            .collect()
    }

    /// Mass convolution on a finite lattice; mass leaving the ends is piled
    /// onto the end cells and reported.
    pub fn spread(&self, mass: &[f64]) -> (Vec<f64>, f64) {
        let n = mass.len() as isize;
        let h = self.half as isize;
        let mut out = vec![0.0; mass.len()];
        let mut lost = 0.0;
        for (i, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (kk, &w) in self.w.iter().enumerate() {
                let j = i as isize + kk as isize - h;
                if j < 0 {
                    out[0] += m * w;
                    lost += m * w;
                } else if j >= n {
                    out[n as usize - 1] += m * w;
                    lost += m * w;
                } else {
                    out[j as usize] += m * w;
                }
            }
        }
        (out, lost)
    }
}

/// 1 − (1 − r)^b without cancellation.
#[inline]
fn any_of(r: f64, b: u32) -> f64 {
    if r >= 1.0 {
        1.0
    } else {
        -(b as f64 * (-r).ln_1p()).exp_m1()
    }
}

/// Tabulated function on x0 + i·dx.
#[derive(Debug, Clone)]
pub struct Table {
    pub x0: f64,
    pub dx: f64,
    pub y: Vec<f64>,
}

impl Table {
    /// Interpolates log-linearly between positive neighbours; `lo`/`hi` outside.
    pub fn eval(&self, x: f64, lo: f64, hi: f64) -> f64 {
        let u = (x - self.x0) / self.dx;
        if u < 0.0 {
            return lo;
        }
        let i = u.floor() as usize;
        if i + 1 >= self.y.len() {
            return hi;
        }
        let f = u - i as f64;
        let (a, b) = (self.y[i], self.y[i + 1]);
        if a > 0.0 && b > 0.0 && a.max(b) < 0.5 {
            (a.ln() * (1.0 - f) + b.ln() * f).exp()
        } else {
            a * (1.0 - f) + b * f
        }
    }
}

fn lower_depth_var(tree: &Tree, m: u32) -> f64 {
    tree.sd[m as usize..].iter().map(|s| s * s).sum()
}

/// Range of relative offsets over which a depth-(t−m) subtree functional is
/// not already saturated: beyond it the maximum is below x with probability
/// < e^{-60} (union bound), and below it every leaf sits above x except with
/// probability < e^{-40}.
fn offset_range(tree: &Tree, m: u32) -> (f64, f64) {
    let s2 = lower_depth_var(tree, m).max(1e-12);
    let d = (tree.count[tree.t as usize] as f64 / tree.count[m as usize] as f64).ln();
    let hi = (2.0 * s2 * (d + 60.0)).sqrt() + 2.0;
    let lo = -9.0 * s2.sqrt() - 1.0;
    (lo, hi)
}

/// Tail of the subtree maximum: T_ℓ(x) = P(max over leaves below a level-ℓ
/// node of (S_leaf − S_node) > x), for ℓ = m..t.
#[derive(Debug, Clone)]
pub struct MaxTailLaw {
    pub m: u32,
    pub t: u32,
    /// `levels[ℓ − m]`; the leaf level is exact and not stored.
    pub levels: Vec<Table>,
}

impl MaxTailLaw {
    pub fn new(tree: &Tree, m: u32, dx: f64) -> Self {
        let t = tree.t;
        assert!(m <= t);
        let (lo, hi) = offset_range(tree, m);
        let n = ((hi - lo) / dx).ceil() as usize + 1;
        let mut levels = Vec::new();
        if m < t {
            let xs: Vec<f64> = (0..n).map(|i| lo + i as f64 * dx).collect();
            // level t−1 in closed form
            let sd = tree.sd[t as usize - 1];
            let b = tree.branch[t as usize - 1];
            let leaf_tail = |x: f64| {
                if sd > 0.0 {
                    normal_sf(x / sd)
                } else if x < 0.0 {
                    1.0
                } else {
                    0.0
                }
            };
            let mut cur: Vec<f64> = xs.iter().map(|&x| any_of(leaf_tail(x), b)).collect();
            let mut stack = vec![cur.clone()];
            for l in (m..t - 1).rev() {
                let k = GaussKernel::new(tree.sd[l as usize], dx);
                let r = k.smooth(&cur, 1.0, 0.0);
                let b = tree.branch[l as usize];
                cur = r.iter().map(|&r| any_of(r, b)).collect();
                stack.push(cur.clone());
            }
            stack.reverse();
            levels = stack.into_iter().map(|y| Table { x0: lo, dx, y }).collect();
        }
        MaxTailLaw { m, t, levels }
    }

    pub fn tail(&self, level: u32, x: f64) -> f64 {
        if level >= self.t {
            return if x < 0.0 { 1.0 } else { 0.0 };
        }
        self.levels[(level - self.m) as usize].eval(x, 1.0, 0.0)
    }

    /// P(max over the whole tree > u | level-m values).
    pub fn conditional(&self, top: &[f64], u: f64) -> f64 {
        let s: f64 = top.iter().map(|&s| (-self.tail(self.m, u - s)).ln_1p()).sum();
        -s.exp_m1()
    }
}

/// Probability that some descendant of a node leaves the barrier.
///
/// `e_ℓ(s)` is tabulated on absolute values s; a level-j node with value
/// outside `bounds(j)` escapes. Cells straddling a barrier count by the
/// fraction of the cell inside.
#[derive(Debug, Clone)]
pub struct EscapeLaw {
    pub m: u32,
    pub table: Table,
}

impl EscapeLaw {
    pub fn new(tree: &Tree, m: u32, bounds: &dyn Fn(u32) -> (f64, f64), s_lo: f64, s_hi: f64, ds: f64) -> Self {
        let t = tree.t;
        let n = ((s_hi - s_lo) / ds).ceil() as usize + 1;
        let mut e = vec![0.0; n];
        for l in (m..t).rev() {
            let j = l + 1;
            let (lb, ub) = bounds(j);
            let g: Vec<f64> = (0..n)
                .map(|i| {
                    let s = s_lo + i as f64 * ds;
                    let (c_lo, c_hi) = (s - 0.5 * ds, s + 0.5 * ds);
                    // exact 1 for interior cells: rounding here compounds over every node
                    let inside = if c_lo >= lb && c_hi <= ub {
                        1.0
                    } else {
                        (c_hi.min(ub) - c_lo.max(lb)).clamp(0.0, ds) / ds
                    };
                    (1.0 - inside) + inside * e[i]
                })
                .collect();
            let k = GaussKernel::new(tree.sd[l as usize], ds);
            let q = k.smooth(&g, g[0], 1.0);
            let b = tree.branch[l as usize];
            e = q.iter().map(|&q| any_of(q, b)).collect();
        }
        EscapeLaw { m, table: Table { x0: s_lo, dx: ds, y: e } }
    }

    pub fn escape(&self, s: f64) -> f64 {
        let lo = self.table.y[0];
        self.table.eval(s, lo, 1.0)
    }

    /// P(some descendant of the level-m nodes escapes | their values).
    pub fn conditional(&self, top: &[f64]) -> f64 {
        let s: f64 = top.iter().map(|&s| (-self.escape(s)).ln_1p()).sum();
        -s.exp_m1()
    }
}

/// Law of the number of leaves with S_leaf − S_node > x below a level-m node,
/// truncated at `kmax` (the last class means "at least kmax").
#[derive(Debug, Clone)]
pub struct CountLaw {
    pub m: u32,
    pub t: u32,
    pub kmax: usize,
    pub x0: f64,
    pub dx: f64,
    /// Cumulative distribution per x, row-major (kmax+1 entries per row).
    cdf: Vec<f64>,
    rows: usize,
}

fn truncated_conv(a: &[f64], b: &[f64], out: &mut [f64]) {
    let kmax = a.len() - 1;
    out.iter_mut().for_each(|v| *v = 0.0);
    for (i, &ai) in a.iter().enumerate().take(kmax) {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(kmax - i) {
            out[i + j] += ai * bj;
        }
    }
    let below: f64 = out[..kmax].iter().sum();
    out[kmax] = (1.0 - below).max(0.0);
}

impl CountLaw {
    pub fn new(tree: &Tree, m: u32, kmax: usize, dx: f64) -> Self {
        let t = tree.t;
        assert!(m <= t && kmax >= 1);
        let width = kmax + 1;
        let (lo, hi) = offset_range(tree, m);
        let n = ((hi - lo) / dx).ceil() as usize + 1;
        if m == t {
            return CountLaw { m, t, kmax, x0: lo, dx, cdf: Vec::new(), rows: 0 };
        }
        let xs: Vec<f64> = (0..n).map(|i| lo + i as f64 * dx).collect();
        let mut q = vec![0.0; n * width];
        let mut p = vec![0.0; n * width];
        let mut tmp = vec![0.0; width];
        // child laws for level t: Bernoulli(P(ξ_t > x))
        let sd = tree.sd[t as usize - 1];
        for (i, &x) in xs.iter().enumerate() {
            let r = if sd > 0.0 { normal_sf(x / sd) } else { (x < 0.0) as u8 as f64 };
            q[i * width] = 1.0 - r;
            q[i * width + 1] += r;
        }
        let mut l = t - 1;
        loop {
            let b = tree.branch[l as usize];
            for i in 0..n {
                let qi = &q[i * width..(i + 1) * width];
                let pi = &mut p[i * width..(i + 1) * width];
                pi.copy_from_slice(qi);
                for _ in 1..b {
                    truncated_conv(pi, qi, &mut tmp);
                    pi.copy_from_slice(&tmp);
                }
            }
            if l == m {
                break;
            }
            // q for the level-l nodes: smooth p over the parent's increment
            let k = GaussKernel::new(tree.sd[l as usize - 1], dx);
            let below = {
                let leaves = tree.count[t as usize] / tree.count[l as usize - 1];
                (leaves as usize).min(kmax)
            };
            let h = k.half as isize;
            q.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n as isize {
                let qi = &mut q[i as usize * width..(i as usize + 1) * width];
                for (kk, &w) in k.w.iter().enumerate() {
                    let j = i - (kk as isize - h);
                    if j < 0 {
                        qi[below] += w;
                    } else if j >= n as isize {
                        qi[0] += w;
                    } else {
                        let pj = &p[j as usize * width..(j as usize + 1) * width];
                        for (a, &c) in qi.iter_mut().zip(pj) {
                            *a += w * c;
                        }
                    }
                }
            }
            l -= 1;
        }
        let mut cdf = p;
        for row in cdf.chunks_mut(width) {
            let mut acc = 0.0;
            for v in row.iter_mut() {
                acc += *v;
                *v = acc;
            }
            let last = row[kmax];
            row.iter_mut().for_each(|v| *v /= last);
        }
        CountLaw { m, t, kmax, x0: lo, dx, cdf, rows: n }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.cdf[i * (self.kmax + 1)..(i + 1) * (self.kmax + 1)]
    }

    /// P(count > 0) at offset x.
    pub fn positive(&self, x: f64) -> f64 {
        if self.m == self.t {
            return (x < 0.0) as u8 as f64;
        }
        let u = (x - self.x0) / self.dx;
        if u < 0.0 {
            return 1.0;
        }
        let i = u.floor() as usize;
        if i + 1 >= self.rows {
            return 0.0;
        }
        let f = u - i as f64;
        1.0 - (self.row(i)[0] * (1.0 - f) + self.row(i + 1)[0] * f)
    }

    /// Draw a count at offset x from two uniforms.
    pub fn sample(&self, x: f64, u_row: f64, u: f64) -> usize {
        if self.m == self.t {
            return (x < 0.0) as usize;
        }
        let v = (x - self.x0) / self.dx;
        if v < 0.0 {
            return self.kmax;
        }
        let i = v.floor() as usize;
        if i + 1 >= self.rows {
            return 0;
        }
        let r = if u_row < v - i as f64 { i + 1 } else { i };
        let row = self.row(r);
        row.partition_point(|&c| c <= u).min(self.kmax)
    }
}

/// Law of log W for W = N_m/N_t · Σ_{leaves below a level-m node} e^{γ(S_leaf − S_node)}.
#[derive(Debug, Clone)]
pub struct LogMassLaw {
    pub y0: f64,
    pub dy: f64,
    pub mass: Vec<f64>,
    cdf: Vec<f64>,
    /// Mass that hit the ends of the lattice during the recursion.
    pub lost: f64,
}

/// Law of log(e^X + e^Y) for independent X ~ p, Y ~ q on one lattice.
fn lse_law(p: &[f64], q: &[f64], dy: f64) -> (Vec<f64>, f64) {
    let n = p.len();
    let window = (25.0 / dy).ceil() as usize;
    // offsets log(1 + e^{−d·dy}) in lattice units
    let off: Vec<(usize, f64)> = (0..=window)
        .map(|d| {
            let o = (-(d as f64) * dy).exp().ln_1p() / dy;
            (o.floor() as usize, o - o.floor())
        })
        .collect();
    let mut out = vec![0.0; n];
    let mut lost = 0.0;
    let mut put = |idx: usize, m: f64, out: &mut Vec<f64>| {
        if idx < n {
            out[idx] += m;
        } else {
            out[n - 1] += m;
            lost += m;
        }
    };
    let mut pc = vec![0.0; n + 1];
    let mut qc = vec![0.0; n + 1];
    for i in 0..n {
        pc[i + 1] = pc[i] + p[i];
        qc[i + 1] = qc[i] + q[i];
    }
    for i in 0..n {
        // pairs where one side is far below the other: the max alone
        if i > window {
            let far = p[i] * qc[i - window] + q[i] * pc[i - window];
            put(i, far, &mut out);
        }
        if p[i] == 0.0 {
            continue;
        }
        let jlo = i.saturating_sub(window);
        let jhi = (i + window).min(n - 1);
        for j in jlo..=jhi {
            let m = p[i] * q[j];
            if m == 0.0 {
                continue;
            }
            let (hi, d) = if i >= j { (i, i - j) } else { (j, j - i) };
            let (o, f) = off[d];
            put(hi + o, m * (1.0 - f), &mut out);
            put(hi + o + 1, m * f, &mut out);
        }
    }
    (out, lost)
}

/// Shift a lattice law by −c (c ≥ 0), splitting mass linearly.
fn shift_down(p: &[f64], c: f64, dy: f64) -> (Vec<f64>, f64) {
    let o = c / dy;
    let io = o.floor() as usize;
    let f = o - io as f64;
    let mut out = vec![0.0; p.len()];
    let mut lost = 0.0;
    for (i, &m) in p.iter().enumerate() {
        // target position i − o lies between i−io−1 and i−io
        let a = i as isize - io as isize;
        for (idx, w) in [(a, 1.0 - f), (a - 1, f)] {
            if idx < 0 {
                out[0] += m * w;
                lost += m * w;
            } else {
                out[idx as usize] += m * w;
            }
        }
    }
    (out, lost)
}

impl LogMassLaw {
    pub fn new(tree: &Tree, m: u32, gamma: f64, dy: f64) -> Self {
        let t = tree.t;
        let s2 = lower_depth_var(tree, m);
        let d = (tree.count[t as usize] as f64 / tree.count[m as usize] as f64).ln();
        let y_hi = gamma * (2.0 * s2 * (d + 50.0)).sqrt() + 5.0;
        let y_lo = -10.0 - 4.0 * gamma * s2.sqrt();
        let n = ((y_hi - y_lo) / dy).ceil() as usize + 1;
        let zero = ((-y_lo) / dy).round() as usize;
        let y0 = -(zero as f64) * dy;
        let mut mass = vec![0.0; n];
        mass[zero] = 1.0;
        let mut lost = 0.0;
        for l in (m..t).rev() {
            let k = GaussKernel::new(gamma * tree.sd[l as usize], dy);
            let (x, lx) = k.spread(&mass);
            lost += lx;
            let b = tree.branch[l as usize];
            let mut acc = x.clone();
            for _ in 1..b {
                let (s, ls) = lse_law(&acc, &x, dy);
                acc = s;
                lost += ls;
            }
            let (s, ls) = shift_down(&acc, (b as f64).ln(), dy);
            mass = s;
            lost += ls;
        }
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &v in &mass {
            acc += v;
            cdf.push(acc);
        }
        let total = acc;
        cdf.iter_mut().for_each(|v| *v /= total);
        LogMassLaw { y0, dy, mass, cdf, lost }
    }

    pub fn sample(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        self.y0 + i as f64 * self.dy
    }

    /// E W^q under the tabulated law.
    pub fn moment(&self, q: f64) -> f64 {
        let total: f64 = self.mass.iter().sum();
        self.mass
            .iter()
            .enumerate()
            .map(|(i, &m)| m * (q * (self.y0 + i as f64 * self.dy)).exp())
            .sum::<f64>()
            / total
    }
}
